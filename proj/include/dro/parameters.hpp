#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dro/tensor.hpp"

namespace dro {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
};

/// Named registry of trainable tensors. Names are unique dotted paths such as
/// "depth_gru.cell.z.weight_h".
template <typename T>
class ParameterSet {
 public:
  Tensor<T> add(const std::string& name, const Shape& shape) {
    return add(name, Tensor<T>::zeros(shape, true));
  }
  Tensor<T> add(const std::string& name, Tensor<T> tensor) {
    for (const auto& p : params_)
      if (p.name == name) throw ConfigError("duplicate parameter name: " + name);
    if (!tensor.requires_grad()) throw ConfigError("parameter " + name + " must require gradients");
    params_.push_back({name, tensor});
    return tensor;
  }

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
  }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }

  const Parameter<T>* find(const std::string& name) const {
    for (const auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  void fill(T v) {
    for (auto& p : params_)
      for (auto& x : p.tensor.mutable_data()) x = v;
  }

  /// Scales all gradients so their global L2 norm is at most `max_norm`; returns the norm before clipping.
  double clip_grad_norm(double max_norm) {
    double sq = 0;
    for (auto& p : params_)
      for (T g : p.tensor.grad()) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0) {
      const T s = static_cast<T>(max_norm / norm);
      for (auto& p : params_)
        if (p.tensor.has_grad())
          for (T& g : p.tensor.mutable_grad()) g *= s;
    }
    return norm;
  }

 private:
  std::vector<Parameter<T>> params_;
};

}  // namespace dro
