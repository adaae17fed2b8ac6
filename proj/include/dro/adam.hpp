#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "dro/parameters.hpp"

namespace dro {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment buffers, one pair per parameter in registry order.
template <typename T>
struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<T>> m, v;

  void init(const ParameterSet<T>& params) {
    step = 0;
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p.tensor.numel(), T(0));
      v.emplace_back(p.tensor.numel(), T(0));
    }
  }
};

/// One bias-corrected Adam update. Parameters that received no gradient are
/// treated as having a zero gradient.
template <typename T>
void adam_step(ParameterSet<T>& params, AdamState<T>& state, const AdamOptions& opt) {
  if (!(opt.lr > 0)) throw ConfigError("Adam learning rate must be positive");
  if (state.m.size() != params.size()) state.init(params);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& w = params[i].tensor;
    auto val = w.mutable_data();
    auto g = w.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < val.size(); ++k) {
      const double gk = g.empty() ? 0.0 : static_cast<double>(g[k]);
      const double mk = opt.beta1 * m[k] + (1.0 - opt.beta1) * gk;
      const double vk = opt.beta2 * v[k] + (1.0 - opt.beta2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      val[k] = static_cast<T>(val[k] - opt.lr * (mk / c1) / (std::sqrt(vk / c2) + opt.eps));
    }
  }
}

}  // namespace dro
