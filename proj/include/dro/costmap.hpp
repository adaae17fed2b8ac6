#pragma once

// Feature-metric cost maps.
//
// For a reference feature map F0, a context feature map Fi, the reference
// depth D and the reference-to-context transform T_i, the cost at pixel x is
// the channel-wise L2 distance between F0(x) and Fi sampled at the
// reprojection of x. Pixels whose reprojection falls behind the context camera
// or outside its frame carry zero cost and zero gradient; the mask is kept
// alongside the values.

#include <vector>

#include "dro/geometry.hpp"
#include "dro/sampling.hpp"

namespace dro {

template <typename T>
struct CostMap {
  Tensor<T> values;  // 1xHxW, >= 0
  Tensor<T> valid;   // 1xHxW, 0/1, constant
};

/// sqrt(s + eps) - sqrt(eps): exactly zero at zero residual, finite slope.
inline constexpr double kCostEps = 1e-12;

template <typename T>
CostMap<T> build_cost(const Tensor<T>& f0, const Tensor<T>& fi, const Tensor<T>& depth, const Tensor<T>& rt,
                      const Intrinsics& k_feat) {
  if (f0.rank() != 3 || f0.shape() != fi.shape())
    throw DimensionError("cost features must share a CxHxW shape, got " + shape_str(f0.shape()) + " and " +
                         shape_str(fi.shape()));
  if (depth.rank() != 3 || depth.dim(1) != f0.dim(1) || depth.dim(2) != f0.dim(2))
    throw DimensionError("depth " + shape_str(depth.shape()) + " is not at feature resolution " +
                         shape_str(f0.shape()));
  auto [coords, valid] = warp_coords(depth, rt, k_feat);
  auto sampled = bilinear_sample(fi, coords).first;
  auto residual = sampled - f0;
  auto sq = reduce(square(residual), ReduceOp::sum, {0});
  const T eps = static_cast<T>(kCostEps);
  auto norm = add_scalar(sqrt(add_scalar(sq, eps)), -std::sqrt(eps));
  return {norm * valid, valid};
}

/// Per-pixel mean over the views that see the pixel; a pixel seen by no view
/// has cost 0 and valid 0.
template <typename T>
CostMap<T> average_cost(const std::vector<CostMap<T>>& costs) {
  if (costs.empty()) throw ConfigError("average_cost needs at least one cost map");
  if (costs.size() == 1) return costs.front();
  for (const auto& c : costs)
    if (c.values.shape() != costs.front().values.shape())
      throw DimensionError("average_cost shape mismatch");
  Tensor<T> total = costs[0].values;
  std::vector<T> count(costs[0].valid.data().begin(), costs[0].valid.data().end());
  for (std::size_t i = 1; i < costs.size(); ++i) {
    total = total + costs[i].values;
    const auto v = costs[i].valid.data();
    for (std::size_t k = 0; k < count.size(); ++k) count[k] += v[k];
  }
  std::vector<T> denom(count.size()), valid(count.size());
  for (std::size_t k = 0; k < count.size(); ++k) {
    denom[k] = count[k] > T(0) ? count[k] : T(1);
    valid[k] = count[k] > T(0) ? T(1) : T(0);
  }
  const Shape& s = costs[0].values.shape();
  return {total / Tensor<T>::from(s, std::move(denom)), Tensor<T>::from(s, std::move(valid))};
}

/// Mean cost over valid pixels (0 when no pixel is valid).
template <typename T>
double mean_valid_cost(const CostMap<T>& c) {
  double s = 0, n = 0;
  const auto v = c.values.data();
  const auto m = c.valid.data();
  for (std::size_t k = 0; k < v.size(); ++k) {
    s += static_cast<double>(v[k]) * m[k];
    n += m[k];
  }
  return n > 0 ? s / n : 0.0;
}

}  // namespace dro
