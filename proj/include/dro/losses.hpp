#pragma once

// Training objectives. Stage outputs are discounted by gamma^(m - s), where s
// is the 1-based stage index and m the number of stages. Depth maps from the
// optimizer live at 1/8 resolution and are upsampled (bilinear, half-pixel
// centres) to image resolution before any comparison or warping.

#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "dro/costmap.hpp"
#include "dro/geometry.hpp"
#include "dro/sampling.hpp"

namespace dro {

struct LossWeights {
  double gamma = 0.85;
  double alpha = 0.85;
  double lambda = 0.01;
};

inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// A scalar loss and its undiscounted per-stage values.
template <typename T>
struct StagedLoss {
  Tensor<T> total;
  std::vector<double> stages;
};

template <typename T>
Tensor<T> upsample_depth(const Tensor<T>& depth, int height, int width) {
  if (depth.dim(1) == height && depth.dim(2) == width) return depth;
  return resize_bilinear(depth, height, width);
}

namespace detail {

inline double stage_weight(double gamma, std::size_t s, std::size_t m) {
  return std::pow(gamma, static_cast<double>(m - 1 - s));
}

template <typename T>
Tensor<T> positive_mask(const Tensor<T>& x) {
  std::vector<T> m(x.numel());
  const auto v = x.data();
  for (std::size_t k = 0; k < m.size(); ++k) m[k] = v[k] > T(0) ? T(1) : T(0);
  return Tensor<T>::from(x.shape(), std::move(m));
}

template <typename T>
double mask_count(const Tensor<T>& m) {
  double n = 0;
  for (T v : m.data()) n += static_cast<double>(v);
  return n;
}

template <typename T>
Tensor<T> masked_mean(const Tensor<T>& x, const Tensor<T>& mask, double count) {
  return mul_scalar(sum(x * mask), static_cast<T>(1.0 / count));
}

}  // namespace detail

/// sum_s gamma^(m-s) * per_stage[s].
template <typename T>
StagedLoss<T> discount_stages(const std::vector<Tensor<T>>& per_stage, double gamma) {
  StagedLoss<T> out;
  const std::size_t m = per_stage.size();
  for (std::size_t s = 0; s < m; ++s) {
    out.stages.push_back(static_cast<double>(per_stage[s].item()));
    auto w = mul_scalar(per_stage[s], static_cast<T>(detail::stage_weight(gamma, s, m)));
    out.total = out.total.defined() ? out.total + w : w;
  }
  if (!out.total.defined()) out.total = Tensor<T>::scalar(T(0));
  return out;
}

/// sum_s gamma^(m-s) * mean over valid pixels of |D^s - D_gt|. The valid mask
/// defaults to gt > 0.
template <typename T>
StagedLoss<T> loss_depth(const std::vector<Tensor<T>>& preds, const Tensor<T>& gt, double gamma = 0.85,
                         const Tensor<T>* valid_mask = nullptr) {
  if (gt.rank() != 3 || gt.dim(0) != 1) throw DimensionError("loss_depth expects a 1xHxW ground truth");
  const Tensor<T> mask = valid_mask ? *valid_mask : detail::positive_mask(gt);
  if (mask.shape() != gt.shape()) throw DimensionError("loss_depth mask shape mismatch");
  const double count = detail::mask_count(mask);
  if (count <= 0) throw DomainError("loss_depth: empty valid mask");
  std::vector<Tensor<T>> per;
  for (const auto& p : preds) {
    auto up = upsample_depth(p, gt.dim(1), gt.dim(2));
    per.push_back(detail::masked_mean(abs(up - gt), mask, count));
  }
  return discount_stages(per, gamma);
}

/// Reprojection loss for one pose: mean over pixels valid under both poses of
/// the L1 distance between the projections under `xi` and under `gt`.
template <typename T>
Tensor<T> reprojection_error(const Tensor<T>& xi, const Pose& gt, const Tensor<T>& gt_depth, const Intrinsics& K) {
  const auto gt_valid = detail::positive_mask(gt_depth);
  std::vector<T> safe(gt_depth.data().begin(), gt_depth.data().end());
  for (auto& d : safe)
    if (!(d > T(0))) d = T(1);
  const auto depth = Tensor<T>::from(gt_depth.shape(), std::move(safe));
  Tensor<T> front_p, front_g;
  auto pred = warp_coords(depth, se3_exp(xi), K, &front_p).first;
  Tensor<T> target;
  {
    NoGradGuard ng;
    target = warp_coords(depth, pose_tensor<T>(gt), K, &front_g).first;
  }
  auto mask = gt_valid * front_p * front_g;
  const double count = detail::mask_count(mask);
  if (count <= 0) throw DomainError("loss_pose: no pixel is valid under both projections");
  return detail::masked_mean(reduce(abs(pred - target), ReduceOp::sum, {0}), mask, count);
}

/// sum_s gamma^(m-s) * (1/N) sum_i reprojection_error(xi^s_i, gt_i).
template <typename T>
StagedLoss<T> loss_pose(const std::vector<std::vector<Tensor<T>>>& preds, const Tensor<T>& gt_depth,
                        const std::vector<Pose>& gt_poses, const Intrinsics& K, double gamma = 0.85) {
  std::vector<Tensor<T>> per;
  for (const auto& stage : preds) {
    if (stage.size() != gt_poses.size()) throw DimensionError("loss_pose: view count mismatch");
    Tensor<T> acc;
    for (std::size_t i = 0; i < stage.size(); ++i) {
      auto e = reprojection_error(stage[i], gt_poses[i], gt_depth, K);
      acc = acc.defined() ? acc + e : e;
    }
    per.push_back(mul_scalar(acc, static_cast<T>(1.0 / stage.size())));
  }
  return discount_stages(per, gamma);
}

/// Per-pixel SSIM (CxHxW) with 3x3 mean-filter statistics.
template <typename T>
Tensor<T> ssim(const Tensor<T>& a, const Tensor<T>& b, double c1 = kSsimC1, double c2 = kSsimC2) {
  if (a.shape() != b.shape()) throw DimensionError("ssim inputs differ in shape");
  const auto mu_a = box_filter3x3(a), mu_b = box_filter3x3(b);
  const auto var_a = box_filter3x3(a * a) - mu_a * mu_a;
  const auto var_b = box_filter3x3(b * b) - mu_b * mu_b;
  const auto cov = box_filter3x3(a * b) - mu_a * mu_b;
  const T C1 = static_cast<T>(c1), C2 = static_cast<T>(c2);
  auto num = add_scalar(mul_scalar(mu_a * mu_b, T(2)), C1) * add_scalar(mul_scalar(cov, T(2)), C2);
  auto den = add_scalar(mu_a * mu_a + mu_b * mu_b, C1) * add_scalar(var_a + var_b, C2);
  return num / den;
}

/// alpha * mean_c (1 - SSIM)/2 + (1 - alpha) * mean_c |a - b|, 1xHxW.
template <typename T>
Tensor<T> photometric_error(const Tensor<T>& a, const Tensor<T>& b, double alpha = 0.85) {
  auto l1 = reduce(abs(a - b), ReduceOp::mean, {0});
  if (alpha == 0.0) return l1;
  auto s = reduce(mul_scalar(add_scalar(-ssim(a, b), T(1)), T(0.5)), ReduceOp::mean, {0});
  return mul_scalar(s, static_cast<T>(alpha)) + mul_scalar(l1, static_cast<T>(1 - alpha));
}

/// Context image i warped into the reference view with depth (image
/// resolution) and transform rt. Returns (image, valid).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> reconstruct_view(const Tensor<T>& context, const Tensor<T>& depth,
                                                  const Tensor<T>& rt, const Intrinsics& K) {
  auto [coords, valid] = warp_coords(depth, rt, K);
  return {bilinear_sample(context, coords).first, valid};
}

namespace detail {
inline constexpr double kInvalidError = 1e3;
}

/// Minimum fusion over views, then auto-masking of pixels where an unwarped
/// context already explains the reference at least as well. Pixels outside
/// every view are dropped as well.
template <typename T>
Tensor<T> loss_photometric(const std::vector<Tensor<T>>& warped, const std::vector<Tensor<T>>& warped_valid,
                           const Tensor<T>& reference, const std::vector<Tensor<T>>& unwarped, double alpha = 0.85) {
  if (warped.empty() || warped.size() != warped_valid.size() || warped.size() != unwarped.size())
    throw ConfigError("loss_photometric: view lists must be non-empty and of equal length");
  const T big = static_cast<T>(detail::kInvalidError);
  Tensor<T> fused;
  for (std::size_t i = 0; i < warped.size(); ++i) {
    auto pe = photometric_error(warped[i], reference, alpha);
    const auto& v = warped_valid[i];
    auto masked = pe * v + mul_scalar(add_scalar(-v, T(1)), big);
    fused = fused.defined() ? minimum(fused, masked) : masked;
  }
  std::vector<double> id_min(fused.numel(), detail::kInvalidError);
  {
    NoGradGuard ng;
    for (const auto& u : unwarped) {
      const auto pe = photometric_error(u, reference, alpha);
      const auto d = pe.data();
      for (std::size_t k = 0; k < id_min.size(); ++k) id_min[k] = std::min(id_min[k], static_cast<double>(d[k]));
    }
  }
  std::vector<T> keep(fused.numel());
  const auto f = fused.data();
  double count = 0;
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const double fk = static_cast<double>(f[k]);
    keep[k] = (fk < 0.5 * detail::kInvalidError && fk <= id_min[k]) ? T(1) : T(0);
    count += static_cast<double>(keep[k]);
  }
  if (count <= 0) throw DomainError("loss_photometric: every pixel is masked");
  return detail::masked_mean(fused, Tensor<T>::from(fused.shape(), std::move(keep)), count);
}

/// Edge-aware smoothness of mean-normalized depth: mean over x-differences of
/// |dx d| exp(-|dx I|) plus the same over y-differences. Image gradients are
/// averaged over channels.
template <typename T>
Tensor<T> loss_smooth(const Tensor<T>& depth, const Tensor<T>& image) {
  if (depth.rank() != 3 || image.rank() != 3 || depth.dim(0) != 1 || depth.dim(1) != image.dim(1) ||
      depth.dim(2) != image.dim(2))
    throw DimensionError("loss_smooth: depth and image must share a resolution");
  const int h = depth.dim(1), w = depth.dim(2);
  auto dn = depth / mean(depth);
  Tensor<T> total = Tensor<T>::scalar(T(0));
  auto term = [&](int axis, int len) {
    auto dd = abs(slice(dn, axis, 1, len - 1) - slice(dn, axis, 0, len - 1));
    Tensor<T> weight;
    {
      NoGradGuard ng;
      auto gi = reduce(abs(slice(image, axis, 1, len - 1) - slice(image, axis, 0, len - 1)), ReduceOp::mean, {0});
      weight = exp(-gi).detach();
    }
    return mean(dd * weight);
  };
  if (w > 1) total = total + term(2, w);
  if (h > 1) total = total + term(1, h);
  return total;
}

enum class LossMode { supervised, self_supervised };

inline LossMode parse_loss_mode(const std::string& s) {
  if (s == "supervised") return LossMode::supervised;
  if (s == "self_supervised" || s == "self-supervised" || s == "self") return LossMode::self_supervised;
  throw ConfigError("unknown loss mode: " + s);
}
inline std::string to_string(LossMode m) { return m == LossMode::supervised ? "supervised" : "self_supervised"; }

template <typename T>
struct LossParts {
  StagedLoss<T> depth, pose;    // supervised
  StagedLoss<T> photo, smooth;  // self-supervised, already discounted per stage
};

struct LossReport {
  LossMode mode = LossMode::supervised;
  double total = 0;
  double depth = 0, pose = 0, photo = 0, smooth = 0;  // aggregated (discounted) components
  std::vector<double> depth_stages, pose_stages, photo_stages, smooth_stages;
  LossWeights weights;

  /// One tab-separated line.
  std::string line(long step) const {
    std::ostringstream os;
    os.setf(std::ios::scientific);
    os.precision(6);
    os << "step=" << step << "\tmode=" << to_string(mode) << "\ttotal=" << total;
    if (mode == LossMode::supervised)
      os << "\tdepth=" << depth << "\tpose=" << pose;
    else
      os << "\tphoto=" << photo << "\tsmooth=" << smooth;
    auto stages = [&](const char* name, const std::vector<double>& v) {
      for (std::size_t s = 0; s < v.size(); ++s) os << '\t' << name << s + 1 << '=' << v[s];
    };
    stages("depth_s", depth_stages);
    stages("pose_s", pose_stages);
    stages("photo_s", photo_stages);
    stages("smooth_s", smooth_stages);
    os.unsetf(std::ios::scientific);
    os << "\tgamma=" << weights.gamma << "\talpha=" << weights.alpha << "\tlambda=" << weights.lambda;
    return os.str();
  }
};

template <typename T>
std::pair<Tensor<T>, LossReport> total_loss(LossMode mode, const LossParts<T>& parts, const LossWeights& w = {}) {
  LossReport r;
  r.mode = mode;
  r.weights = w;
  auto val = [](const StagedLoss<T>& s) { return s.total.defined() ? static_cast<double>(s.total.item()) : 0.0; };
  auto or_zero = [](const StagedLoss<T>& s) { return s.total.defined() ? s.total : Tensor<T>::scalar(T(0)); };
  Tensor<T> total;
  if (mode == LossMode::supervised) {
    total = or_zero(parts.depth) + or_zero(parts.pose);
    r.depth = val(parts.depth);
    r.pose = val(parts.pose);
    r.depth_stages = parts.depth.stages;
    r.pose_stages = parts.pose.stages;
  } else {
    total = or_zero(parts.photo) + mul_scalar(or_zero(parts.smooth), static_cast<T>(w.lambda));
    r.photo = val(parts.photo);
    r.smooth = val(parts.smooth);
    r.photo_stages = parts.photo.stages;
    r.smooth_stages = parts.smooth.stages;
  }
  r.total = static_cast<double>(total.item());
  return {total, r};
}

template <typename T>
std::pair<Tensor<T>, LossReport> total_loss(const std::string& mode, const LossParts<T>& parts,
                                            const LossWeights& w = {}) {
  return total_loss(parse_loss_mode(mode), parts, w);
}

}  // namespace dro
