#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dro/geometry.hpp"

namespace dro {

struct DepthMetrics {
  double abs_rel = 0, sq_rel = 0, rmse = 0, rmse_log = 0;
  double delta1 = 0, delta2 = 0, delta3 = 0;
  double si_inv = 0, l1_inv = 0, sc_inv = 0, l1_rel = 0;

  static std::vector<std::string> names() {
    return {"abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2",
            "delta3",  "si_inv", "l1_inv", "sc_inv", "l1_rel"};
  }
  std::vector<double> values() const {
    return {abs_rel, sq_rel, rmse, rmse_log, delta1, delta2, delta3, si_inv, l1_inv, sc_inv, l1_rel};
  }
};

struct PoseMetrics {
  double rot_deg = 0, tr_deg = 0, tr_cm = 0;

  static std::vector<std::string> names() { return {"rot_deg", "tr_deg", "tr_cm"}; }
  std::vector<double> values() const { return {rot_deg, tr_deg, tr_cm}; }
};

/// Median with the two middle values averaged for even counts.
inline double median(std::vector<double> v) {
  if (v.empty()) throw DomainError("median of an empty set");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double hi = v[mid];
  if (v.size() % 2) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + mid));
}

/// Metrics over pixels where mask != 0 (an empty mask vector means gt > 0).
/// Predictions are clamped below at 1e-6 before logs and inverses.
inline DepthMetrics depth_metrics(const std::vector<double>& pred, const std::vector<double>& gt,
                                  const std::vector<unsigned char>& mask = {}, bool median_scale = false) {
  if (pred.size() != gt.size() || (!mask.empty() && mask.size() != gt.size()))
    throw DimensionError("depth_metrics: size mismatch");
  std::vector<double> p, g;
  for (std::size_t k = 0; k < gt.size(); ++k) {
    const bool ok = mask.empty() ? gt[k] > 0 : mask[k] != 0;
    if (!ok) continue;
    if (!(gt[k] > 0)) throw DomainError("depth_metrics: non-positive ground truth inside the mask");
    p.push_back(std::max(pred[k], 1e-6));
    g.push_back(gt[k]);
  }
  if (p.empty()) throw DomainError("depth_metrics: empty valid mask");
  if (median_scale) {
    const double s = median(g) / median(p);
    for (auto& v : p) v *= s;
  }
  DepthMetrics m;
  double se = 0, sle = 0, e_sum = 0;
  const double n = static_cast<double>(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double d = p[k] - g[k];
    m.abs_rel += std::abs(d) / g[k];
    m.sq_rel += d * d / g[k];
    se += d * d;
    const double e = std::log(p[k]) - std::log(g[k]);
    sle += e * e;
    e_sum += e;
    const double ratio = std::max(p[k] / g[k], g[k] / p[k]);
    m.delta1 += ratio < 1.25;
    m.delta2 += ratio < 1.25 * 1.25;
    m.delta3 += ratio < 1.25 * 1.25 * 1.25;
    m.l1_inv += std::abs(1.0 / p[k] - 1.0 / g[k]);
  }
  m.abs_rel /= n;
  m.sq_rel /= n;
  m.rmse = std::sqrt(se / n);
  m.rmse_log = std::sqrt(sle / n);
  m.delta1 /= n;
  m.delta2 /= n;
  m.delta3 /= n;
  const double me = e_sum / n;
  double var = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double c = std::log(p[k]) - std::log(g[k]) - me;
    var += c * c;
  }
  m.si_inv = std::sqrt(var / n);
  m.sc_inv = m.si_inv;
  m.l1_inv /= n;
  m.l1_rel = m.abs_rel;
  return m;
}

/// rot_deg: geodesic angle of R_pred R_gt^T; tr_deg: angle between the
/// translation directions (0 when either is shorter than 1e-9); tr_cm:
/// |t_pred - t_gt| in centimetres.
inline PoseMetrics pose_metrics(const Pose& pred, const Pose& gt) {
  PoseMetrics m;
  const Eigen::Matrix3d E = pred.R * gt.R.transpose();
  // atan2 form of arccos((tr - 1)/2); stays accurate near 0 and 180 degrees.
  const Eigen::Vector3d vee(E(2, 1) - E(1, 2), E(0, 2) - E(2, 0), E(1, 0) - E(0, 1));
  m.rot_deg = std::atan2(0.5 * vee.norm(), 0.5 * (E.trace() - 1.0)) * 180.0 / M_PI;
  const double na = pred.t.norm(), nb = gt.t.norm();
  if (na >= 1e-9 && nb >= 1e-9)
    m.tr_deg = std::atan2(pred.t.cross(gt.t).norm(), pred.t.dot(gt.t)) * 180.0 / M_PI;
  m.tr_cm = (pred.t - gt.t).norm() * 100.0;
  return m;
}

/// Field-wise mean of per-sample metric vectors.
template <typename M>
M average_metrics(const std::vector<M>& all) {
  if (all.empty()) throw DomainError("no metrics to average");
  std::vector<double> acc(all.front().values().size(), 0.0);
  for (const auto& m : all) {
    const auto v = m.values();
    for (std::size_t k = 0; k < v.size(); ++k) acc[k] += v[k] / all.size();
  }
  M out;
  if constexpr (std::is_same_v<M, DepthMetrics>) {
    out = {acc[0], acc[1], acc[2], acc[3], acc[4], acc[5], acc[6], acc[7], acc[8], acc[9], acc[10]};
  } else {
    out = {acc[0], acc[1], acc[2]};
  }
  return out;
}

inline std::string metrics_header(const std::vector<std::string>& names, char sep = '\t') {
  std::string s;
  for (std::size_t k = 0; k < names.size(); ++k) s += (k ? std::string(1, sep) : "") + names[k];
  return s;
}

inline std::string metrics_row(const std::vector<double>& v, char sep = '\t') {
  std::ostringstream os;
  os << std::setprecision(8);
  for (std::size_t k = 0; k < v.size(); ++k) os << (k ? std::string(1, sep) : "") << v[k];
  return os.str();
}

/// Aligned two-column table for humans.
inline std::string metrics_table(const std::vector<std::string>& names, const std::vector<double>& v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  for (std::size_t k = 0; k < names.size(); ++k) os << std::left << std::setw(10) << names[k] << ' ' << v[k] << '\n';
  return os.str();
}

}  // namespace dro
