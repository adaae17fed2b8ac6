#pragma once

#include <algorithm>
#include <chrono>
#include <vector>

#include "dro/metrics.hpp"
#include "dro/optimizer.hpp"
#include "dro/losses.hpp"

namespace dro {

struct Prediction {
  std::string id;
  Image depth;  // image resolution, metres
  std::vector<Pose> poses;
  Trajectory trajectory;
};

template <typename T>
Prediction predict(const Model<T>& model, const SceneSample& s, const OptimizeConfig& cfg = {}) {
  NoGradGuard ng;
  const auto res = run_multiview(model, s, cfg);
  Prediction p;
  p.id = s.id;
  p.depth = to_image(upsample_depth(res.depth, s.K.height, s.K.width));
  p.poses = res.poses();
  p.trajectory = std::move(res.trajectory);
  return p;
}

inline std::vector<double> to_doubles(const Image& img) { return {img.data.begin(), img.data.end()}; }

inline DepthMetrics evaluate_depth(const Image& pred, const Image& gt, bool median_scale = false) {
  if (!pred.same_extent(gt)) throw DimensionError("prediction and ground truth differ in extent");
  return depth_metrics(to_doubles(pred), to_doubles(gt), {}, median_scale);
}

/// Metrics of every view's pose, averaged.
inline PoseMetrics evaluate_poses(const std::vector<Pose>& pred, const std::vector<Pose>& gt) {
  if (pred.empty() || pred.size() > gt.size()) throw DimensionError("pose count mismatch");
  std::vector<PoseMetrics> all;
  for (std::size_t i = 0; i < pred.size(); ++i) all.push_back(pose_metrics(pred[i], gt[i]));
  return average_metrics(all);
}

/// Depth at the given trajectory record, upsampled to image resolution.
inline Image trajectory_depth(const Trajectory& t, std::size_t record, int height, int width) {
  const auto& r = t.records.at(record);
  if (r.depth.empty()) throw ConfigError("trajectory was recorded without snapshots");
  auto d = Tensor<double>::from({1, t.height, t.width}, std::vector<double>(r.depth.begin(), r.depth.end()));
  NoGradGuard ng;
  return to_image(upsample_depth(d, height, width));
}

}  // namespace dro
