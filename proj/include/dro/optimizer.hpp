#pragma once

// The recurrent optimizer. Depth and per-view poses are refined by GRU steps
// that see a cost map rebuilt from the current variables before every step.
//
// One iteration is a (depth update, pose update) pair. A stage is n depth
// steps followed by n pose steps (alternate mode) or n joint steps, where a
// joint step updates depth and every pose from one shared cost evaluation.
// With N context views the depth GRU consumes the per-pixel mean of the N
// cost maps and view i's pose GRU consumes its own map.

#include <optional>
#include <string>
#include <vector>

#include "dro/network.hpp"
#include "dro/scene.hpp"

namespace dro {

enum class UpdateMode { alternate, joint };

inline UpdateMode parse_update_mode(const std::string& s) {
  if (s == "alternate") return UpdateMode::alternate;
  if (s == "joint") return UpdateMode::joint;
  throw ConfigError("unknown update mode: " + s);
}
inline std::string to_string(UpdateMode m) { return m == UpdateMode::alternate ? "alternate" : "joint"; }

struct OptimizeConfig {
  UpdateMode mode = UpdateMode::alternate;
  bool use_cost = true;
  std::optional<int> iterations;  // overrides stages * updates; must be a multiple of updates
  int max_views = 0;              // 0 = every context image
  bool keep_snapshots = true;
};

enum class StepKind { init, depth, pose, joint };

inline const char* to_string(StepKind k) {
  switch (k) {
    case StepKind::init: return "init";
    case StepKind::depth: return "depth";
    case StepKind::pose: return "pose";
    case StepKind::joint: return "joint";
  }
  return "?";
}

/// State after one GRU update step (or the initial state).
struct TrajectoryRecord {
  int step = 0;  // 0 = initialization
  StepKind kind = StepKind::init;
  int stage = 0;  // 1-based; 0 for the initial record
  bool stage_end = false;
  double mean_cost = 0;  // mean valid cost of the averaged cost map at this state
  std::vector<float> depth;  // feature-resolution depth (metres), if snapshots are kept
  std::vector<Pose> poses;
};

struct Trajectory {
  std::vector<TrajectoryRecord> records;
  int width = 0, height = 0;  // extents of the depth snapshots
};

template <typename T>
struct OptimizerState {
  const Model<T>* model = nullptr;
  Intrinsics k_feat;
  bool use_cost = true;
  Tensor<T> f_ref;
  std::vector<Tensor<T>> f_ctx;
  Tensor<T> ctx_ref;
  std::vector<Tensor<T>> ctx_views;
  Tensor<T> depth_logits;
  std::vector<Tensor<T>> xis;  // [6] per view
  Tensor<T> h_depth;
  std::vector<Tensor<T>> h_pose;

  std::size_t views() const { return f_ctx.size(); }
  Tensor<T> depth() const { return model->depth_from_logits(depth_logits); }
};

template <typename T>
struct OptimizeResult {
  Tensor<T> initial_depth;            // 1 x H/8 x W/8 metres
  std::vector<Tensor<T>> initial_xis;
  Tensor<T> depth;                    // final
  std::vector<Tensor<T>> xis;         // final
  std::vector<Tensor<T>> stage_depths;            // at the end of every stage
  std::vector<std::vector<Tensor<T>>> stage_xis;  // [stage][view]
  Trajectory trajectory;
  Intrinsics k_feat;

  std::vector<Pose> poses() const {
    std::vector<Pose> out;
    for (const auto& x : xis) out.push_back(pose_from_tensor(se3_exp(x.detach())));
    return out;
  }
};

/// Encoders and initial heads. Images are 3xHxW tensors in [0,1].
template <typename T>
OptimizerState<T> initialize_state(const Model<T>& model, const Tensor<T>& reference,
                                   const std::vector<Tensor<T>>& contexts, const Intrinsics& K, bool use_cost = true) {
  if (contexts.empty()) throw ConfigError("the optimizer needs at least one context view");
  if (reference.dim(1) != K.height || reference.dim(2) != K.width)
    throw DimensionError("image " + shape_str(reference.shape()) + " does not match intrinsics extents");
  OptimizerState<T> s;
  s.model = &model;
  s.k_feat = K.scaled(kDownsample);
  s.use_cost = use_cost;
  s.f_ref = model.encode_features(reference);
  auto cref = model.encode_context(reference, Target::depth);
  s.ctx_ref = cref.context;
  s.h_depth = cref.h0;
  s.depth_logits = model.depth_head(s.f_ref);
  for (const auto& c : contexts) {
    if (c.shape() != reference.shape()) throw DimensionError("context image shape differs from the reference");
    auto fc = model.encode_features(c);
    auto cc = model.encode_context(c, Target::pose);
    s.f_ctx.push_back(fc);
    s.ctx_views.push_back(cc.context);
    s.h_pose.push_back(cc.h0);
    s.xis.push_back(model.pose_head(s.f_ref, fc));
  }
  return s;
}

/// Cost maps of every view at the current depth and poses.
template <typename T>
std::vector<CostMap<T>> view_costs(const OptimizerState<T>& s) {
  const auto depth = s.depth();
  std::vector<CostMap<T>> out;
  out.reserve(s.views());
  for (std::size_t i = 0; i < s.views(); ++i)
    out.push_back(build_cost(s.f_ref, s.f_ctx[i], depth, se3_exp(s.xis[i]), s.k_feat));
  return out;
}

template <typename T>
void update_depth(OptimizerState<T>& s, const std::vector<CostMap<T>>& costs) {
  const auto& m = *s.model;
  const auto avg = average_cost(costs);
  auto in = m.project_inputs(m.depth_repr(s.depth_logits), avg, s.ctx_ref, Target::depth, s.use_cost);
  s.h_depth = m.gru_step(s.h_depth, in, Target::depth);
  s.depth_logits = s.depth_logits + m.delta_head(s.h_depth, Target::depth);
}

/// Rebuilds the costs from the current state first.
template <typename T>
void update_depth(OptimizerState<T>& s) {
  update_depth(s, view_costs(s));
}

template <typename T>
void update_pose(OptimizerState<T>& s, std::size_t view, const CostMap<T>& cost) {
  if (view >= s.views()) throw ConfigError("pose update for a view that does not exist");
  const auto& m = *s.model;
  const int h = s.f_ref.dim(1), w = s.f_ref.dim(2);
  auto in = m.project_inputs(m.pose_repr(s.xis[view], h, w), cost, s.ctx_views[view], Target::pose, s.use_cost);
  s.h_pose[view] = m.gru_step(s.h_pose[view], in, Target::pose);
  s.xis[view] = s.xis[view] + m.delta_head(s.h_pose[view], Target::pose);
}

template <typename T>
void update_pose(OptimizerState<T>& s, std::size_t view) {
  const auto depth = s.depth();
  update_pose(s, view, build_cost(s.f_ref, s.f_ctx[view], depth, se3_exp(s.xis[view]), s.k_feat));
}

namespace detail {

template <typename T>
TrajectoryRecord snapshot(const OptimizerState<T>& s, double mean_cost, bool keep) {
  TrajectoryRecord r;
  r.mean_cost = mean_cost;
  if (keep) {
    NoGradGuard ng;
    const auto d = s.depth();
    r.depth.assign(d.data().begin(), d.data().end());
    for (const auto& x : s.xis) r.poses.push_back(pose_from_tensor(se3_exp(x.detach())));
  }
  return r;
}

}  // namespace detail

/// Runs the schedule. The differentiable graph is kept when gradients are
/// enabled so stage outputs can be supervised.
template <typename T>
OptimizeResult<T> optimize(const Model<T>& model, const Tensor<T>& reference, const std::vector<Tensor<T>>& contexts,
                           const Intrinsics& K, const OptimizeConfig& cfg = {}) {
  const int n = model.config().updates_per_stage;
  int iterations = model.config().stages * n;
  if (cfg.iterations) {
    if (*cfg.iterations < 0 || *cfg.iterations % n)
      throw ConfigError("iteration count " + std::to_string(*cfg.iterations) + " is not a non-negative multiple of " +
                        std::to_string(n));
    iterations = *cfg.iterations;
  }
  std::vector<Tensor<T>> ctx = contexts;
  if (cfg.max_views > 0 && static_cast<std::size_t>(cfg.max_views) < ctx.size()) ctx.resize(cfg.max_views);

  auto s = initialize_state(model, reference, ctx, K, cfg.use_cost);
  OptimizeResult<T> res;
  res.k_feat = s.k_feat;
  res.initial_depth = s.depth();
  res.initial_xis = s.xis;
  res.trajectory.width = s.k_feat.width;
  res.trajectory.height = s.k_feat.height;

  auto& recs = res.trajectory.records;
  auto costs = view_costs(s);
  recs.push_back(detail::snapshot(s, mean_valid_cost(average_cost(costs)), cfg.keep_snapshots));

  int step = 0;
  auto guarded = [&](auto&& fn) {
    try {
      fn();
    } catch (const NumericsError& e) {
      throw NumericsError("iteration " + std::to_string(step) + ": " + e.what());
    }
  };
  auto record = [&](StepKind kind, int stage, bool stage_end) {
    if (recs.empty()) return;
    auto& r = recs.back();
    r.step = step;
    r.kind = kind;
    r.stage = stage;
    r.stage_end = stage_end;
  };
  // Each step consumes the costs of the current state and leaves behind the
  // costs of the new one, which also give the trajectory its mean cost.
  auto advance = [&](auto&& update, StepKind kind, int stage, bool stage_end) {
    ++step;
    guarded([&] {
      update();
      costs = view_costs(s);
    });
    recs.push_back(detail::snapshot(s, mean_valid_cost(average_cost(costs)), cfg.keep_snapshots));
    record(kind, stage, stage_end);
  };

  const int stages = iterations / n;
  for (int st = 1; st <= stages; ++st) {
    if (cfg.mode == UpdateMode::alternate) {
      for (int k = 0; k < n; ++k) advance([&] { update_depth(s, costs); }, StepKind::depth, st, false);
      for (int k = 0; k < n; ++k)
        advance(
            [&] {
              for (std::size_t i = 0; i < s.views(); ++i) update_pose(s, i, costs[i]);
            },
            StepKind::pose, st, k == n - 1);
    } else {
      for (int k = 0; k < n; ++k)
        advance(
            [&] {
              update_depth(s, costs);
              for (std::size_t i = 0; i < s.views(); ++i) update_pose(s, i, costs[i]);
            },
            StepKind::joint, st, k == n - 1);
    }
    res.stage_depths.push_back(s.depth());
    res.stage_xis.push_back(s.xis);
  }
  res.depth = s.depth();
  res.xis = s.xis;
  return res;
}

/// Same schedule over N context views of a sample.
template <typename T>
OptimizeResult<T> run_multiview(const Model<T>& model, const SceneSample& sample, const OptimizeConfig& cfg = {}) {
  sample.validate();
  if (sample.contexts.empty()) throw ConfigError("sample " + sample.id + " has no context views");
  std::vector<Tensor<T>> ctx;
  for (const auto& c : sample.contexts) ctx.push_back(to_tensor<T>(c));
  return optimize(model, to_tensor<T>(sample.reference), ctx, sample.K, cfg);
}

}  // namespace dro
