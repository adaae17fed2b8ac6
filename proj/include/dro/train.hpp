#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "dro/adam.hpp"
#include "dro/checkpoint.hpp"
#include "dro/losses.hpp"
#include "dro/optimizer.hpp"
#include "dro/scene.hpp"

namespace dro {

struct TrainConfig {
  LossMode mode = LossMode::supervised;
  int epochs = 10;
  int batch_size = 4;
  double lr = 1e-3;        // first epoch
  double lr_final = 2.5e-4;  // last epoch; geometric decay in between
  double clip_norm = 5.0;  // 0 disables clipping
  LossWeights weights;
  OptimizeConfig optimize;
  std::uint64_t seed = 1;
  bool augment = false;  // random flips/transposes and colour permutations

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (!(lr > 0) || !(lr_final > 0)) throw ConfigError("learning rates must be positive");
    if (clip_norm < 0) throw ConfigError("clip norm must be >= 0");
  }

  double lr_at(int epoch) const {
    if (epochs <= 1) return lr;
    const double f = static_cast<double>(std::min(epoch, epochs - 1)) / (epochs - 1);
    return lr * std::pow(lr_final / lr, f);
  }
};

/// Loss of one sample: depth + pose against ground truth, or photometric +
/// lambda * smoothness on every stage output.
template <typename T>
std::pair<Tensor<T>, LossReport> sample_loss(const Model<T>& model, const SceneSample& s, LossMode mode,
                                             const LossWeights& w, OptimizeConfig ocfg = {}) {
  ocfg.keep_snapshots = false;
  const auto ref = to_tensor<T>(s.reference);
  std::vector<Tensor<T>> ctx;
  for (const auto& c : s.contexts) ctx.push_back(to_tensor<T>(c));
  if (ocfg.max_views > 0 && static_cast<std::size_t>(ocfg.max_views) < ctx.size()) ctx.resize(ocfg.max_views);
  const auto res = optimize(model, ref, ctx, s.K, ocfg);
  LossParts<T> parts;
  if (mode == LossMode::supervised) {
    if (!s.gt_depth || !s.gt_poses) throw ConfigError("supervised training needs ground-truth depth and poses");
    const auto gt = to_tensor<T>(*s.gt_depth);
    std::vector<Pose> poses(s.gt_poses->begin(), s.gt_poses->begin() + ctx.size());
    parts.depth = loss_depth(res.stage_depths, gt, w.gamma);
    parts.pose = loss_pose(res.stage_xis, gt, poses, s.K, w.gamma);
  } else {
    std::vector<Tensor<T>> photo, smooth;
    for (std::size_t st = 0; st < res.stage_depths.size(); ++st) {
      const auto depth = upsample_depth(res.stage_depths[st], s.K.height, s.K.width);
      std::vector<Tensor<T>> warped, valid;
      for (std::size_t i = 0; i < ctx.size(); ++i) {
        auto [img, v] = reconstruct_view(ctx[i], depth, se3_exp(res.stage_xis[st][i]), s.K);
        warped.push_back(img);
        valid.push_back(v);
      }
      photo.push_back(loss_photometric(warped, valid, ref, ctx, w.alpha));
      smooth.push_back(loss_smooth(depth, ref));
    }
    parts.photo = discount_stages(photo, w.gamma);
    parts.smooth = discount_stages(smooth, w.gamma);
  }
  return total_loss(mode, parts, w);
}

template <typename T>
class Trainer {
 public:
  Trainer(Model<T>& model, TrainConfig cfg) : model_(model), cfg_(std::move(cfg)) {
    cfg_.validate();
    adam_.init(model_.parameters());
  }

  AdamState<T>& adam() { return adam_; }
  const TrainConfig& config() const { return cfg_; }
  long step_count() const { return static_cast<long>(adam_.step); }

  /// One Adam step on the mean loss of `batch`.
  LossReport step(const std::vector<const SceneSample*>& batch, double lr) {
    if (batch.empty()) throw ConfigError("empty training batch");
    auto& params = model_.parameters();
    params.zero_grad();
    LossReport mean;
    const long index = step_count();
    for (std::size_t b = 0; b < batch.size(); ++b) {
      std::pair<Tensor<T>, LossReport> out;
      try {
        out = sample_loss(model_, *batch[b], cfg_.mode, cfg_.weights, cfg_.optimize);
        if (!std::isfinite(out.second.total)) throw NumericsError("non-finite loss");
        backward(mul_scalar(out.first, static_cast<T>(1.0 / batch.size())));
      } catch (const NumericsError& e) {
        throw NumericsError("training step " + std::to_string(index) + ", sample " + batch[b]->id + ": " + e.what());
      }
      accumulate(mean, out.second, 1.0 / batch.size(), b == 0);
    }
    for (auto& p : params)
      for (T g : p.tensor.grad())
        if (!std::isfinite(static_cast<double>(g)))
          throw NumericsError("training step " + std::to_string(index) + ": non-finite gradient in " + p.name);
    if (cfg_.clip_norm > 0) params.clip_grad_norm(cfg_.clip_norm);
    adam_step(params, adam_, AdamOptions{lr, 0.9, 0.999, 1e-8});
    return mean;
  }

  int steps_per_epoch(std::size_t n) const {
    return static_cast<int>((n + cfg_.batch_size - 1) / cfg_.batch_size);
  }

  /// Sample order of an epoch; a pure function of (seed, epoch).
  std::vector<std::size_t> epoch_order(std::size_t n, int epoch) const {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(cfg_.seed * 1000003ULL + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    return order;
  }

  /// Augmented copy of a sample; a pure function of (seed, epoch, slot).
  SceneSample augment(const SceneSample& s, int epoch, std::size_t slot) const {
    const std::uint64_t h = detail::mix64(cfg_.seed ^ detail::mix64(static_cast<std::uint64_t>(epoch) * 0x10001ULL + slot));
    SceneSample out = apply_symmetry(s, static_cast<int>(h & 7));
    std::array<int, 3> perm{0, 1, 2};
    std::mt19937_64 rng(h >> 3);
    std::shuffle(perm.begin(), perm.end(), rng);
    remap_colours(out, perm, (h >> 8) & 1);
    return out;
  }

  using StepCallback = std::function<void(long step, int epoch, const LossReport&)>;
  using EpochCallback = std::function<void(int epoch)>;

  /// Runs from the current Adam step to the end of the schedule. Resuming
  /// from a checkpoint continues inside the epoch the step count points to.
  void fit(const std::vector<SceneSample>& data, const StepCallback& on_step = {},
           const EpochCallback& on_epoch = {}) {
    if (data.empty()) throw ConfigError("empty training set");
    const int spe = steps_per_epoch(data.size());
    for (int epoch = static_cast<int>(step_count() / spe); epoch < cfg_.epochs; ++epoch) {
      const auto order = epoch_order(data.size(), epoch);
      const double lr = cfg_.lr_at(epoch);
      for (int k = static_cast<int>(step_count() % spe); k < spe; ++k) {
        std::vector<const SceneSample*> batch;
        std::vector<SceneSample> augmented;
        const std::size_t j0 = static_cast<std::size_t>(k) * cfg_.batch_size;
        const std::size_t j1 = std::min(data.size(), j0 + cfg_.batch_size);
        augmented.reserve(j1 - j0);
        for (std::size_t j = j0; j < j1; ++j) {
          if (!cfg_.augment) {
            batch.push_back(&data[order[j]]);
            continue;
          }
          augmented.push_back(augment(data[order[j]], epoch, j));
          batch.push_back(&augmented.back());
        }
        const auto rep = step(batch, lr);
        if (on_step) on_step(step_count(), epoch, rep);
      }
      if (on_epoch) on_epoch(epoch);
    }
  }

 private:
  static void accumulate(LossReport& acc, const LossReport& r, double w, bool first) {
    auto add = [&](std::vector<double>& a, const std::vector<double>& b) {
      if (first) a.assign(b.size(), 0.0);
      for (std::size_t k = 0; k < b.size() && k < a.size(); ++k) a[k] += w * b[k];
    };
    if (first) {
      acc = LossReport{};
      acc.mode = r.mode;
      acc.weights = r.weights;
    }
    acc.total += w * r.total;
    acc.depth += w * r.depth;
    acc.pose += w * r.pose;
    acc.photo += w * r.photo;
    acc.smooth += w * r.smooth;
    add(acc.depth_stages, r.depth_stages);
    add(acc.pose_stages, r.pose_stages);
    add(acc.photo_stages, r.photo_stages);
    add(acc.smooth_stages, r.smooth_stages);
  }

  Model<T>& model_;
  TrainConfig cfg_;
  AdamState<T> adam_;
};

}  // namespace dro
