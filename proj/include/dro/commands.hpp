#pragma once

// The five subcommands of the command-line tool, callable as functions.
//
// Settings come from declared INI sections ([run], [data], [model], [train],
// [infer], [bench]) and flag overrides; every command writes the resolved
// settings as config.ini into its output directory.
//
// Prediction directory layout (written by infer, read by eval):
//   <dir>/<id>/depth.png        16-bit depth, same encoding as datasets
//   <dir>/<id>/depth_color.png  colour-mapped inverse depth
//   <dir>/<id>/trajectory.tsv   one row per GRU step, with errors when GT exists
//   <dir>/poses.txt             "<id> <view> <12 pose numbers>" per line

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dro/checkpoint.hpp"
#include "dro/config.hpp"
#include "dro/dataset_io.hpp"
#include "dro/inference.hpp"
#include "dro/train.hpp"

namespace dro {

// ---------------------------------------------------------------- settings

inline void declare_run(Settings& s) {
  s.declare("run.seed", "", "master seed; falls back to $DRO_SEED, then 1");
}

inline void declare_data(Settings& s) {
  const SceneSpec d;
  auto num = [](double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  };
  s.declare("data.count", "100", "number of samples");
  s.declare("data.width", std::to_string(d.width), "image width (multiple of 8)");
  s.declare("data.height", std::to_string(d.height), "image height (multiple of 8)");
  s.declare("data.focal", num(d.focal), "focal length in pixels");
  s.declare("data.geometry", to_string(d.geometry),
            "fronto-parallel | tilted-plane | two-plane-step | sphere-on-plane | mixed");
  s.declare("data.views", std::to_string(d.views), "context images per sample");
  s.declare("data.max_rotation_deg", num(d.max_rotation_deg), "rotation magnitude bound (<= 5)");
  s.declare("data.min_translation", num(d.min_translation), "translation magnitude lower bound, metres");
  s.declare("data.max_translation", num(d.max_translation), "translation magnitude upper bound (<= 0.2)");
  s.declare("data.lateral", d.lateral ? "true" : "false", "translate in the image plane only");
  s.declare("data.depth_min", num(d.depth_min), "nearest scene depth, metres");
  s.declare("data.depth_max", num(d.depth_max), "farthest scene depth, metres");
  s.declare("data.noise_sigma", num(d.noise_sigma), "Gaussian pixel noise, 0..1 units");
  s.declare("data.texture_scale", num(d.texture_scale), "texture period multiplier");
  s.declare("data.with_gt", "true", "store ground-truth depth and poses");
}

inline void declare_model(Settings& s) {
  const ModelConfig m;
  auto num = [](double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
  };
  s.declare("model.feat_channels", std::to_string(m.feat_channels));
  s.declare("model.context_channels", std::to_string(m.context_channels));
  s.declare("model.hidden_channels", std::to_string(m.hidden_channels));
  s.declare("model.pv_channels", std::to_string(m.pv_channels));
  s.declare("model.pc_channels", std::to_string(m.pc_channels));
  s.declare("model.head_channels", std::to_string(m.head_channels));
  s.declare("model.depth_min", num(m.depth.d_min), "lower depth bound, metres");
  s.declare("model.depth_max", num(m.depth.d_max), "upper depth bound, metres");
  s.declare("model.stages", std::to_string(m.stages), "m");
  s.declare("model.updates", std::to_string(m.updates_per_stage), "n");
  s.declare("model.depth_gain", num(m.depth_gain));
  s.declare("model.rot_gain", num(m.rot_gain));
  s.declare("model.trans_gain", num(m.trans_gain));
}

inline void declare_train(Settings& s) {
  const TrainConfig t;
  auto num = [](double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
  };
  s.declare("train.mode", "supervised", "supervised | self");
  s.declare("train.epochs", std::to_string(t.epochs));
  s.declare("train.batch_size", std::to_string(t.batch_size));
  s.declare("train.lr", num(t.lr), "learning rate of the first epoch");
  s.declare("train.lr_final", num(t.lr_final), "learning rate of the last epoch");
  s.declare("train.clip_norm", num(t.clip_norm), "global gradient norm clip, 0 = off");
  s.declare("train.gamma", num(t.weights.gamma), "stage discount");
  s.declare("train.alpha", num(t.weights.alpha), "SSIM weight of the photometric error");
  s.declare("train.lambda", num(t.weights.lambda), "smoothness weight");
  s.declare("train.augment", "false", "random flips, transposes and colour permutations");
  s.declare("train.update_mode", "alternate", "alternate | joint");
  s.declare("train.use_cost", "true", "feed the cost map to the GRUs");
  s.declare("train.max_minutes", "0", "stop after this much wall time, 0 = no limit");
}

inline void declare_infer(Settings& s) {
  s.declare("infer.views", "0", "context views per reference, 0 = all");
  s.declare("infer.iterations", "", "total iterations, empty = trained schedule");
  s.declare("infer.update_mode", "alternate", "alternate | joint");
  s.declare("infer.use_cost", "true", "feed the cost map to the GRUs");
}

inline void declare_bench(Settings& s) {
  s.declare("bench.iterations", "0,4,8,12", "comma-separated iteration counts");
  s.declare("bench.repeats", "5", "timed runs per count (median reported)");
  s.declare("bench.samples", "10", "samples per timed run");
}

/// Seed from the settings, else $DRO_SEED, else 1. The resolved value is
/// written back so that saved configs carry it.
inline std::uint64_t resolve_seed(Settings& s) {
  std::string v = s.str("run.seed");
  if (v.empty()) {
    const char* env = std::getenv("DRO_SEED");
    v = env && *env ? env : "1";
  }
  std::uint64_t seed = 0;
  try {
    std::size_t used = 0;
    seed = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
  } catch (const std::exception&) {
    throw UsageError("seed must be a non-negative integer, got '" + v + "'");
  }
  s.set("run.seed", std::to_string(seed));
  return seed;
}

inline SceneSpec scene_spec(const Settings& s, std::uint64_t seed) {
  SceneSpec d;
  d.seed = seed;
  d.width = static_cast<int>(s.integer("data.width"));
  d.height = static_cast<int>(s.integer("data.height"));
  d.focal = s.num("data.focal");
  d.geometry = parse_geometry(s.str("data.geometry"));
  d.views = static_cast<int>(s.integer("data.views"));
  d.max_rotation_deg = s.num("data.max_rotation_deg");
  d.min_translation = s.num("data.min_translation");
  d.max_translation = s.num("data.max_translation");
  d.lateral = s.flag("data.lateral");
  d.depth_min = s.num("data.depth_min");
  d.depth_max = s.num("data.depth_max");
  d.noise_sigma = s.num("data.noise_sigma");
  d.texture_scale = s.num("data.texture_scale");
  d.validate();
  return d;
}

inline ModelConfig model_config(const Settings& s, std::uint64_t seed) {
  ModelConfig m;
  m.feat_channels = static_cast<int>(s.integer("model.feat_channels"));
  m.context_channels = static_cast<int>(s.integer("model.context_channels"));
  m.hidden_channels = static_cast<int>(s.integer("model.hidden_channels"));
  m.pv_channels = static_cast<int>(s.integer("model.pv_channels"));
  m.pc_channels = static_cast<int>(s.integer("model.pc_channels"));
  m.head_channels = static_cast<int>(s.integer("model.head_channels"));
  m.depth = {s.num("model.depth_min"), s.num("model.depth_max")};
  m.stages = static_cast<int>(s.integer("model.stages"));
  m.updates_per_stage = static_cast<int>(s.integer("model.updates"));
  m.depth_gain = s.num("model.depth_gain");
  m.rot_gain = s.num("model.rot_gain");
  m.trans_gain = s.num("model.trans_gain");
  m.seed = seed;
  m.validate();
  return m;
}

inline TrainConfig train_config(const Settings& s, std::uint64_t seed) {
  TrainConfig t;
  t.mode = parse_loss_mode(s.str("train.mode"));
  t.epochs = static_cast<int>(s.integer("train.epochs"));
  t.batch_size = static_cast<int>(s.integer("train.batch_size"));
  t.lr = s.num("train.lr");
  t.lr_final = s.num("train.lr_final");
  t.clip_norm = s.num("train.clip_norm");
  t.weights = {s.num("train.gamma"), s.num("train.alpha"), s.num("train.lambda")};
  t.augment = s.flag("train.augment");
  t.optimize.mode = parse_update_mode(s.str("train.update_mode"));
  t.optimize.use_cost = s.flag("train.use_cost");
  t.seed = seed;
  t.validate();
  return t;
}

/// Inference options; `updates` is the model's n, which iteration counts
/// must be a multiple of.
inline OptimizeConfig infer_config(const Settings& s, int updates) {
  OptimizeConfig c;
  c.mode = parse_update_mode(s.str("infer.update_mode"));
  c.use_cost = s.flag("infer.use_cost");
  c.max_views = static_cast<int>(s.integer("infer.views"));
  if (c.max_views < 0) throw UsageError("--views must be >= 0");
  const auto it = s.str("infer.iterations");
  if (!it.empty()) {
    const long k = s.integer("infer.iterations");
    if (k < 0 || k % updates)
      throw UsageError("--iters " + std::to_string(k) + " must be a non-negative multiple of n = " +
                       std::to_string(updates) + " (updates per stage)");
    c.iterations = static_cast<int>(k);
  }
  return c;
}

inline std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError("not an integer list: '" + text + "'");
    }
  }
  if (out.empty()) throw UsageError("empty integer list");
  return out;
}

// ---------------------------------------------------------------- helpers

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

/// Companion settings file of a checkpoint: model.ckpt -> model.ini.
inline fs::path checkpoint_config_path(const fs::path& ckpt) {
  fs::path p = ckpt;
  return p.replace_extension(".ini");
}

/// Model with the architecture stored next to the checkpoint and its weights.
template <typename T>
Model<T> load_model(const fs::path& ckpt) {
  const auto ini = checkpoint_config_path(ckpt);
  if (!fs::exists(ckpt)) throw IoError("missing checkpoint " + ckpt.string());
  if (!fs::exists(ini)) throw IoError("missing model config " + ini.string());
  Settings s;
  declare_run(s);
  declare_model(s);
  s.load_ini(ini);
  Model<T> model(model_config(s, resolve_seed(s)));
  load_checkpoint(ckpt.string(), model.parameters(), static_cast<AdamState<T>*>(nullptr));
  return model;
}

/// Fixed five-stop colour map (dark blue, blue, teal, yellow-green, yellow)
/// over inverse depth, with 1/d_max at the dark end and 1/d_min at the bright
/// end. Invalid (non-positive) depths are black.
inline Image colorize_depth(const Image& depth, double d_min, double d_max) {
  static const double stops[5][3] = {
      {0.267, 0.005, 0.329}, {0.229, 0.322, 0.546}, {0.128, 0.567, 0.551}, {0.369, 0.789, 0.383}, {0.993, 0.906, 0.144}};
  Image out(3, depth.height, depth.width);
  const double lo = 1.0 / d_max, hi = 1.0 / d_min;
  const std::size_t plane = depth.data.size();
  for (std::size_t k = 0; k < plane; ++k) {
    const double d = depth.data[k];
    if (!(d > 0)) continue;
    const double u = std::clamp((1.0 / d - lo) / (hi - lo), 0.0, 1.0) * 4.0;
    const int i = std::min(static_cast<int>(u), 3);
    const double f = u - i;
    for (int c = 0; c < 3; ++c)
      out.data[c * plane + k] = static_cast<float>(stops[i][c] * (1 - f) + stops[i + 1][c] * f);
  }
  return out;
}

// ---------------------------------------------------------------- gen

struct GenResult {
  std::size_t count = 0;
  fs::path dir;
};

inline GenResult cmd_gen(Settings s, const fs::path& out, bool force) {
  const auto seed = resolve_seed(s);
  const auto spec = scene_spec(s, seed);
  const long count = s.integer("data.count");
  if (count < 1) throw UsageError("--count must be >= 1");
  const bool gt = s.flag("data.with_gt");
  if (fs::exists(out)) {
    if (!fs::is_directory(out)) throw UsageError(out.string() + " exists and is not a directory");
    if (!fs::is_empty(out)) {
      if (!force) throw UsageError(out.string() + " is not empty (use --force to overwrite)");
      std::error_code ec;
      for (const auto& e : fs::directory_iterator(out)) fs::remove_all(e.path(), ec);
      if (ec) throw IoError("cannot clear " + out.string() + ": " + ec.message());
    }
  }
  ensure_dir(out);
  Manifest m;
  m.K = spec.intrinsics();
  for (const auto& key : s.keys())
    if (key.rfind("data.", 0) == 0 || key == "run.seed") m.set(key, s.str(key));
  for (long i = 0; i < count; ++i) {
    auto sample = generate_scene(spec, static_cast<std::uint64_t>(i));
    if (!gt) {
      sample.gt_depth.reset();
      sample.gt_poses.reset();
    }
    save_sample(sample, out, m);
  }
  write_manifest(out, m);
  s.save_ini(out / "config.ini");
  return {static_cast<std::size_t>(count), out};
}

// ---------------------------------------------------------------- train

struct TrainResult {
  long steps = 0;
  double first_loss = 0, last_loss = 0;
  bool stopped_early = false;
  fs::path checkpoint;
};

inline std::vector<SceneSample> load_all(const fs::path& dir) {
  const auto seq = load_sequence(dir);
  std::vector<SceneSample> out;
  out.reserve(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) out.push_back(seq[i]);
  return out;
}

/// Trains on `data_dir`, writing out/model.ckpt (+ model.ini), out/train.log
/// and out/config.ini. With `resume` an existing checkpoint in `out` is
/// continued from its step count.
inline TrainResult cmd_train(Settings s, const fs::path& data_dir, const fs::path& out, bool resume,
                             std::ostream* progress = nullptr) {
  const auto seed = resolve_seed(s);
  const auto tcfg = train_config(s, seed);
  const auto mcfg = model_config(s, seed);
  auto data = load_all(data_dir);
  if (data.empty()) throw FormatError("dataset " + data_dir.string() + " has no samples");
  if (tcfg.mode == LossMode::supervised) {
    for (const auto& d : data)
      if (!d.gt_depth || !d.gt_poses)
        throw UsageError("supervised training needs ground-truth depth and poses; sample " + d.id + " has none");
  } else {
    // Self-supervision never looks at ground truth, even when it is there.
    for (auto& d : data) {
      d.gt_depth.reset();
      d.gt_poses.reset();
    }
  }
  ensure_dir(out);
  const fs::path ckpt = out / "model.ckpt";
  Model<float> model(mcfg);
  Trainer<float> trainer(model, tcfg);
  if (resume && fs::exists(ckpt)) {
    Settings stored;
    declare_run(stored);
    declare_model(stored);
    stored.load_ini(checkpoint_config_path(ckpt));
    for (const auto& key : stored.keys())
      if (key.rfind("model.", 0) == 0 && stored.str(key) != s.str(key))
        throw UsageError("cannot resume: " + key + " differs from the checkpoint");
    load_checkpoint(ckpt.string(), model.parameters(), &trainer.adam());
  }
  s.save_ini(out / "config.ini");
  {
    Settings ms;
    declare_run(ms);
    declare_model(ms);
    ms.set("run.seed", s.str("run.seed"));
    for (const auto& key : ms.keys())
      if (key.rfind("model.", 0) == 0) ms.set(key, s.str(key));
    ms.save_ini(checkpoint_config_path(ckpt));
  }
  std::ofstream log(out / "train.log", resume ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot write " + (out / "train.log").string());

  TrainResult r;
  r.checkpoint = ckpt;
  const double budget = s.num("train.max_minutes") * 60.0;
  const auto start = std::chrono::steady_clock::now();
  bool first = true;
  struct Stop {};
  try {
    trainer.fit(
        data,
        [&](long step, int, const LossReport& rep) {
          const std::string line = rep.line(step);
          log << line << '\n';
          if (progress && step % 50 == 0) *progress << line << '\n';
          if (first) r.first_loss = rep.total;
          first = false;
          r.last_loss = rep.total;
          r.steps = step;
          const double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
          if (budget > 0 && el > budget) throw Stop{};
        },
        [&](int) { save_checkpoint(ckpt.string(), model.parameters(), &trainer.adam()); });
  } catch (const Stop&) {
    r.stopped_early = true;
    save_checkpoint(ckpt.string(), model.parameters(), &trainer.adam());
  }
  r.steps = trainer.step_count();
  log.flush();
  return r;
}

// ---------------------------------------------------------------- infer

struct InferResult {
  std::vector<Prediction> predictions;
};

/// Runs the model on every sample of `data_dir` and writes the prediction
/// directory. Predictions are also returned in memory.
inline InferResult cmd_infer(Settings s, const fs::path& ckpt, const fs::path& data_dir, const fs::path& out) {
  resolve_seed(s);
  const auto model = load_model<float>(ckpt);
  const auto cfg = infer_config(s, model.config().updates_per_stage);
  const auto seq = load_sequence(data_dir);
  ensure_dir(out);
  s.save_ini(out / "config.ini");
  std::ofstream poses(out / "poses.txt");
  if (!poses) throw IoError("cannot write " + (out / "poses.txt").string());
  InferResult r;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto sample = seq[i];
    if (cfg.max_views > 0 && static_cast<std::size_t>(cfg.max_views) > sample.contexts.size())
      throw UsageError("--views " + std::to_string(cfg.max_views) + " but sample " + sample.id + " has only " +
                       std::to_string(sample.contexts.size()) + " context views");
    auto p = predict(model, sample, cfg);
    const fs::path dir = out / p.id;
    ensure_dir(dir);
    write_depth_png(dir / "depth.png", p.depth);
    write_image_png(dir / "depth_color.png",
                    colorize_depth(p.depth, model.config().depth.d_min, model.config().depth.d_max));
    std::ofstream traj(dir / "trajectory.tsv");
    traj << "step\tkind\tstage\tstage_end\tmean_cost\tmean_depth\tabs_rel\trot_deg\ttr_cm\n" << std::setprecision(8);
    for (std::size_t k = 0; k < p.trajectory.records.size(); ++k) {
      const auto& rec = p.trajectory.records[k];
      double md = 0;
      for (float d : rec.depth) md += d;
      if (!rec.depth.empty()) md /= rec.depth.size();
      traj << rec.step << '\t' << to_string(rec.kind) << '\t' << rec.stage << '\t' << rec.stage_end << '\t'
           << rec.mean_cost << '\t' << md << '\t';
      if (sample.gt_depth && !rec.depth.empty())
        traj << evaluate_depth(trajectory_depth(p.trajectory, k, sample.K.height, sample.K.width), *sample.gt_depth)
                    .abs_rel;
      else
        traj << '-';
      if (sample.gt_poses && !rec.poses.empty()) {
        const auto pm = evaluate_poses(rec.poses, *sample.gt_poses);
        traj << '\t' << pm.rot_deg << '\t' << pm.tr_cm << '\n';
      } else {
        traj << "\t-\t-\n";
      }
    }
    if (!traj) throw IoError("failed writing " + (dir / "trajectory.tsv").string());
    for (std::size_t v = 0; v < p.poses.size(); ++v) poses << p.id << ' ' << v + 1 << ' ' << format_pose(p.poses[v]) << '\n';
    r.predictions.push_back(std::move(p));
  }
  if (!poses) throw IoError("failed writing " + (out / "poses.txt").string());
  return r;
}

// ---------------------------------------------------------------- eval

struct EvalRow {
  std::string id;
  DepthMetrics depth;
  std::optional<PoseMetrics> pose;
};

struct EvalResult {
  std::vector<EvalRow> rows;
  DepthMetrics depth;
  std::optional<PoseMetrics> pose;

  std::string table() const {
    auto names = DepthMetrics::names();
    if (pose)
      for (const auto& n : PoseMetrics::names()) names.push_back(n);
    std::ostringstream os;
    os << "id\t" << metrics_header(names) << '\n';
    auto row = [&](const std::string& id, const DepthMetrics& d, const std::optional<PoseMetrics>& p) {
      auto v = d.values();
      if (p)
        for (double x : p->values()) v.push_back(x);
      os << id << '\t' << metrics_row(v) << '\n';
    };
    for (const auto& r : rows) row(r.id, r.depth, r.pose);
    row("mean", depth, pose);
    return os.str();
  }
};

/// Reads poses.txt of a prediction directory: id -> poses by view.
inline std::map<std::string, std::vector<Pose>> read_prediction_poses(const fs::path& pred) {
  std::map<std::string, std::vector<Pose>> out;
  const fs::path path = pred / "poses.txt";
  if (!fs::exists(path)) return out;
  std::ifstream in(path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id;
    std::size_t view = 0;
    if (!(ls >> id >> view) || view < 1) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad pose line");
    std::vector<double> nums;
    double x = 0;
    while (ls >> x) nums.push_back(x);
    if (!ls.eof()) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad number");
    auto& v = out[id];
    if (v.size() != view - 1) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": views out of order");
    v.push_back(pose_from_row_major(nums));
  }
  return out;
}

inline EvalResult cmd_eval(const fs::path& pred, const fs::path& gt_dir, bool median_scale) {
  const auto seq = load_sequence(gt_dir);
  const auto poses = read_prediction_poses(pred);
  std::set<std::string> pred_ids, gt_ids;
  if (!fs::is_directory(pred)) throw IoError("no prediction directory " + pred.string());
  for (const auto& e : fs::directory_iterator(pred))
    if (e.is_directory() && fs::exists(e.path() / "depth.png")) pred_ids.insert(e.path().filename().string());
  for (const auto& ms : seq.manifest().samples) gt_ids.insert(ms.id);
  std::vector<std::string> missing, extra;
  std::set_difference(gt_ids.begin(), gt_ids.end(), pred_ids.begin(), pred_ids.end(), std::back_inserter(missing));
  std::set_difference(pred_ids.begin(), pred_ids.end(), gt_ids.begin(), gt_ids.end(), std::back_inserter(extra));
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "prediction and ground-truth ids differ;";
    if (!missing.empty()) {
      msg += " missing predictions:";
      for (const auto& id : missing) msg += " " + id;
    }
    if (!extra.empty()) {
      msg += (missing.empty() ? "" : ";") + std::string(" unknown ids:");
      for (const auto& id : extra) msg += " " + id;
    }
    throw UsageError(msg);
  }
  EvalResult r;
  bool all_poses = true;
  std::vector<DepthMetrics> dm;
  std::vector<PoseMetrics> pm;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto& ms = seq.manifest().samples[i];
    const auto sample = seq[i];
    if (!sample.gt_depth) throw UsageError("ground truth sample " + ms.id + " has no depth");
    EvalRow row;
    row.id = ms.id;
    row.depth = evaluate_depth(read_depth_png(pred / ms.id / "depth.png"), *sample.gt_depth, median_scale);
    auto it = poses.find(ms.id);
    if (sample.gt_poses && it != poses.end()) {
      row.pose = evaluate_poses(it->second, *sample.gt_poses);
      pm.push_back(*row.pose);
    } else {
      all_poses = false;
    }
    dm.push_back(row.depth);
    r.rows.push_back(std::move(row));
  }
  r.depth = average_metrics(dm);
  if (all_poses && !pm.empty()) {
    r.pose = average_metrics(pm);
  } else {
    for (auto& row : r.rows) row.pose.reset();
  }
  return r;
}

// ---------------------------------------------------------------- bench

struct BenchRow {
  int iterations = 0;
  double seconds = 0;       // median over repeats, whole sample set
  double peak_mib = 0;      // tensor storage high-water mark during one run
  double abs_rel = 0;
};

/// Times inference at each iteration count on the first `samples` samples.
inline std::vector<BenchRow> cmd_bench(Settings s, const fs::path& ckpt, const fs::path& data_dir,
                                       const fs::path& out = {}) {
  resolve_seed(s);
  const auto model = load_model<float>(ckpt);
  const auto counts = parse_int_list(s.str("bench.iterations"));
  const long repeats = s.integer("bench.repeats");
  if (repeats < 5) throw UsageError("--repeats must be >= 5");
  const auto seq = load_sequence(data_dir);
  const std::size_t n = std::min<std::size_t>(seq.size(), static_cast<std::size_t>(std::max(1L, s.integer("bench.samples"))));
  std::vector<SceneSample> samples;
  for (std::size_t i = 0; i < n; ++i) samples.push_back(seq[i]);
  std::vector<BenchRow> rows;
  for (int k : counts) {
    Settings is;
    declare_infer(is);
    for (const auto& key : is.keys()) is.set(key, s.known(key) ? s.str(key) : is.str(key));
    is.set("infer.iterations", std::to_string(k));
    auto cfg = infer_config(is, model.config().updates_per_stage);
    cfg.keep_snapshots = false;
    BenchRow row;
    row.iterations = k;
    std::vector<double> times;
    for (long rep = 0; rep < repeats; ++rep) {
      MemoryStats::reset_peak();
      const auto base = MemoryStats::current().load();
      const auto t0 = std::chrono::steady_clock::now();
      double abs_rel = 0;
      for (const auto& sample : samples) {
        const auto p = predict(model, sample, cfg);
        if (rep == 0 && sample.gt_depth) abs_rel += evaluate_depth(p.depth, *sample.gt_depth).abs_rel / n;
      }
      times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      if (rep == 0) {
        row.abs_rel = abs_rel;
        row.peak_mib = static_cast<double>(MemoryStats::peak().load() - base) / (1024.0 * 1024.0);
      }
    }
    row.seconds = median(times);
    rows.push_back(row);
  }
  if (!out.empty()) {
    ensure_dir(out);
    s.save_ini(out / "config.ini");
  }
  return rows;
}

inline std::string bench_table(const std::vector<BenchRow>& rows) {
  std::ostringstream os;
  os << "iters\tseconds\tpeak_mib\tabs_rel\n" << std::setprecision(6);
  for (const auto& r : rows) os << r.iterations << '\t' << r.seconds << '\t' << r.peak_mib << '\t' << r.abs_rel << '\n';
  return os.str();
}

}  // namespace dro
