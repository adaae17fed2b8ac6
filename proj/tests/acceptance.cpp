// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails.
//
//   acceptance <work_dir> [--reuse] [--only 1,5,...]
//
// --reuse keeps trained checkpoints found in work_dir from an earlier run.

#include <Eigen/Geometry>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "dro/commands.hpp"
#include "support/gradient_cases.hpp"

using namespace dro;

namespace {

// Pinned tolerances.
constexpr int kGradInstances = 20;
constexpr double kGradMinutes = 2.0;
constexpr double kRoundTripTol = 1e-9;
constexpr double kDisparityTol = 1e-6;
constexpr double kAverageTol = 1e-7;
constexpr double kGruTol = 1e-6;
constexpr double kSupervisedAbsRel = 0.10;
constexpr double kImprovementRatio = 0.5;
constexpr double kCostDropFraction = 0.9;
constexpr double kTrendSlack = 0.05;
constexpr double kSelfAbsRel = 0.15;
constexpr double kSelfImprovement = 0.30;
constexpr double kTimeRatio = 3.0, kTimeRatioSlack = 0.25;
constexpr double kDepthMetricTol = 1e-9, kPoseMetricTol = 1e-6;
constexpr int kMetricInstances = 100;

// Shared experiment setup.
constexpr double kTrainMinutes = 22.0;
constexpr int kTrainCount = 500, kTestCount = 50;
// Constant-depth planes make median-scaled depth error vanish for any constant
// prediction, so the self-supervised run uses tilted planes instead.
constexpr const char* kSupervisedGeometry = "fronto-parallel";
constexpr const char* kSelfGeometry = "tilted-plane";

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// ------------------------------------------------------------ properties

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cases = test::run_gradient_suite(kGradInstances, 2024);
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60;
  bool ok = minutes < kGradMinutes;
  std::string failed;
  double worst_op = 0, worst_chain = 0;
  for (const auto& c : cases) {
    if (!c.pass()) ok = false, failed += " " + c.name;
    double& w = c.tolerance <= test::kOpTolerance ? worst_op : worst_chain;
    w = std::max(w, c.worst);
  }
  return {ok, std::to_string(cases.size()) + " cases x " + std::to_string(kGradInstances) +
                  fmt(" instances, worst op %.2e, worst chained %.2e, %.2f min", worst_op, worst_chain, minutes) +
                  (failed.empty() ? "" : ", failed:" + failed)};
}

Outcome geometry_invariants() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-1, 1), D(0.3, 20);
  const Intrinsics K{52.5, 48.0, 31.2, 29.7, 64, 64};
  double proj = 0, exp_log = 0;
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector2d px(64 * (U(rng) + 1) / 2, 64 * (U(rng) + 1) / 2);
    const double d = D(rng);
    const auto back = project(backproject(px, d, K), K).pixel;
    proj = std::max(proj, (back - px).norm());
    Vector6d xi;
    for (int k = 0; k < 6; ++k) xi[k] = U(rng) * (k < 3 ? 1.5 : 2.0);
    exp_log = std::max(exp_log, (se3_log(se3_exp(xi)) - xi).norm());
  }
  double grid = 0;
  {
    auto depth = Tensor<double>::full({1, 8, 8}, 2.0);
    for (auto& v : depth.mutable_data()) v = D(rng);
    const Intrinsics k8 = K.scaled(8);
    const auto c = warp_coords(depth, pose_tensor<double>(Pose::identity()), k8).first;
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) grid = std::max({grid, std::abs(c[y * 8 + x] - x), std::abs(c[64 + y * 8 + x] - y)});
  }
  double disp = 0;
  for (double d : {0.7, 1.5, 4.0})
    for (double b : {-0.2, 0.05, 0.15}) {
      Pose T;
      T.t = {b, 0, 0};
      const auto c = warp_coords(Tensor<double>::full({1, 64, 64}, d), pose_tensor<double>(T), K).first;
      for (int k = 0; k < 64 * 64; ++k)
        disp = std::max({disp, std::abs(c[k] - (k % 64) - K.fx * b / d), std::abs(c[4096 + k] - k / 64)});
    }
  const bool ok = proj < kRoundTripTol && exp_log < kRoundTripTol && grid == 0.0 && disp < kDisparityTol;
  return {ok, fmt("project/backproject %.1e, exp/log %.1e, identity grid %.1e, disparity %.1e", proj, exp_log, grid,
                  disp)};
}

ModelConfig small_model(int seed) {
  ModelConfig c;
  c.feat_channels = c.context_channels = 8;
  c.hidden_channels = c.head_channels = 6;
  c.pv_channels = c.pc_channels = 4;
  c.stages = 2;
  c.updates_per_stage = 2;
  c.seed = seed;
  return c;
}

SceneSample small_sample(int views, std::uint64_t index = 0) {
  SceneSpec sp;
  sp.width = sp.height = 32;
  sp.focal = 32;
  sp.views = views;
  sp.seed = 31;
  return generate_scene(sp, index);
}

bool identical(const Tensor<float>& a, const Tensor<float>& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t k = 0; k < a.numel(); ++k)
    if (a[k] != b[k]) return false;
  return true;
}

Outcome cost_invariants() {
  std::mt19937_64 rng(8);
  const Intrinsics K{8, 8, 3.5, 3.5, 8, 8};
  double zero = 0, avg = 0;
  for (int t = 0; t < 20; ++t) {
    auto f = test::random_tensor({6, 8, 8}, rng, -1, 1, false);
    auto d = test::random_tensor({1, 8, 8}, rng, 0.5, 5, false);
    const auto same = build_cost(f, f, d, pose_tensor<double>(Pose::identity()), K);
    for (double v : same.values.data()) zero = std::max(zero, std::abs(v));
    std::vector<CostMap<double>> maps;
    for (int i = 0; i < 3; ++i) {
      Vector6d xi;
      for (int k = 0; k < 6; ++k) xi[k] = std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
      maps.push_back(build_cost(f, test::random_tensor({6, 8, 8}, rng, -1, 1, false), d,
                                pose_tensor<double>(se3_exp(xi)), K));
    }
    const auto m = average_cost(maps);
    for (int k = 0; k < 64; ++k) {
      double s = 0, n = 0;
      for (const auto& c : maps) s += c.valid[k] * c.values[k], n += c.valid[k];
      avg = std::max(avg, std::abs(m.values[k] - (n > 0 ? s / n : 0.0)));
    }
  }
  Model<float> model(small_model(5));
  const auto s = small_sample(3);
  NoGradGuard ng;
  OptimizeConfig one;
  one.max_views = 1;
  const auto multi = run_multiview(model, s, one);
  const auto two = optimize(model, to_tensor<float>(s.reference), {to_tensor<float>(s.contexts[0])}, s.K);
  bool exact = identical(multi.depth, two.depth) && identical(multi.xis[0], two.xis[0]);
  for (std::size_t k = 0; k < multi.trajectory.records.size(); ++k)
    exact = exact && multi.trajectory.records[k].mean_cost == two.trajectory.records[k].mean_cost;
  return {zero == 0.0 && avg < kAverageTol && exact,
          fmt("identity cost max %.1e, averaging error %.1e, ", zero, avg) +
              (exact ? "N=1 bit-exact" : "N=1 differs from the two-view pipeline")};
}

double sigm(double x) { return 1 / (1 + std::exp(-x)); }

Outcome gru_correctness() {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-1.5, 1.5);
  GruCell<float> cell;
  double a[3][3];
  for (int g = 0; g < 3; ++g) {
    std::vector<float> wh(10), wv(5), b(1);
    for (auto& x : wh) x = static_cast<float>(U(rng));
    for (auto& x : wv) x = static_cast<float>(U(rng));
    b[0] = static_cast<float>(U(rng));
    a[g][0] = double(wv[2]) * wh[2];
    a[g][1] = double(wv[2]) * wh[7];
    a[g][2] = b[0];
    (g == 0 ? cell.z : g == 1 ? cell.r : cell.h) =
        SeparableLayer<float>{Tensor<float>::from({1, 2, 1, 5}, wh), Tensor<float>::from({1, 1, 5, 1}, wv),
                              Tensor<float>::from({1}, b)};
  }
  double h = 0.3, scalar_err = 0;
  auto ht = Tensor<float>::from({1, 1, 1}, {0.3f});
  for (int t = 0; t < 30; ++t) {
    const double m = std::sin(0.7 * t);
    ht = Model<float>::gru_step(cell, ht, Tensor<float>::from({1, 1, 1}, {static_cast<float>(m)}));
    const double z = sigm(a[0][0] * h + a[0][1] * m + a[0][2]), r = sigm(a[1][0] * h + a[1][1] * m + a[1][2]);
    h = (1 - z) * h + z * std::tanh(a[2][0] * r * h + a[2][1] * m + a[2][2]);
    scalar_err = std::max(scalar_err, std::abs(double(ht[0]) - h));
  }

  Model<float> zero(small_model(6));
  zero.zero_parameters();
  NoGradGuard ng;
  const auto r = run_multiview(zero, small_sample(2));
  bool constant = identical(r.depth, r.initial_depth);
  for (std::size_t i = 0; i < r.xis.size(); ++i) constant = constant && identical(r.xis[i], r.initial_xis[i]);
  for (const auto& rec : r.trajectory.records)
    constant = constant && rec.depth == r.trajectory.records[0].depth &&
               rec.mean_cost == r.trajectory.records[0].mean_cost;

  // Saturated gates round tanh to exactly 1 in floating point, so the open
  // bound is checked at the initial weight scale and the closed one at 4x.
  double hmax[2] = {0, 0};
  const double scales[2] = {1, 4};
  for (int i = 0; i < 2; ++i) {
    Model<double> big(small_model(7));
    for (auto& p : big.parameters())
      for (auto& v : p.tensor.mutable_data()) v *= scales[i];
    const auto s = small_sample(1, 3);
    auto st = initialize_state(big, to_tensor<double>(s.reference), {to_tensor<double>(s.contexts[0])}, s.K);
    for (int k = 0; k < 12; ++k) {
      update_depth(st);
      update_pose(st, 0);
      for (const auto* t : {&st.h_depth, &st.h_pose[0]})
        for (double v : t->data()) hmax[i] = std::max(hmax[i], std::abs(v));
    }
  }
  return {scalar_err < kGruTol && constant && hmax[0] < 1.0 && hmax[1] <= 1.0,
          fmt("scalar recurrence error %.1e, max |h| %.6f (saturated weights %.6f), ", scalar_err, hmax[0], hmax[1]) +
              (constant ? "zero-weight trajectory constant" : "zero-weight trajectory moved")};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> G(0.5, 10), F(0.6, 1.6), U(-1, 1), A(0, M_PI);
  double depth_err = 0, pose_err = 0;
  bool ordered = true;
  for (int t = 0; t < kMetricInstances; ++t) {
    std::vector<double> p(64), g(64);
    for (int k = 0; k < 64; ++k) g[k] = G(rng), p[k] = g[k] * F(rng);
    const auto m = depth_metrics(p, g);
    double abs_rel = 0, sq_rel = 0, se = 0, sle = 0, d1 = 0, d2 = 0, d3 = 0, inv = 0, pair = 0;
    for (int i = 0; i < 64; ++i) {
      const double r = std::max(p[i] / g[i], g[i] / p[i]);
      abs_rel += std::abs(p[i] - g[i]) / g[i] / 64;
      sq_rel += (p[i] - g[i]) * (p[i] - g[i]) / g[i] / 64;
      se += (p[i] - g[i]) * (p[i] - g[i]) / 64;
      sle += std::pow(std::log(p[i] / g[i]), 2) / 64;
      d1 += (r < 1.25) / 64.0, d2 += (r < 1.5625) / 64.0, d3 += (r < 1.953125) / 64.0;
      inv += std::abs(1 / p[i] - 1 / g[i]) / 64;
      for (int j = 0; j < 64; ++j) pair += std::pow(std::log(p[i] / g[i]) - std::log(p[j] / g[j]), 2);
    }
    const double want[] = {abs_rel, sq_rel, std::sqrt(se), std::sqrt(sle), d1, d2, d3,
                           std::sqrt(pair / (2.0 * 64 * 64)), inv, std::sqrt(pair / (2.0 * 64 * 64)), abs_rel};
    const auto got = m.values();
    for (std::size_t k = 0; k < got.size(); ++k) depth_err = std::max(depth_err, std::abs(got[k] - want[k]));
    ordered = ordered && m.delta1 <= m.delta2 && m.delta2 <= m.delta3 && m.delta1 >= 0 && m.delta3 <= 1;

    Pose a, b;
    for (Pose* P : {&a, &b}) {
      P->R = Eigen::AngleAxisd(A(rng), Eigen::Vector3d(U(rng), U(rng), U(rng)).normalized()).toRotationMatrix();
      P->t = {U(rng), U(rng), U(rng)};
    }
    const auto pm = pose_metrics(a, b);
    const Eigen::Quaterniond qa(a.R), qb(b.R);
    const double rot = 2 * std::acos(std::min(1.0, std::abs(qa.dot(qb)))) * 180 / M_PI;
    const double tr = std::acos(std::clamp(a.t.normalized().dot(b.t.normalized()), -1.0, 1.0)) * 180 / M_PI;
    pose_err = std::max({pose_err, std::abs(pm.rot_deg - rot), std::abs(pm.tr_deg - tr),
                         std::abs(pm.tr_cm - 100 * (a.t - b.t).norm())});
  }
  return {depth_err < kDepthMetricTol && pose_err < kPoseMetricTol && ordered,
          fmt("depth oracle %.1e, pose oracle %.1e over %g instances", depth_err, pose_err, kMetricInstances) +
              (ordered ? ", delta ordering holds" : ", delta ordering violated")};
}

// ------------------------------------------------------------ experiments

Settings data_settings(const std::string& seed, int count, const std::string& geometry, bool with_gt) {
  Settings s;
  declare_run(s);
  declare_data(s);
  s.set("run.seed", seed);
  s.set("data.count", std::to_string(count));
  s.set("data.geometry", geometry);
  s.set("data.with_gt", with_gt ? "true" : "false");
  s.set("data.views", "1");
  s.set("data.max_rotation_deg", "1");
  s.set("data.min_translation", "0.15");
  s.set("data.max_translation", "0.15");
  s.set("data.lateral", "true");
  return s;
}

Settings train_settings(const std::string& mode, bool use_cost, const std::string& update_mode) {
  Settings s;
  declare_run(s);
  declare_model(s);
  declare_train(s);
  s.set("run.seed", "11");
  for (const char* k : {"model.feat_channels", "model.context_channels", "model.hidden_channels",
                        "model.head_channels"})
    s.set(k, "32");
  s.set("model.pv_channels", "16");
  s.set("model.pc_channels", "16");
  s.set("model.depth_min", "0.5");
  s.set("model.depth_max", "5");
  s.set("model.stages", "3");
  s.set("model.updates", "4");
  s.set("train.mode", mode);
  s.set("train.epochs", "52");
  s.set("train.batch_size", "4");
  s.set("train.lr", "1e-3");
  s.set("train.lr_final", "1e-4");
  s.set("train.clip_norm", "5");
  s.set("train.augment", "true");
  s.set("train.use_cost", use_cost ? "true" : "false");
  s.set("train.update_mode", update_mode);
  s.set("train.max_minutes", std::to_string(kTrainMinutes));
  return s;
}

struct Experiment {
  fs::path work;
  bool reuse = false;
  std::string geometry;
  bool train_gt = true;

  fs::path train_dir() const { return work / ("train_" + geometry); }
  fs::path test_dir() const { return work / ("test_" + geometry); }

  void ensure_data() const {
    if (!(reuse && fs::exists(train_dir() / "manifest.txt")))
      cmd_gen(data_settings("11", kTrainCount, geometry, train_gt), train_dir(), true);
    if (!(reuse && fs::exists(test_dir() / "manifest.txt")))
      cmd_gen(data_settings("1011", kTestCount, geometry, true), test_dir(), true);
  }

  /// Trains (or reuses) a model; returns its checkpoint.
  fs::path model(const std::string& name, const Settings& s) const {
    const fs::path dir = work / name, done = dir / "done";
    if (reuse && fs::exists(done)) return dir / "model.ckpt";
    fs::remove_all(dir);
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = cmd_train(s, train_dir(), dir, false);
    const double min = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60;
    std::ofstream(done) << r.steps << " steps in " << min << " min\n";
    std::cerr << "  trained " << name << ": " << r.steps << " steps, " << min << " min\n";
    return r.checkpoint;
  }

  struct Scores {
    double abs_rel = 0;
    double cost_drop = 0;  // fraction of samples whose last mean cost is below the initial one
  };

  Scores score(const fs::path& ckpt, const std::string& tag, std::optional<int> iterations, bool use_cost,
               bool median_scale, const std::string& update_mode = "alternate") const {
    Settings s;
    declare_run(s);
    declare_infer(s);
    if (iterations) s.set("infer.iterations", std::to_string(*iterations));
    s.set("infer.use_cost", use_cost ? "true" : "false");
    s.set("infer.update_mode", update_mode);
    const fs::path out = work / "pred" / tag;
    fs::remove_all(out);
    const auto r = cmd_infer(s, ckpt, test_dir(), out);
    Scores sc;
    for (const auto& p : r.predictions) {
      const auto& t = p.trajectory.records;
      if (t.back().mean_cost < t.front().mean_cost) sc.cost_drop += 1.0 / r.predictions.size();
    }
    sc.abs_rel = cmd_eval(out, test_dir(), median_scale).depth.abs_rel;
    return sc;
  }
};

struct Trained {
  fs::path full, no_cost, joint, self;
};

Outcome supervised_run(const Experiment& e, const fs::path& ckpt) {
  const auto fin = e.score(ckpt, "full", std::nullopt, true, false);
  const auto init = e.score(ckpt, "full_iter0", 0, true, false);
  const bool ok = fin.abs_rel < kSupervisedAbsRel && fin.abs_rel <= kImprovementRatio * init.abs_rel &&
                  fin.cost_drop >= kCostDropFraction;
  return {ok, fmt("abs_rel %.4f (iteration 0: %.4f, ratio %.3f), cost decreased on %.0f%% of samples", fin.abs_rel,
                  init.abs_rel, fin.abs_rel / init.abs_rel, 100 * fin.cost_drop)};
}

Outcome iteration_trend(const Experiment& e, const fs::path& ckpt) {
  double a[3];
  const int its[3] = {4, 8, 12};
  for (int k = 0; k < 3; ++k) a[k] = e.score(ckpt, "iters_" + std::to_string(its[k]), its[k], true, false).abs_rel;
  const bool ok = a[1] <= a[0] * (1 + kTrendSlack) && a[2] <= a[1] * (1 + kTrendSlack);
  return {ok, fmt("abs_rel at 4/8/12 iterations: %.4f / %.4f / %.4f", a[0], a[1], a[2])};
}

Outcome ablation(const Experiment& e, const Trained& m) {
  const double full = e.score(m.full, "full", std::nullopt, true, false).abs_rel;
  const double wo = e.score(m.no_cost, "no_cost", std::nullopt, false, false).abs_rel;
  const double joint = e.score(m.joint, "joint", std::nullopt, true, false, "joint").abs_rel;
  return {full <= wo, fmt("full %.4f <= w/o cost %.4f; joint update (reported only) %.4f", full, wo, joint)};
}

Outcome self_supervised(const Experiment& e, const fs::path& ckpt) {
  const double fin = e.score(ckpt, "self", std::nullopt, true, true).abs_rel;
  const double init = e.score(ckpt, "self_iter0", 0, true, true).abs_rel;
  const double gain = 1 - fin / init;
  return {fin < kSelfAbsRel && gain >= kSelfImprovement,
          fmt("median-scaled abs_rel %.4f (iteration 0: %.4f, improvement %.1f%%)", fin, init, 100 * gain)};
}

Outcome efficiency(const Experiment& e, const fs::path& ckpt) {
  Settings s;
  declare_run(s);
  declare_infer(s);
  declare_bench(s);
  s.set("bench.iterations", "4,12");
  s.set("bench.repeats", "5");
  s.set("bench.samples", "10");
  const auto rows = cmd_bench(s, ckpt, e.test_dir(), e.work / "bench");
  const double ratio = rows[1].seconds / rows[0].seconds;
  const bool ok = std::abs(ratio - kTimeRatio) <= kTimeRatioSlack * kTimeRatio;
  return {ok, fmt("time(12)/time(4) = %.3f (%.3f s / %.3f s), peak %.1f MiB", ratio, rows[1].seconds,
                  rows[0].seconds, rows[1].peak_mib)};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <work_dir> [--reuse] [--only 1,2,...]\n";
    return 2;
  }
  Experiment e;
  e.work = argv[1];
  e.geometry = kSupervisedGeometry;
  std::set<int> only;
  for (int i = 2; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--reuse") {
      e.reuse = true;
    } else if (a == "--only" && i + 1 < argc) {
      for (int k : parse_int_list(argv[++i])) only.insert(k);
    } else {
      std::cerr << "unknown argument " << a << '\n';
      return 2;
    }
  }
  auto wanted = [&](int k) { return only.empty() || only.count(k); };
  fs::create_directories(e.work);
  Experiment es = e;
  es.geometry = kSelfGeometry;
  es.train_gt = false;

  const char* names[] = {"",
                         "gradient suite",
                         "geometry invariants",
                         "cost invariants",
                         "GRU correctness",
                         "supervised toy run",
                         "iteration trend",
                         "ablation direction",
                         "self-supervised toy run",
                         "efficiency structure",
                         "metric oracles"};
  int failures = 0;
  auto report = [&](int k, const Outcome& o) {
    std::cout << "criterion " << k << " [" << (o.pass ? "PASS" : "FAIL") << "] " << names[k] << ": " << o.detail
              << std::endl;
    failures += !o.pass;
  };
  auto guarded = [&](int k, const std::function<Outcome()>& f) {
    if (!wanted(k)) return;
    try {
      report(k, f());
    } catch (const std::exception& ex) {
      report(k, {false, std::string("error: ") + ex.what()});
    }
  };

  guarded(1, gradient_suite);
  guarded(2, geometry_invariants);
  guarded(3, cost_invariants);
  guarded(4, gru_correctness);
  guarded(10, metric_oracles);

  const bool need_data = wanted(5) || wanted(6) || wanted(7) || wanted(8) || wanted(9);
  Trained m;
  if (need_data) {
    try {
      if (wanted(5) || wanted(6) || wanted(7) || wanted(9)) e.ensure_data();
      if (wanted(8)) es.ensure_data();
      if (wanted(5) || wanted(6) || wanted(7) || wanted(9))
        m.full = e.model("model_full", train_settings("supervised", true, "alternate"));
      if (wanted(7)) {
        m.no_cost = e.model("model_no_cost", train_settings("supervised", false, "alternate"));
        m.joint = e.model("model_joint", train_settings("supervised", true, "joint"));
      }
      if (wanted(8)) m.self = es.model("model_self", train_settings("self", true, "alternate"));
    } catch (const std::exception& ex) {
      for (int k = 5; k <= 9; ++k)
        if (wanted(k)) report(k, {false, std::string("setup error: ") + ex.what()});
      return 1;
    }
  }
  guarded(5, [&] { return supervised_run(e, m.full); });
  guarded(6, [&] { return iteration_trend(e, m.full); });
  guarded(7, [&] { return ablation(e, m); });
  guarded(8, [&] { return self_supervised(es, m.self); });
  guarded(9, [&] { return efficiency(e, m.full); });

  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed"))
            << std::endl;
  return failures ? 1 : 0;
}
