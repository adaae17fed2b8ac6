#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dro/commands.hpp"

using namespace dro;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "dro_cli_test";

std::string cli() {
  const char* p = std::getenv("DRO_CLI");
  return p ? p : "dro";
}

struct Run {
  int code;
  std::string out;
};

Run run(const std::string& args) {
  const fs::path log = kRoot / "last_run.txt";
  const int status = std::system((cli() + " " + args + " > " + log.string() + " 2>&1").c_str());
  std::ifstream in(log);
  std::string text{std::istreambuf_iterator<char>(in), {}};
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, text};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

Settings gen_settings(int count, const std::string& seed = "7") {
  Settings s;
  declare_run(s);
  declare_data(s);
  s.set("run.seed", seed);
  s.set("data.count", std::to_string(count));
  s.set("data.width", "32");
  s.set("data.height", "32");
  s.set("data.focal", "32");
  s.set("data.views", "2");
  return s;
}

Settings train_settings(int epochs) {
  Settings s;
  declare_run(s);
  declare_model(s);
  declare_train(s);
  s.set("run.seed", "3");
  s.set("model.feat_channels", "8");
  s.set("model.context_channels", "8");
  s.set("model.hidden_channels", "6");
  s.set("model.pv_channels", "4");
  s.set("model.pc_channels", "4");
  s.set("model.head_channels", "6");
  s.set("model.stages", "2");
  s.set("model.updates", "2");
  s.set("train.epochs", std::to_string(epochs));
  s.set("train.batch_size", "2");
  s.set("train.lr", "2e-3");
  s.set("train.lr_final", "1e-3");
  return s;
}

std::vector<double> log_totals(const fs::path& log) {
  std::vector<double> out;
  std::ifstream in(log);
  std::string line;
  while (std::getline(in, line)) {
    const auto p = line.find("total=");
    out.push_back(std::stod(line.substr(p + 6)));
  }
  return out;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    cmd_gen(gen_settings(6), kRoot / "data", false);
    cmd_train(train_settings(1), kRoot / "data", kRoot / "model", false);
  }
  static void TearDownTestSuite() { fs::remove_all(kRoot); }
};

}  // namespace

TEST_F(Cli, GenIsDeterministicAndEchoesSettings) {
  const auto a = kRoot / "gen_a", b = kRoot / "gen_b";
  ASSERT_EQ(run("gen " + a.string() + " --count 3 --seed 11 --width 32 --height 32 --geometry two-plane-step").code, 0);
  ASSERT_EQ(run("gen " + b.string() + " --count 3 --seed 11 --width 32 --height 32 --geometry two-plane-step").code, 0);
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
  }
  const auto manifest = slurp(a / "manifest.txt");
  EXPECT_NE(manifest.find("# data.geometry = two-plane-step"), std::string::npos);
  EXPECT_NE(manifest.find("# run.seed = 11"), std::string::npos);
  EXPECT_NE(slurp(a / "config.ini").find("seed = 11"), std::string::npos);
  EXPECT_EQ(load_sequence(a).size(), 3u);
}

TEST_F(Cli, SeedFallsBackToEnvironment) {
  const auto a = kRoot / "env_a", b = kRoot / "env_b";
  ASSERT_EQ(run("gen " + a.string() + " --count 1 --width 32 --height 32 --seed 42").code, 0);
  ASSERT_EQ(std::system(("DRO_SEED=42 " + cli() + " gen " + b.string() + " --count 1 --width 32 --height 32 > /dev/null")
                            .c_str()),
            0);
  EXPECT_EQ(slurp(a / "s00000" / "image_0.png"), slurp(b / "s00000" / "image_0.png"));
}

TEST_F(Cli, GenRefusesNonEmptyDirectoryWithoutForce) {
  const auto d = kRoot / "gen_force";
  ASSERT_EQ(run("gen " + d.string() + " --count 1 --width 32 --height 32").code, 0);
  const auto r = run("gen " + d.string() + " --count 1 --width 32 --height 32");
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_NE(r.out.find("--force"), std::string::npos);
  EXPECT_EQ(run("gen " + d.string() + " --count 2 --width 32 --height 32 --force").code, 0);
  EXPECT_EQ(load_sequence(d).size(), 2u);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("gen").code, 2);
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("gen " + (kRoot / "x").string() + " --width 30").code, 2);
  EXPECT_EQ(run("gen " + (kRoot / "x").string() + " --seed abc").code, 2);
  write_text(kRoot / "bad.ini", "[data]\nno_such_key = 1\n");
  EXPECT_EQ(run("gen " + (kRoot / "x").string() + " --config " + (kRoot / "bad.ini").string()).code, 2);
  // A regular file where a directory is needed: the data error code.
  write_text(kRoot / "plain_file", "x");
  EXPECT_EQ(run("gen " + (kRoot / "plain_file" / "sub").string() + " --count 1").code, 3);
  EXPECT_EQ(run("eval " + (kRoot / "nowhere").string() + " " + (kRoot / "nothing").string()).code, 3);
  EXPECT_EQ(run("infer " + (kRoot / "missing.ckpt").string() + " " + (kRoot / "data").string() + " " +
                (kRoot / "p").string())
                .code,
            3);
}

TEST_F(Cli, ConfigFileAndFlagPrecedence) {
  write_text(kRoot / "gen.ini", "[data]\ncount = 2\nwidth = 32\nheight = 32\nviews = 3\n");
  const auto d = kRoot / "gen_cfg";
  ASSERT_EQ(run("gen " + d.string() + " --config " + (kRoot / "gen.ini").string() + " --views 1").code, 0);
  const auto seq = load_sequence(d);
  EXPECT_EQ(seq.size(), 2u);
  EXPECT_EQ(seq[0].contexts.size(), 1u);
}

TEST_F(Cli, InferEvalLoop) {
  const auto ckpt = (kRoot / "model" / "model.ckpt").string();
  const auto pred = kRoot / "pred";
  ASSERT_EQ(run("infer " + ckpt + " " + (kRoot / "data").string() + " " + pred.string()).code, 0);
  for (const char* f : {"s00000/depth.png", "s00000/depth_color.png", "s00000/trajectory.tsv", "poses.txt",
                        "config.ini"})
    EXPECT_TRUE(fs::exists(pred / f)) << f;
  // Trajectory of the trained schedule: init + 2 stages x (2 depth + 2 pose).
  std::ifstream traj(pred / "s00000" / "trajectory.tsv");
  int lines = 0;
  for (std::string l; std::getline(traj, l);) ++lines;
  EXPECT_EQ(lines, 1 + 1 + 8);
  const auto r = run("eval " + pred.string() + " " + (kRoot / "data").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("abs_rel"), std::string::npos);
  EXPECT_NE(r.out.find("rot_deg"), std::string::npos);
  EXPECT_NE(r.out.find("\nmean\t"), std::string::npos);

  // The depth file decodes to the in-memory result within the quantization step.
  Settings s;
  declare_run(s);
  declare_infer(s);
  const auto mem = cmd_infer(s, ckpt, kRoot / "data", kRoot / "pred_mem");
  const auto file = read_depth_png(kRoot / "pred_mem" / "s00001" / "depth.png");
  for (std::size_t k = 0; k < file.data.size(); ++k)
    EXPECT_LE(std::abs(file.data[k] - mem.predictions[1].depth.data[k]), 0.5 / 256 + 1e-6);

  // The aggregate is the mean of the per-sample rows.
  const auto ev = cmd_eval(kRoot / "pred_mem", kRoot / "data", false);
  double mean_abs = 0, mean_rot = 0;
  for (const auto& row : ev.rows) {
    mean_abs += row.depth.abs_rel / ev.rows.size();
    mean_rot += row.pose->rot_deg / ev.rows.size();
  }
  EXPECT_NEAR(ev.depth.abs_rel, mean_abs, 1e-12);
  EXPECT_NEAR(ev.pose->rot_deg, mean_rot, 1e-12);

  // The last trajectory row carries the errors of the final estimate.
  std::ifstream tr(kRoot / "pred_mem" / "s00000" / "trajectory.tsv");
  std::string header, line, last;
  std::getline(tr, header);
  EXPECT_EQ(header, "step\tkind\tstage\tstage_end\tmean_cost\tmean_depth\tabs_rel\trot_deg\ttr_cm");
  while (std::getline(tr, line)) last = line;
  std::vector<std::string> cols;
  std::istringstream ls(last);
  for (std::string c; std::getline(ls, c, '\t');) cols.push_back(c);
  ASSERT_EQ(cols.size(), 9u) << last;
  const auto& p0 = mem.predictions[0];
  const auto gt = load_sequence(kRoot / "data")[0];
  EXPECT_NEAR(std::stod(cols[6]), evaluate_depth(p0.depth, *gt.gt_depth).abs_rel, 1e-6);
  EXPECT_NEAR(std::stod(cols[7]), evaluate_poses(p0.poses, *gt.gt_poses).rot_deg, 1e-5);
}

TEST_F(Cli, InferIterationsAndViews) {
  const auto ckpt = (kRoot / "model" / "model.ckpt").string();
  const auto data = (kRoot / "data").string();
  ASSERT_EQ(run("infer " + ckpt + " " + data + " " + (kRoot / "it0").string() + " --iters 0").code, 0);
  std::ifstream traj(kRoot / "it0" / "s00000" / "trajectory.tsv");
  int lines = 0;
  for (std::string l; std::getline(traj, l);) ++lines;
  EXPECT_EQ(lines, 2);  // header + initialization
  const auto bad = run("infer " + ckpt + " " + data + " " + (kRoot / "it3").string() + " --iters 3");
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.out.find("multiple of n = 2"), std::string::npos) << bad.out;
  EXPECT_EQ(run("infer " + ckpt + " " + data + " " + (kRoot / "v1").string() + " --views 1").code, 0);
  EXPECT_EQ(run("infer " + ckpt + " " + data + " " + (kRoot / "v5").string() + " --views 5").code, 2);
  EXPECT_NE(slurp(kRoot / "v1" / "s00000" / "depth.png"), slurp(kRoot / "it0" / "s00000" / "depth.png"));
  std::ifstream poses(kRoot / "v1" / "poses.txt");
  int n = 0;
  for (std::string l; std::getline(poses, l);) ++n;
  EXPECT_EQ(n, 6);  // one view per sample
}

TEST_F(Cli, EvalPerfectAndMedianScaled) {
  Settings s;
  declare_run(s);
  declare_infer(s);
  const auto ckpt = kRoot / "model" / "model.ckpt";
  cmd_infer(s, ckpt, kRoot / "data", kRoot / "perfect");
  const auto seq = load_sequence(kRoot / "data");
  std::ofstream poses(kRoot / "perfect" / "poses.txt");
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto smp = seq[i];
    write_depth_png(kRoot / "perfect" / smp.id / "depth.png", *smp.gt_depth);
    for (std::size_t v = 0; v < smp.gt_poses->size(); ++v)
      poses << smp.id << ' ' << v + 1 << ' ' << format_pose((*smp.gt_poses)[v]) << '\n';
  }
  poses.close();
  const auto ev = cmd_eval(kRoot / "perfect", kRoot / "data", false);
  EXPECT_NEAR(ev.depth.abs_rel, 0.0, 1e-9);
  EXPECT_DOUBLE_EQ(ev.depth.delta1, 1.0);
  EXPECT_DOUBLE_EQ(ev.depth.delta3, 1.0);
  EXPECT_NEAR(ev.pose->rot_deg, 0.0, 1e-5);
  EXPECT_NEAR(ev.pose->tr_cm, 0.0, 1e-9);

  for (std::size_t i = 0; i < seq.size(); ++i) {
    auto d = *seq[i].gt_depth;
    for (auto& v : d.data) v *= 0.5f;
    write_depth_png(kRoot / "perfect" / seq[i].id / "depth.png", d);
  }
  EXPECT_NEAR(cmd_eval(kRoot / "perfect", kRoot / "data", false).depth.abs_rel, 0.5, 1e-2);
  EXPECT_NEAR(cmd_eval(kRoot / "perfect", kRoot / "data", true).depth.abs_rel, 0.0, 1e-2);
  const auto r = run("eval " + (kRoot / "perfect").string() + " " + (kRoot / "data").string() + " --median-scale");
  EXPECT_EQ(r.code, 0);
}

TEST_F(Cli, EvalIdMismatchListsIds) {
  Settings s;
  declare_run(s);
  declare_infer(s);
  cmd_infer(s, kRoot / "model" / "model.ckpt", kRoot / "data", kRoot / "mismatch");
  fs::remove_all(kRoot / "mismatch" / "s00002");
  fs::create_directories(kRoot / "mismatch" / "zzz");
  fs::copy_file(kRoot / "mismatch" / "s00000" / "depth.png", kRoot / "mismatch" / "zzz" / "depth.png");
  const auto r = run("eval " + (kRoot / "mismatch").string() + " " + (kRoot / "data").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("missing predictions: s00002"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("unknown ids: zzz"), std::string::npos) << r.out;
}

TEST_F(Cli, SelfModeNeedsNoGroundTruthAndSupervisedDoes) {
  auto g = gen_settings(2);
  g.set("data.with_gt", "false");
  cmd_gen(g, kRoot / "nogt", false);
  EXPECT_FALSE(load_sequence(kRoot / "nogt").manifest().has_depth());
  auto t = train_settings(1);
  EXPECT_THROW(cmd_train(t, kRoot / "nogt", kRoot / "m_sup", false), UsageError);
  t.set("train.mode", "self");
  const auto r = cmd_train(t, kRoot / "nogt", kRoot / "m_self", false);
  EXPECT_EQ(r.steps, 1);
  EXPECT_TRUE(std::isfinite(r.last_loss));
  EXPECT_NE(slurp(kRoot / "m_self" / "train.log").find("mode=self_supervised"), std::string::npos);
}

TEST_F(Cli, TrainingLowersTheLoss) {
  cmd_gen(gen_settings(50, "9"), kRoot / "smoke", false);
  const auto r = cmd_train(train_settings(2), kRoot / "smoke", kRoot / "m_smoke", false);
  EXPECT_EQ(r.steps, 50);
  const auto tot = log_totals(kRoot / "m_smoke" / "train.log");
  ASSERT_EQ(tot.size(), 50u);
  double first = 0, last = 0;
  for (int k = 0; k < 5; ++k) first += tot[k] / 5, last += tot[45 + k] / 5;
  EXPECT_LT(last, first);
  for (const char* f : {"model.ckpt", "model.ini", "config.ini", "train.log"})
    EXPECT_TRUE(fs::exists(kRoot / "m_smoke" / f)) << f;
}

TEST_F(Cli, ResumeReproducesTheUninterruptedRun) {
  cmd_gen(gen_settings(10, "5"), kRoot / "resume_data", false);
  cmd_train(train_settings(2), kRoot / "resume_data", kRoot / "full", false);
  cmd_train(train_settings(1), kRoot / "resume_data", kRoot / "split", false);
  const auto r = cmd_train(train_settings(2), kRoot / "resume_data", kRoot / "split", true);
  EXPECT_EQ(r.steps, 10);
  const auto a = log_totals(kRoot / "full" / "train.log"), b = log_totals(kRoot / "split" / "train.log");
  ASSERT_EQ(a.size(), 10u);
  ASSERT_EQ(b.size(), 10u);
  for (std::size_t k = 0; k < 10; ++k) EXPECT_NEAR(b[k], a[k], 1e-5 * std::max(1.0, std::abs(a[k]))) << k;

  auto other = train_settings(2);
  other.set("model.hidden_channels", "8");
  EXPECT_THROW(cmd_train(other, kRoot / "resume_data", kRoot / "split", true), UsageError);
}

TEST_F(Cli, BenchTableShape) {
  Settings s;
  declare_run(s);
  declare_infer(s);
  declare_bench(s);
  s.set("bench.iterations", "0,2,4");
  s.set("bench.samples", "2");
  const auto rows = cmd_bench(s, kRoot / "model" / "model.ckpt", kRoot / "data", kRoot / "bench");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[2].iterations, 4);
  EXPECT_GT(rows[2].seconds, rows[0].seconds);
  EXPECT_GT(rows[0].peak_mib, 0.0);
  EXPECT_TRUE(fs::exists(kRoot / "bench" / "config.ini"));
  s.set("bench.repeats", "3");
  EXPECT_THROW(cmd_bench(s, kRoot / "model" / "model.ckpt", kRoot / "data"), UsageError);
  const auto r = run("bench " + (kRoot / "model" / "model.ckpt").string() + " " + (kRoot / "data").string() +
                     " --iters 0,4 --samples 1 --out " + (kRoot / "bench_cli").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(slurp(kRoot / "bench_cli" / "bench.tsv").find("iters\tseconds\tpeak_mib\tabs_rel"), std::string::npos);
}
