// dro: dataset generation, training, inference, evaluation and benchmarking.
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numerics error,
// 1 anything else.

#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "dro/commands.hpp"

namespace {

using namespace dro;

enum Exit { kOk = 0, kOther = 1, kUsage = 2, kData = 3, kNumerics = 4 };

/// A flag bound to a settings key; applied only when given on the command line.
struct Override {
  std::string key;
  std::string value;
  CLI::Option* opt = nullptr;
};

class Command {
 public:
  Command(CLI::App& app, const std::string& name, const std::string& about) : sub_(app.add_subcommand(name, about)) {
    declare_run(settings_);
    sub_->add_option("--config", config_, "INI file with settings (flags win over it)")->check(CLI::ExistingFile);
    bind("--seed", "run.seed", "master seed; $DRO_SEED when absent");
  }
  CLI::App* app() { return sub_; }
  Settings& settings() { return settings_; }

  void bind(const std::string& flag, const std::string& key, const std::string& help = {}) {
    overrides_.push_back(std::make_unique<Override>());
    auto& o = *overrides_.back();
    o.key = key;
    const auto& h = help.empty() ? settings_.help(key) : help;
    o.opt = sub_->add_option(flag, o.value, h + " [" + key + "]");
  }
  void bind_flag(const std::string& flag, const std::string& key) {
    overrides_.push_back(std::make_unique<Override>());
    auto& o = *overrides_.back();
    o.key = key;
    o.opt = sub_->add_flag_function(
        flag, [&o](std::int64_t) { o.value = "true"; }, settings_.help(key) + " [" + key + "]");
  }

  /// Settings from defaults, then the config file, then flags.
  Settings resolved() {
    Settings s = settings_;
    if (!config_.empty()) s.load_ini(config_);
    for (const auto& o : overrides_)
      if (o->opt->count() > 0) s.set(o->key, o->value);
    return s;
  }

 private:
  CLI::App* sub_;
  Settings settings_;
  std::string config_;
  std::vector<std::unique_ptr<Override>> overrides_;
};

int run(int argc, char** argv) {
  CLI::App app{"Deep recurrent optimizer for depth and camera motion on synthetic scenes"};
  app.require_subcommand(1);

  Command gen(app, "gen", "generate a synthetic dataset");
  declare_data(gen.settings());
  std::string gen_out;
  bool force = false;
  gen.app()->add_option("out_dir", gen_out, "output directory")->required();
  gen.app()->add_flag("--force", force, "overwrite a non-empty output directory");
  gen.bind("--count", "data.count");
  gen.bind("--width", "data.width");
  gen.bind("--height", "data.height");
  gen.bind("--focal", "data.focal");
  gen.bind("--geometry", "data.geometry");
  gen.bind("--views", "data.views");
  gen.bind("--max-rotation", "data.max_rotation_deg");
  gen.bind("--min-translation", "data.min_translation");
  gen.bind("--max-translation", "data.max_translation");
  gen.bind_flag("--lateral", "data.lateral");
  gen.bind("--depth-min", "data.depth_min");
  gen.bind("--depth-max", "data.depth_max");
  gen.bind("--noise", "data.noise_sigma");
  gen.bind("--texture-scale", "data.texture_scale");
  gen.bind("--with-gt", "data.with_gt");

  Command train(app, "train", "train a model on a dataset");
  declare_model(train.settings());
  declare_train(train.settings());
  std::string train_data, train_out;
  bool resume = false;
  train.app()->add_option("dataset", train_data, "dataset directory")->required();
  train.app()->add_option("out_dir", train_out, "directory for model.ckpt, model.ini and train.log")->required();
  train.app()->add_flag("--resume", resume, "continue from out_dir/model.ckpt");
  train.bind("--mode", "train.mode");
  train.bind("--epochs", "train.epochs");
  train.bind("--batch-size", "train.batch_size");
  train.bind("--lr", "train.lr");
  train.bind("--lr-final", "train.lr_final");
  train.bind("--clip", "train.clip_norm");
  train.bind("--gamma", "train.gamma");
  train.bind("--alpha", "train.alpha");
  train.bind("--lambda", "train.lambda");
  train.bind_flag("--augment", "train.augment");
  train.bind("--update-mode", "train.update_mode");
  train.bind("--use-cost", "train.use_cost");
  train.bind("--max-minutes", "train.max_minutes");
  train.bind("--stages", "model.stages");
  train.bind("--updates", "model.updates");
  train.bind("--depth-min", "model.depth_min");
  train.bind("--depth-max", "model.depth_max");

  Command infer(app, "infer", "predict depth and poses for every sample of a dataset");
  declare_infer(infer.settings());
  std::string infer_ckpt, infer_data, infer_out;
  infer.app()->add_option("checkpoint", infer_ckpt, "model.ckpt (model.ini must sit next to it)")->required();
  infer.app()->add_option("dataset", infer_data, "dataset directory")->required();
  infer.app()->add_option("out_dir", infer_out, "prediction directory")->required();
  infer.bind("--views", "infer.views");
  infer.bind("--iters", "infer.iterations");
  infer.bind("--update-mode", "infer.update_mode");
  infer.bind("--use-cost", "infer.use_cost");

  Command eval(app, "eval", "compare a prediction directory with ground truth");
  std::string eval_pred, eval_gt;
  bool median_scale = false;
  eval.app()->add_option("pred_dir", eval_pred, "prediction directory")->required();
  eval.app()->add_option("gt_dir", eval_gt, "dataset directory with ground truth")->required();
  eval.app()->add_flag("--median-scale", median_scale, "rescale each prediction by median(gt)/median(pred)");

  Command bench(app, "bench", "time inference over a list of iteration counts");
  declare_infer(bench.settings());
  declare_bench(bench.settings());
  std::string bench_ckpt, bench_data, bench_out;
  bench.app()->add_option("checkpoint", bench_ckpt, "model.ckpt")->required();
  bench.app()->add_option("dataset", bench_data, "dataset directory")->required();
  bench.app()->add_option("--out", bench_out, "directory for config.ini and bench.tsv");
  bench.bind("--iters", "bench.iterations");
  bench.bind("--repeats", "bench.repeats");
  bench.bind("--samples", "bench.samples");
  bench.bind("--views", "infer.views");
  bench.bind("--update-mode", "infer.update_mode");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (gen.app()->parsed()) {
    const auto r = cmd_gen(gen.resolved(), gen_out, force);
    std::cout << "wrote " << r.count << " samples to " << r.dir.string() << '\n';
  } else if (train.app()->parsed()) {
    const auto r = cmd_train(train.resolved(), train_data, train_out, resume, &std::cerr);
    std::cout << "steps " << r.steps << "  first loss " << r.first_loss << "  last loss " << r.last_loss
              << (r.stopped_early ? "  (time limit)" : "") << "\n"
              << "checkpoint " << r.checkpoint.string() << '\n';
  } else if (infer.app()->parsed()) {
    const auto r = cmd_infer(infer.resolved(), infer_ckpt, infer_data, infer_out);
    std::cout << "wrote " << r.predictions.size() << " predictions to " << infer_out << '\n';
  } else if (eval.app()->parsed()) {
    std::cout << cmd_eval(eval_pred, eval_gt, median_scale).table();
  } else if (bench.app()->parsed()) {
    const auto table = bench_table(cmd_bench(bench.resolved(), bench_ckpt, bench_data, bench_out));
    std::cout << table;
    if (!bench_out.empty()) {
      std::ofstream f(std::filesystem::path(bench_out) / "bench.tsv");
      f << table;
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const dro::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const dro::ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const dro::NumericsError& e) {
    std::cerr << "numerics error: " << e.what() << '\n';
    return kNumerics;
  } catch (const dro::IoError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const dro::FormatError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const dro::GenerationError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
}
