#include "metalab/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "metalab/checkpoint.hpp"
#include "metalab/errors.hpp"
#include "metalab/gradcheck_suite.hpp"
#include "metalab/labgnn.hpp"
#include "metalab/ops.hpp"
#include "metalab/trainer.hpp"

namespace metalab {
namespace {

// Test episodes use their own stream so they never coincide with validation.
constexpr std::uint64_t kTestStream = 0x7e57ULL;
constexpr double kGradTolerance = 1e-5;

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

const std::map<std::string, std::string>& short_aliases() {
  static const std::map<std::string, std::string> aliases = {
      {"k_way", "k"},          {"n_shot", "n"},     {"q_query", "q"},
      {"batch_episodes", "b"}, {"train_iters", "iters"}, {"eval_episodes", "episodes"},
      {"generations", "g"},
  };
  return aliases;
}

struct ConfigFlags {
  std::string file;
  std::vector<std::pair<std::string, std::string>> settings;
};

void add_config_options(CLI::App* sub, ConfigFlags& flags) {
  sub->add_option("--config", flags.file, "Flat key = value config file");
  for (const auto& key : config_keys()) {
    std::string names = "--" + dashed(key);
    if (const auto it = short_aliases().find(key); it != short_aliases().end()) {
      names += ",--" + it->second;
    }
    sub->add_option_function<std::string>(
        names, [&flags, key](const std::string& v) { flags.settings.emplace_back(key, v); },
        "Sets " + key);
  }
}

RunConfig resolve_config(const ConfigFlags& flags) {
  RunConfig config;
  if (!flags.file.empty()) {
    for (const auto& [k, v] : read_config_file(flags.file)) apply_setting(config, k, v);
  }
  if (const char* env = std::getenv(kSeedEnvVar); env && *env) {
    apply_setting(config, "seed", env);
  }
  for (const auto& [k, v] : flags.settings) apply_setting(config, k, v);
  config.validate();
  return config;
}

// Output target: a file when a path is given, otherwise the fallback stream.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (!path.empty() && path != "-") {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw ConfigError("cannot open output file " + path);
      stream_ = file_.get();
    }
  }
  std::ostream& get() { return *stream_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_;
};

void write_gray_png(const std::filesystem::path& path, const std::vector<float>& plane,
                    std::size_t h, std::size_t w) {
  std::vector<float> chw(3 * h * w);
  for (std::size_t c = 0; c < 3; ++c) std::copy(plane.begin(), plane.end(), chw.begin() + c * h * w);
  write_png(path, chw, h, w);
}

std::vector<float> min_max(std::span<const float> v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const float range = *hi - *lo;
  std::vector<float> out(v.size(), 0.0f);
  if (range > 0.0f) {
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / range;
  }
  return out;
}

// ---------------------------------------------------------------- train

int cmd_train(const RunConfig& config, const std::string& metrics_path, std::ostream& out,
              std::ostream& err) {
  const Dataset dataset = resolve_dataset(config);
  MetaLabModel<float> model(config.model_config(), config.seed);
  Sink metrics(metrics_path, out);
  const TrainSummary summary = train(model, dataset, config.train_options(),
                                     [&](const MetricsRecord& rec) {
                                       metrics.get() << rec.to_json() << '\n';
                                       metrics.get().flush();
                                     });
  err << "trained " << summary.iterations << " iterations";
  if (summary.best_iter) {
    err << ", best validation accuracy " << summary.best_val_acc << " at iteration "
        << summary.best_iter;
  }
  if (summary.stopped_early) err << " (early stop)";
  err << "; checkpoint " << config.checkpoint.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalFlags {
  bool untrained = false;
  bool high_way = false;
  std::vector<std::size_t> ways;
  std::string split = "test";
  std::string report;
  std::string trace;
};

const ImageSet& pick_split(const Dataset& dataset, const std::string& name) {
  if (name == "train") return dataset.train;
  if (name == "val") return dataset.val;
  if (name == "test") return dataset.test;
  throw ConfigError("split must be train, val or test, got '" + name + "'");
}

int cmd_eval(const RunConfig& config, const EvalFlags& flags, std::ostream& out,
             std::ostream& err) {
  const Dataset dataset = resolve_dataset(config);
  const ImageSet& split = pick_split(dataset, flags.split);
  MetaLabModel<float> model(config.model_config(), config.seed);
  if (!flags.untrained) load_checkpoint(config.checkpoint, model.params());

  std::vector<std::size_t> ways = flags.ways;
  if (flags.high_way) ways = {5, 6, 7, 8, 9, 10};
  if (ways.empty()) ways = {config.k_way};

  Sink report(flags.report, out);
  for (const std::size_t k : ways) {
    EpisodeSpec spec = config.episode_spec();
    spec.ways = k;
    spec.batch = 1;
    const auto start = Clock::now();
    EvalRow row{k, spec.shots, spec.queries,
                evaluate(model, split, spec, config.eval_episodes, config.seed ^ kTestStream,
                         config.workers)};
    err << std::fixed << std::setprecision(4) << k << "-way " << spec.shots << "-shot: "
        << "mean_acc " << row.report.mean << " ± " << row.report.ci95 << " over "
        << row.report.episodes << " episodes (" << std::setprecision(1) << elapsed_ms(start) / 1000
        << " s)\n"
        << std::defaultfloat;
    report.get() << row.to_json() << '\n';
  }

  if (!flags.trace.empty()) {
    EpisodeSpec spec = config.episode_spec();
    spec.ways = ways.front();
    spec.batch = 1;
    auto rng = stream_rng(config.seed ^ kTestStream, 0);
    const EpisodeBatch batch = sample_episode(split, spec, rng);
    NoGradGuard no_grad;
    std::ofstream trace(flags.trace);
    if (!trace) throw ConfigError("cannot open trace file " + flags.trace);
    write_trace(trace, model.forward(batch));
  }
  return kExitOk;
}

// ---------------------------------------------------------------- ablate

int cmd_ablate(const RunConfig& config, const std::string& axis,
               const std::vector<std::size_t>& values, const std::string& out_path,
               std::ostream& out, std::ostream& err) {
  const Dataset dataset = resolve_dataset(config);
  Sink curve(out_path, out);
  for (const auto& rec : run_ablation(config, dataset, axis, values, &err)) {
    curve.get() << rec.to_json() << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------- gradcheck

struct GradFlags {
  std::size_t trials = 100;
  std::size_t e2e_trials = 100;
  std::size_t coords = 12;
  std::uint64_t seed = 0;
};

int cmd_gradcheck(const GradFlags& flags, std::ostream& out) {
  bool ok = true;
  auto line = [&](const GradSuiteEntry& e) {
    const bool pass = e.max_rel_error < kGradTolerance;
    ok = ok && pass;
    out << (pass ? "PASS " : "FAIL ") << std::left << std::setw(22) << e.name << std::right
        << " max_rel " << e.max_rel_error << " (strict " << e.strict_max_rel_error << ") checked "
        << e.checked << " roundoff " << e.at_roundoff << " kinks " << e.skipped_kinks;
    if (!pass) out << " worst: " << e.worst;
    out << '\n';
  };
  for (const auto& e : run_primitive_gradchecks(flags.trials, flags.seed)) line(e);
  if (flags.e2e_trials) {
    EndToEndGradOptions opt;
    opt.trials = flags.e2e_trials;
    opt.seed = flags.seed;
    opt.coords_per_tensor = flags.coords;
    line(run_end_to_end_gradcheck(opt));
  }
  return ok ? kExitOk : kExitNumeric;
}

// ---------------------------------------------------------------- synth-data

int cmd_synth(const RunConfig& config, const std::string& out_dir, std::ostream& err) {
  SyntheticConfig sc;
  sc.classes = config.synth_classes;
  sc.per_class = config.synth_per_class;
  sc.size = config.image_size;
  sc.seed = config.synth_seed;
  const Dataset dataset = make_synthetic_dataset(sc);
  save_dataset(dataset, out_dir);
  err << "wrote " << dataset.train.classes() << "/" << dataset.val.classes() << "/"
      << dataset.test.classes() << " train/val/test classes of " << sc.per_class << " images to "
      << out_dir << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- dump-lab

struct DumpFlags {
  std::string image;
  std::size_t class_index = 0;
  std::string out_dir;
  bool features = false;
  bool untrained = false;
};

int cmd_dump_lab(const RunConfig& config, const DumpFlags& flags, std::ostream& err) {
  const std::size_t s = config.image_size;
  std::vector<float> chw;
  if (!flags.image.empty()) {
    std::size_t h = 0, w = 0;
    chw = resize_bilinear(read_png(flags.image, h, w), h, w, s, s);
  } else {
    const auto styles = synthetic_class_styles(config.synth_classes);
    if (flags.class_index >= styles.size()) {
      throw ConfigError("class index " + std::to_string(flags.class_index) + " outside 0.." +
                        std::to_string(styles.size() - 1));
    }
    chw = render_synthetic_image(styles[flags.class_index], s, config.synth_seed);
  }
  color::RgbBatch rgb(1, 1, s, s);
  std::copy(chw.begin(), chw.end(), rgb.data.begin());

  const std::filesystem::path dir = flags.out_dir;
  std::filesystem::create_directories(dir);
  const color::LlabBatch raw = color::rgb_to_llab(rgb, color::NormMode::kRaw);
  const std::size_t plane = s * s;
  std::vector<float> p(plane);
  // Channel 0 and 1 are the cloned L; 2 and 3 are a and b.
  const std::pair<const char*, std::pair<double, double>> channels[] = {
      {"L", {0.0, 100.0}}, {"a", {-128.0, 256.0}}, {"b", {-128.0, 256.0}}};
  for (std::size_t c = 0; c < 3; ++c) {
    const auto [offset, range] = channels[c].second;
    for (std::size_t i = 0; i < plane; ++i) {
      const double v = (raw.data[(c + 1) * plane + i] - offset) / range;
      p[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    write_gray_png(dir / (std::string(channels[c].first) + ".png"), p, s, s);
  }
  std::size_t written = 3;

  if (flags.features) {
    MetaLabModel<float> model(config.model_config(), config.seed);
    if (!flags.untrained) load_checkpoint(config.checkpoint, model.params());
    NoGradGuard no_grad;
    const Tensor<float> x = llab_to_tensor<float>(color::rgb_to_llab(rgb, config.norm_mode));
    // Batch statistics of two identical images equal those of the single image.
    const Tensor<float> y = model.encoder().block(concat<float>({x, x}, 0), 1);
    const std::size_t ch = y.dim(1), fh = y.dim(2), fw = y.dim(3);
    const std::size_t group = ch / kLabGroups;
    const auto data = y.data();
    for (std::size_t c = 0; c < ch; ++c) {
      const auto maps = min_max(data.subspan(c * fh * fw, fh * fw));
      char name[32];
      std::snprintf(name, sizeof(name), "%s_%02zu.png", c < group ? "light" : "color",
                    c % group);
      write_gray_png(dir / name, maps, fh, fw);
      ++written;
    }
  }
  err << "wrote " << written << " images to " << dir.string() << '\n';
  return kExitOk;
}

}  // namespace

Dataset resolve_dataset(const RunConfig& config) {
  if (config.dataset == "synthetic") {
    SyntheticConfig sc;
    sc.classes = config.synth_classes;
    sc.per_class = config.synth_per_class;
    sc.size = config.image_size;
    sc.seed = config.synth_seed;
    return make_synthetic_dataset(sc);
  }
  return load_dataset(config.dataset, config.image_size);
}

std::string EvalRow::to_json() const {
  nlohmann::ordered_json j;
  j["ways"] = ways;
  j["shots"] = shots;
  j["queries"] = queries;
  j["episodes"] = report.episodes;
  j["mean_acc"] = report.mean;
  j["ci95"] = report.ci95;
  return j.dump();
}

std::string CurveRecord::to_json() const {
  nlohmann::ordered_json j;
  j["axis"] = axis;
  j["value"] = value;
  j["mean_acc"] = mean_acc;
  j["ci95"] = ci95;
  j["episodes"] = episodes;
  j["train_iters"] = train_iters;
  j["wall_ms"] = wall_ms;
  return j.dump();
}

std::vector<CurveRecord> run_ablation(const RunConfig& config, const Dataset& dataset,
                                      const std::string& axis,
                                      const std::vector<std::size_t>& values,
                                      std::ostream* progress) {
  if (std::find(kAblationAxes.begin(), kAblationAxes.end(), axis) == kAblationAxes.end()) {
    throw ConfigError("ablation axis must be hidden_h, embed_dim or generations, got '" + axis +
                      "'");
  }
  if (values.empty()) throw ConfigError("ablation needs at least one value");
  std::vector<CurveRecord> out;
  for (const std::size_t v : values) {
    RunConfig c = config;
    apply_setting(c, axis, std::to_string(v));
    if (axis == "generations" && c.loss_gens && *c.loss_gens > v) c.loss_gens = v;
    c.checkpoint.clear();
    c.validate();

    const auto start = Clock::now();
    MetaLabModel<float> model(c.model_config(), c.seed);
    const TrainSummary summary = train(model, dataset, c.train_options());
    const AccuracyReport rep = evaluate(model, dataset.test, c.episode_spec(), c.eval_episodes,
                                        c.seed ^ kTestStream, c.workers);
    CurveRecord rec{axis, v, rep.mean, rep.ci95, rep.episodes, summary.iterations,
                    elapsed_ms(start)};
    if (progress) {
      *progress << axis << "=" << v << ": mean_acc " << rec.mean_acc << " ± " << rec.ci95
                 << " after " << rec.train_iters << " iterations\n";
    }
    out.push_back(rec);
  }
  return out;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"MetaLab: colour-grouped encoder plus dual-graph few-shot classifier", "metalab"};
  app.require_subcommand(1);

  ConfigFlags train_cfg, eval_cfg, ablate_cfg, synth_cfg, dump_cfg;

  auto* train_cmd = app.add_subcommand("train", "Meta-train and write the best checkpoint");
  add_config_options(train_cmd, train_cfg);
  std::string metrics_path;
  train_cmd->add_option("--metrics", metrics_path, "JSON-lines metrics file (default stdout)");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on novel-class episodes");
  add_config_options(eval_cmd, eval_cfg);
  EvalFlags eval_flags;
  eval_cmd->add_flag("--untrained", eval_flags.untrained, "Use freshly initialised parameters");
  eval_cmd->add_option("--ways", eval_flags.ways, "K values to evaluate, comma separated")
      ->delimiter(',');
  eval_cmd->add_flag("--high-way", eval_flags.high_way, "Sweep K = 5..10");
  eval_cmd->add_option("--split", eval_flags.split, "train, val or test")->capture_default_str();
  eval_cmd->add_option("--report", eval_flags.report, "JSON-lines report file (default stdout)");
  eval_cmd->add_option("--trace", eval_flags.trace,
                       "Write the per-generation edge trace of one episode (T <= 10)");

  auto* ablate_cmd = app.add_subcommand("ablate", "Train and evaluate along one axis");
  add_config_options(ablate_cmd, ablate_cfg);
  std::string axis;
  std::vector<std::size_t> values;
  std::string curve_path;
  ablate_cmd->add_option("--axis", axis, "hidden_h, embed_dim or generations")->required();
  ablate_cmd->add_option("--values", values, "Axis values, comma separated")
      ->required()
      ->delimiter(',');
  ablate_cmd->add_option("--out", curve_path, "JSON-lines curve file (default stdout)");

  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  GradFlags grad_flags;
  if (const char* env = std::getenv(kSeedEnvVar); env && *env) {
    grad_flags.seed = std::strtoull(env, nullptr, 10);
  }
  grad_cmd->add_option("--trials", grad_flags.trials, "Randomized trials per primitive")
      ->capture_default_str();
  grad_cmd->add_option("--e2e-trials", grad_flags.e2e_trials, "End-to-end trials (0 skips)")
      ->capture_default_str();
  grad_cmd->add_option("--coords", grad_flags.coords,
                       "Sampled coordinates per parameter tensor, 0 = all")
      ->capture_default_str();
  grad_cmd->add_option("--seed", grad_flags.seed, "Root seed")->capture_default_str();

  auto* synth_cmd = app.add_subcommand("synth-data", "Write the synthetic dataset as PNG files");
  add_config_options(synth_cmd, synth_cfg);
  std::string synth_out;
  synth_cmd->add_option("--out", synth_out, "Dataset root directory")->required();

  auto* dump_cmd = app.add_subcommand("dump-lab", "Write per-channel Lab (and block-1) images");
  add_config_options(dump_cmd, dump_cfg);
  DumpFlags dump_flags;
  dump_cmd->add_option("--image", dump_flags.image, "PNG input (default: a synthetic sample)");
  dump_cmd->add_option("--class-index", dump_flags.class_index,
                       "Synthetic class to render when no image is given");
  dump_cmd->add_option("--out", dump_flags.out_dir, "Output directory")->required();
  dump_cmd->add_flag("--features", dump_flags.features, "Also dump Lab-Block 1 feature maps");
  dump_cmd->add_flag("--untrained", dump_flags.untrained,
                     "Feature maps from fresh parameters instead of the checkpoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(resolve_config(train_cfg), metrics_path, out, err);
    if (eval_cmd->parsed()) return cmd_eval(resolve_config(eval_cfg), eval_flags, out, err);
    if (ablate_cmd->parsed()) {
      return cmd_ablate(resolve_config(ablate_cfg), axis, values, curve_path, out, err);
    }
    if (grad_cmd->parsed()) return cmd_gradcheck(grad_flags, out);
    if (synth_cmd->parsed()) return cmd_synth(resolve_config(synth_cfg), synth_out, err);
    if (dump_cmd->parsed()) return cmd_dump_lab(resolve_config(dump_cfg), dump_flags, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitConfig;
}

}  // namespace metalab
