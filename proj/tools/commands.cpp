#include "commands.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "igan/architecture.hpp"
#include "igan/checkpoint.hpp"
#include "igan/data.hpp"

#ifndef IGAN_DEFAULT_CLASSIFIER
#define IGAN_DEFAULT_CLASSIFIER "assets/shape_classifier.igan"
#endif

namespace igan::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long x = 0;
  try {
    if (!v.empty() && v[0] != '-') x = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw UsageError(key + ": expected a non-negative integer, got '" + v + "'");
  return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw UsageError(key + ": expected true or false, got '" + v + "'");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw data::DataError("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw data::DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

const std::vector<std::string> kTrainKeys = {
    "batch_size", "steps",         "lr_g", "lr_d",          "beta1",      "beta2",
    "adam_eps",   "dropout",       "label_smoothing",      "seed",       "width_divisor",
    "sn_iterations", "discriminator_spectral_norm", "checkpoint_interval", "log_interval"};

const std::vector<std::string> kRunOnlyKeys = {"data",      "synthetic", "synthetic_count", "synthetic_classes",
                                               "out",       "sample_interval", "grid_rows", "grid_cols",
                                               "sample_seed", "resume"};

std::string flag_name(const std::string& key) {
  std::string f = "--" + key;
  std::replace(f.begin(), f.end(), '_', '-');
  return f;
}

std::string key_help(const std::string& key) {
  static const std::map<std::string, std::string> help = {
      {"batch_size", "images per batch"},
      {"steps", "total training iterations"},
      {"lr_g", "generator learning rate"},
      {"lr_d", "discriminator learning rate"},
      {"beta1", "Adam first-moment decay"},
      {"beta2", "Adam second-moment decay"},
      {"adam_eps", "Adam epsilon"},
      {"dropout", "discriminator dropout rate"},
      {"label_smoothing", "real-label smoothing epsilon"},
      {"seed", "training seed (default: IGAN_SEED or 7)"},
      {"width_divisor", "divide every channel width by this"},
      {"sn_iterations", "power iterations per spectral-norm refresh"},
      {"discriminator_spectral_norm", "spectral normalization in the discriminator (true/false)"},
      {"checkpoint_interval", "steps between checkpoints (0: final only)"},
      {"log_interval", "steps between progress lines"},
      {"data", "directory of training images"},
      {"synthetic", "train on the built-in synthetic shape corpus"},
      {"synthetic_count", "synthetic corpus size"},
      {"synthetic_classes", "synthetic shape classes (1-8)"},
      {"out", "output directory"},
      {"sample_interval", "steps between sample grids (0: first and last only)"},
      {"grid_rows", "sample grid rows"},
      {"grid_cols", "sample grid columns"},
      {"sample_seed", "noise seed for sample grids"},
      {"resume", "checkpoint to resume from"},
  };
  return help.at(key);
}

Tensor<float> load_corpus(const RunConfig& cfg) {
  if (cfg.synthetic) {
    return data::synth_corpus(cfg.train.seed, cfg.synthetic_count, cfg.synthetic_classes).as_tensor();
  }
  data::LoadReport report;
  auto ds = data::load_images(cfg.data, data::kImageSize, &report);
  spdlog::info("loaded {} images from {} ({} skipped)", report.loaded, cfg.data, report.skipped);
  return ds.as_tensor();
}

void write_grid(const fs::path& path, const Tensor<float>& images, std::size_t cols) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  data::write_png(path, data::tile_grid(images, cols, 0));
}

Architecture solved_architecture() {
  auto sol = solve_architecture();
  return sol.architecture;
}

}  // namespace

// ---------------------------------------------------------------------------
// configuration

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k = kTrainKeys;
    k.insert(k.end(), kRunOnlyKeys.begin(), kRunOnlyKeys.end());
    return k;
  }();
  return keys;
}

void apply_run_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  try {
    if (apply_config_key(cfg.train, key, value)) return;
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (key == "data") cfg.data = value;
  else if (key == "synthetic") cfg.synthetic = parse_bool(key, value);
  else if (key == "synthetic_count") cfg.synthetic_count = parse_u64(key, value);
  else if (key == "synthetic_classes") cfg.synthetic_classes = parse_u64(key, value);
  else if (key == "out") cfg.out = value;
  else if (key == "sample_interval") cfg.sample_interval = parse_u64(key, value);
  else if (key == "grid_rows") cfg.grid_rows = parse_u64(key, value);
  else if (key == "grid_cols") cfg.grid_cols = parse_u64(key, value);
  else if (key == "sample_seed") cfg.sample_seed = parse_u64(key, value);
  else if (key == "resume") cfg.resume = value;
  else throw UsageError("unknown config key '" + key + "'");
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(fmt::format("{}:{}: expected 'key = value'", origin, no));
    try {
      apply_run_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const UsageError& e) {
      throw UsageError(fmt::format("{}:{}: {}", origin, no, e.what()));
    }
  }
}

std::string run_config_text(const RunConfig& cfg) {
  std::string out = config_to_text(cfg.train);
  out += fmt::format("data = {}\n", cfg.data);
  out += fmt::format("synthetic = {}\n", cfg.synthetic ? "true" : "false");
  out += fmt::format("synthetic_count = {}\n", cfg.synthetic_count);
  out += fmt::format("synthetic_classes = {}\n", cfg.synthetic_classes);
  out += fmt::format("out = {}\n", cfg.out);
  out += fmt::format("sample_interval = {}\n", cfg.sample_interval);
  out += fmt::format("grid_rows = {}\n", cfg.grid_rows);
  out += fmt::format("grid_cols = {}\n", cfg.grid_cols);
  out += fmt::format("sample_seed = {}\n", cfg.sample_seed);
  out += fmt::format("resume = {}\n", cfg.resume);
  return out;
}

std::uint64_t env_seed(std::uint64_t fallback) {
  const char* v = std::getenv("IGAN_SEED");
  if (v == nullptr || *v == '\0') return fallback;
  return parse_u64("IGAN_SEED", trim(v));
}

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.train.seed = env_seed(cfg.train.seed);
  return cfg;
}

std::string loss_svg(const TrainState& st) {
  constexpr double kW = 800, kH = 400, kLeft = 60, kRight = 20, kTop = 30, kBottom = 40;
  const std::size_t n = st.g_history.size();
  double lo = 0.0, hi = 1.0;
  if (n > 0) {
    lo = std::min(*std::min_element(st.g_history.begin(), st.g_history.end()),
                  *std::min_element(st.d_history.begin(), st.d_history.end()));
    hi = std::max(*std::max_element(st.g_history.begin(), st.g_history.end()),
                  *std::max_element(st.d_history.begin(), st.d_history.end()));
  }
  if (!(hi > lo)) hi = lo + 1.0;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](std::size_t i) { return kLeft + (n > 1 ? pw * double(i) / double(n - 1) : 0.0); };
  auto py = [&](double v) { return kTop + ph * (hi - v) / (hi - lo); };
  auto series = [&](const std::vector<double>& h, const char* colour) {
    std::string pts;
    for (std::size_t i = 0; i < h.size(); ++i) pts += fmt::format("{:.2f},{:.2f} ", px(i), py(h[i]));
    return fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\" points=\"{}\"/>\n", colour, pts);
  };
  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      kW, kH);
  s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>\n", kLeft, kTop,
                   pw, ph);
  s += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\">{:.3g}</text>\n", kLeft - 6,
                   kTop + 4, hi);
  s += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\">{:.3g}</text>\n", kLeft - 6,
                   kTop + ph, lo);
  s += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"12\">1</text>\n", kLeft, kH - kBottom + 16);
  s += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\">{}</text>\n", kLeft + pw,
                   kH - kBottom + 16, n);
  s += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">step</text>\n", kLeft + pw / 2,
                   kH - 8);
  s += series(st.g_history, "#1f77b4");
  s += series(st.d_history, "#ff7f0e");
  s += fmt::format("<text x=\"{}\" y=\"20\" font-size=\"12\" fill=\"#1f77b4\">g_loss</text>\n", kLeft);
  s += fmt::format("<text x=\"{}\" y=\"20\" font-size=\"12\" fill=\"#ff7f0e\">d_loss</text>\n", kLeft + 60);
  s += "</svg>\n";
  return s;
}

// ---------------------------------------------------------------------------
// commands

int cmd_inspect_arch(const InspectOptions& opts, std::ostream& out) {
  ArchitectureSolution sol;
  try {
    sol = solve_architecture();
  } catch (const UnresolvableAllocation& e) {
    out << "allocation solver: " << e.what() << "\nclosest candidates:\n";
    for (const auto& c : e.closest()) {
      out << fmt::format("  {}  deviation {:+}\n", c.allocation.describe(), c.deviation);
    }
    return kExitUnresolved;
  }
  const auto report = param_report(build_generator(sol.architecture), build_discriminator(sol.architecture));
  const auto csv = report_csv(report);
  if (opts.csv_to_stdout) {
    out << csv;
  } else {
    out << report_text(report) << "\n" << allocation_ledger(sol);
  }
  if (!opts.csv.empty()) write_text(opts.csv, csv);
  return report.non_inception_rows_match() ? kExitOk : kExitUnresolved;
}

int cmd_train(const RunConfig& cfg_in, std::ostream& out) {
  RunConfig cfg = cfg_in;
  if (cfg.synthetic == !cfg.data.empty()) throw UsageError("train: give exactly one of --data or --synthetic");
  if (cfg.grid_rows == 0 || cfg.grid_cols == 0) throw UsageError("train: grid_rows and grid_cols must be positive");
  try {
    cfg.train.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  std::optional<Archive> resume;
  Architecture arch;
  if (!cfg.resume.empty()) {
    resume = Archive::load(cfg.resume);
    arch = checkpoint_architecture(*resume);
    const auto saved = checkpoint_config(*resume);
    const std::size_t steps = cfg.train.steps;
    if (config_to_text([&] { auto c = saved; c.steps = steps; return c; }()) != config_to_text(cfg.train)) {
      spdlog::warn("resume: training settings come from the checkpoint; only 'steps' is taken from this run");
    }
    cfg.train = saved;
    cfg.train.steps = steps;
  } else {
    arch = solved_architecture();
  }

  const fs::path dir = cfg.out;
  fs::create_directories(dir);
  if (cfg.train.checkpoint_interval > 0) fs::create_directories(dir / "checkpoints");
  write_text(dir / "config.txt", run_config_text(cfg));
  spdlog::info("resolved config written to {}", (dir / "config.txt").string());

  const auto corpus = load_corpus(cfg);
  Trainer trainer(arch, cfg.train);
  if (resume) {
    restore_checkpoint(trainer, *resume);
    spdlog::info("resumed from {} at step {}", cfg.resume, trainer.state().step);
  }

  const std::size_t grid_n = cfg.grid_rows * cfg.grid_cols;
  auto grid = [&](std::uint64_t step) {
    write_grid(dir / "samples" / fmt::format("step_{:06d}.png", step), trainer.sample(grid_n, cfg.sample_seed),
               cfg.grid_cols);
  };
  auto flush_losses = [&] {
    write_text(dir / "losses.csv", loss_csv(trainer.state()));
    write_text(dir / "losses.svg", loss_svg(trainer.state()));
  };

  if (!resume) grid(0);
  try {
    trainer.train(corpus, [&](std::uint64_t step, const StepLosses& l) {
      if (cfg.train.log_interval > 0 && step % cfg.train.log_interval == 0) {
        spdlog::info("step {}/{}  g_loss {:.4f}  d_loss {:.4f}", step, cfg.train.steps, l.g_loss, l.d_loss);
      }
      if (cfg.sample_interval > 0 && step % cfg.sample_interval == 0 && step != cfg.train.steps) grid(step);
      if (cfg.train.checkpoint_interval > 0 && step % cfg.train.checkpoint_interval == 0 && step != cfg.train.steps) {
        make_checkpoint(trainer).save(dir / "checkpoints" / fmt::format("step_{:06d}.igan", step));
      }
    });
  } catch (const NumericFailure&) {
    flush_losses();
    throw;
  }
  grid(trainer.state().step);
  flush_losses();
  make_checkpoint(trainer).save(dir / "final.igan");
  out << fmt::format("trained {} steps; outputs in {}\n", trainer.state().step, dir.string());
  return kExitOk;
}

int cmd_generate(const GenerateOptions& opts, std::ostream& out) {
  if (opts.count == 0) throw UsageError("generate: --n must be positive");
  const auto archive = Archive::load(opts.checkpoint);
  Trainer trainer(checkpoint_architecture(archive), checkpoint_config(archive));
  restore_checkpoint(trainer, archive);
  const auto images = trainer.sample(opts.count, opts.seed);
  fs::create_directories(opts.out);
  for (std::size_t i = 0; i < opts.count; ++i) {
    data::write_png(opts.out / fmt::format("{:06d}.png", i),
                    data::to_image(images.data().subspan(i * data::kImageValues, data::kImageValues),
                                   data::kImageSize, data::kImageSize));
  }
  if (!opts.grid.empty()) write_grid(opts.grid, images, std::max<std::size_t>(opts.grid_cols, 1));
  out << fmt::format("wrote {} images to {}\n", opts.count, opts.out.string());
  return kExitOk;
}

metrics::MetricReport evaluate(const EvaluateOptions& opts) {
  if (opts.generated.empty() == opts.checkpoint.empty()) {
    throw UsageError("evaluate: give exactly one of --gen or --checkpoint");
  }
  const auto provider = metrics::provider_by_id(opts.provider);
  metrics::MetricReport r;
  r.provider = provider.id;
  r.is_splits = opts.splits;

  const auto real_ds = data::load_images(opts.real);
  const auto real = real_ds.as_tensor();
  Tensor<float> gen;
  if (!opts.generated.empty()) {
    gen = data::load_images(opts.generated).as_tensor();
  } else {
    const auto archive = Archive::load(opts.checkpoint);
    Trainer trainer(checkpoint_architecture(archive), checkpoint_config(archive));
    restore_checkpoint(trainer, archive);
    gen = trainer.sample(opts.count, opts.seed);
  }
  r.n_real = real.dim(0);
  r.n_gen = gen.dim(0);
  if (r.n_real < 2 || r.n_gen < 2) {
    throw metrics::MetricError(fmt::format("evaluate: FID needs at least 2 images per side (real {}, generated {})",
                                           r.n_real, r.n_gen));
  }

  if (!opts.real_stats.empty() && fs::exists(opts.real_stats)) {
    r.real_stats = metrics::load_stats(opts.real_stats);
    if (r.real_stats.provider != provider.id) {
      throw metrics::MetricError("evaluate: cached stats " + opts.real_stats.string() + " were computed with '" +
                                 r.real_stats.provider + "', not '" + provider.id + "'");
    }
    spdlog::info("real statistics loaded from {}", opts.real_stats.string());
  } else {
    r.real_stats = metrics::gaussian_stats(metrics::embed_images(provider, real), provider.id);
    if (!opts.real_stats.empty()) metrics::save_stats(r.real_stats, opts.real_stats);
  }
  r.gen_stats = metrics::gaussian_stats(metrics::embed_images(provider, gen), provider.id);
  r.fid = metrics::fid(r.real_stats, r.gen_stats);

  const fs::path cls_path = opts.classifier.empty() ? default_classifier_path() : opts.classifier;
  auto classifier = metrics::ShapeClassifier::from_archive(Archive::load(cls_path));
  r.classifier = metrics::ShapeClassifier::kId;
  r.class_probs = classifier.predict(gen);
  r.is = metrics::inception_score(r.class_probs, opts.splits);

  const bool counts_match = r.n_real == r.n_gen;
  if (opts.require_pairs && !counts_match) {
    throw metrics::MetricError(fmt::format("evaluate: paired PSNR/SSIM needs equal image counts (real {}, generated {})",
                                           r.n_real, r.n_gen));
  }
  // Pairs are matched by sorted file order; sampled images have no partner.
  if (opts.require_pairs || (counts_match && !opts.generated.empty())) {
    r.paired = true;
    r.psnr = metrics::mean_psnr(real, gen);
    r.ssim = metrics::mean_ssim(real, gen);
  }
  return r;
}

int cmd_evaluate(const EvaluateOptions& opts, std::ostream& out) {
  const auto r = evaluate(opts);
  out << metrics::report_text(r);
  if (!opts.csv.empty()) write_text(opts.csv, metrics::report_csv(r));
  return kExitOk;
}

int cmd_synth_data(const SynthOptions& opts, std::ostream& out) {
  const auto ds = data::synth_corpus(opts.seed, opts.count, opts.classes);
  data::write_dataset(ds, opts.out);
  out << fmt::format("wrote {} images in {} classes to {}\n", ds.size(), opts.classes, opts.out.string());
  return kExitOk;
}

int cmd_train_classifier(const fs::path& out_path, std::ostream& out) {
  auto c = metrics::train_reference_classifier();
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  c.to_archive().save(out_path);
  const auto held_out = data::synth_corpus(999, 400, data::kMaxSynthClasses);
  out << fmt::format("classifier written to {}; held-out accuracy {:.4f}\n", out_path.string(),
                     c.accuracy(held_out));
  return kExitOk;
}

fs::path default_classifier_path() {
  if (const char* v = std::getenv("IGAN_CLASSIFIER"); v != nullptr && *v != '\0') return v;
  return IGAN_DEFAULT_CLASSIFIER;
}

// ---------------------------------------------------------------------------
// argument parsing

namespace {

// Progress lines go to stderr so stdout stays machine-readable.
void setup_logging() {
  auto logger = spdlog::get("igan");
  if (!logger) {
    auto sink = std::make_shared<spdlog::sinks::stderr_sink_mt>();
    logger = std::make_shared<spdlog::logger>("igan", sink);
    spdlog::register_logger(logger);
  }
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%Y-%m-%d %H:%M:%S] %v");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  setup_logging();
  CLI::App app{"IGAN: inception-module GAN trainer, sampler and evaluator", "igan"};
  app.require_subcommand(1);

  InspectOptions inspect;
  auto* c_inspect = app.add_subcommand("inspect-arch", "Solve the inception allocations and print the parameter table");
  c_inspect->add_option("--csv", inspect.csv, "also write the table as CSV to this file");
  c_inspect->add_flag("--csv-stdout", inspect.csv_to_stdout, "print the CSV table instead of the text report");

  auto* c_train = app.add_subcommand("train", "Train the GAN and write losses, sample grids and checkpoints");
  std::string config_file;
  c_train->add_option("--config", config_file, "key = value config file; flags override it")->check(CLI::ExistingFile);
  std::vector<std::pair<std::string, CLI::Option*>> train_flags;
  std::map<std::string, std::string> train_values;
  bool synthetic_flag = false;
  for (const auto& key : run_config_keys()) {
    if (key == "synthetic") {
      train_flags.emplace_back(key, c_train->add_flag(flag_name(key), synthetic_flag, key_help(key)));
    } else {
      train_flags.emplace_back(key, c_train->add_option(flag_name(key), train_values[key], key_help(key)));
    }
  }

  GenerateOptions gen;
  gen.seed = 1;
  auto* c_gen = app.add_subcommand("generate", "Sample images from a checkpoint");
  c_gen->add_option("--checkpoint", gen.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  c_gen->add_option("--out", gen.out, "output directory")->required();
  c_gen->add_option("--n", gen.count, "number of images")->capture_default_str();
  auto* gen_seed = c_gen->add_option("--seed", gen.seed, "noise seed (default: IGAN_SEED or 1)");
  c_gen->add_option("--grid", gen.grid, "also write a tiled PNG of all samples here");
  c_gen->add_option("--grid-cols", gen.grid_cols, "columns of the --grid image")->capture_default_str();

  EvaluateOptions ev;
  auto* c_eval = app.add_subcommand("evaluate", "Compute FID, IS, PSNR and SSIM");
  c_eval->add_option("--real", ev.real, "directory of real images")->required()->check(CLI::ExistingDirectory);
  c_eval->add_option("--gen", ev.generated, "directory of generated images")->check(CLI::ExistingDirectory);
  c_eval->add_option("--checkpoint", ev.checkpoint, "sample generated images from this checkpoint")
      ->check(CLI::ExistingFile);
  c_eval->add_option("--n", ev.count, "images sampled from --checkpoint")->capture_default_str();
  auto* eval_seed = c_eval->add_option("--seed", ev.seed, "noise seed for --checkpoint (default: IGAN_SEED or 1)");
  c_eval->add_option("--provider", ev.provider, "embedding provider id")->capture_default_str();
  c_eval->add_option("--classifier", ev.classifier, "classifier checkpoint for IS (default: shipped asset)");
  c_eval->add_option("--splits", ev.splits, "IS splits")->capture_default_str();
  c_eval->add_flag("--paired", ev.require_pairs, "require PSNR/SSIM over aligned pairs (equal counts)");
  c_eval->add_option("--real-stats", ev.real_stats, "cache file for the real-image Gaussian statistics");
  c_eval->add_option("--csv", ev.csv, "write the report as CSV");

  SynthOptions synth;
  auto* c_synth = app.add_subcommand("synth-data", "Write the synthetic shape corpus as PNG files");
  c_synth->add_option("--out", synth.out, "output directory")->required();
  c_synth->add_option("--count", synth.count, "number of images")->capture_default_str();
  c_synth->add_option("--classes", synth.classes, "shape classes (1-8)")->capture_default_str();
  auto* synth_seed = c_synth->add_option("--seed", synth.seed, "corpus seed (default: IGAN_SEED or 7)");

  fs::path classifier_out = "assets/shape_classifier.igan";
  auto* c_cls = app.add_subcommand("train-classifier", "Retrain the shape classifier used for IS");
  c_cls->add_option("--out", classifier_out, "output checkpoint")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, er;
    const int code = app.exit(e, o, er);
    out << o.str();
    err << er.str();
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (c_inspect->parsed()) return cmd_inspect_arch(inspect, out);
    if (c_train->parsed()) {
      RunConfig cfg = default_run_config();
      if (!config_file.empty()) apply_config_text(cfg, read_text(config_file), config_file);
      for (const auto& [key, opt] : train_flags) {
        if (opt->count() == 0) continue;
        apply_run_key(cfg, key, key == "synthetic" ? (synthetic_flag ? "true" : "false") : train_values[key]);
      }
      return cmd_train(cfg, out);
    }
    if (c_gen->parsed()) {
      if (gen_seed->count() == 0) gen.seed = env_seed(gen.seed);
      return cmd_generate(gen, out);
    }
    if (c_eval->parsed()) {
      if (eval_seed->count() == 0) ev.seed = env_seed(ev.seed);
      return cmd_evaluate(ev, out);
    }
    if (c_synth->parsed()) {
      if (synth_seed->count() == 0) synth.seed = env_seed(synth.seed);
      return cmd_synth_data(synth, out);
    }
    if (c_cls->parsed()) return cmd_train_classifier(classifier_out, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "invalid argument: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericFailure& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const UnresolvableAllocation& e) {
    err << "allocation solver: " << e.what() << "\n";
    return kExitUnresolved;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace igan::cli
