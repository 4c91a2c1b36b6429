#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "igan/metrics.hpp"
#include "igan/train.hpp"

// Command implementations behind the `igan` executable. Each command is a
// plain function so tests can drive it without a subprocess.

namespace igan::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitNumeric = 3,
  kExitUnresolved = 4,
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training run: every TrainConfig field plus data, output and sampling keys.
struct RunConfig {
  TrainConfig train;
  std::string data;  // image directory; empty with synthetic = true
  bool synthetic = false;
  std::size_t synthetic_count = 2048;
  std::size_t synthetic_classes = data::kMaxSynthClasses;
  std::string out = "igan-run";
  std::size_t sample_interval = 100;  // 0: initial and final grids only
  std::size_t grid_rows = 8;
  std::size_t grid_cols = 8;
  std::uint64_t sample_seed = 1;
  std::string resume;  // checkpoint to continue from
};

/// Keys accepted by the config file and as `--key-name` flags, in render order.
const std::vector<std::string>& run_config_keys();
/// Throws UsageError for unknown keys or malformed values.
void apply_run_key(RunConfig& cfg, const std::string& key, const std::string& value);
/// Flat `key = value` lines; `#` starts a comment. `origin` names the source in errors.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin);
std::string run_config_text(const RunConfig& cfg);

/// Value of IGAN_SEED, or `fallback` when unset. Throws UsageError when malformed.
std::uint64_t env_seed(std::uint64_t fallback);
/// Defaults with IGAN_SEED applied.
RunConfig default_run_config();

/// Two-series line chart of the loss history as a standalone SVG document.
std::string loss_svg(const TrainState& state);

// ---------------------------------------------------------------------------

struct InspectOptions {
  std::filesystem::path csv;  // optional CSV copy of the table
  bool csv_to_stdout = false;
};
int cmd_inspect_arch(const InspectOptions& opts, std::ostream& out);

int cmd_train(const RunConfig& cfg, std::ostream& out);

struct GenerateOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path out;
  std::size_t count = 16;
  std::uint64_t seed = 1;
  std::filesystem::path grid;  // optional tiled overview, kept outside `out`
  std::size_t grid_cols = 8;
};
int cmd_generate(const GenerateOptions& opts, std::ostream& out);

struct EvaluateOptions {
  std::filesystem::path real;
  std::filesystem::path generated;   // directory of images, or
  std::filesystem::path checkpoint;  // sample `count` images from a checkpoint
  std::size_t count = 256;
  std::uint64_t seed = 1;
  std::string provider = "pixel-avg-64";
  std::filesystem::path classifier;  // defaults to the shipped checkpoint
  std::size_t splits = 1;
  bool require_pairs = false;           // PSNR/SSIM demanded; counts must match
  std::filesystem::path real_stats;     // cache for the real-side Gaussian
  std::filesystem::path csv;
};
metrics::MetricReport evaluate(const EvaluateOptions& opts);
int cmd_evaluate(const EvaluateOptions& opts, std::ostream& out);

struct SynthOptions {
  std::filesystem::path out;
  std::size_t count = 2048;
  std::size_t classes = data::kMaxSynthClasses;
  std::uint64_t seed = 7;
};
int cmd_synth_data(const SynthOptions& opts, std::ostream& out);

int cmd_train_classifier(const std::filesystem::path& out_path, std::ostream& out);

std::filesystem::path default_classifier_path();

/// Parses argv, dispatches, and maps exceptions onto exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace igan::cli
