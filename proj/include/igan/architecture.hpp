#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "igan/inception.hpp"
#include "igan/tensor.hpp"

// Declarative description of the two networks: one descriptor per table row,
// shape propagation, and parameter accounting against the published counts.

namespace igan {

/// Published parameter counts for the 64x64 networks.
namespace table {
inline constexpr std::size_t kNoise = 100;
inline constexpr std::size_t kGenDense = 413696;
inline constexpr std::size_t kGenConv1 = 590080;
inline constexpr std::size_t kGenConv1Bn = 1024;
inline constexpr std::size_t kGenInception = 199072;
inline constexpr std::size_t kGenInceptionBn = 1024;
inline constexpr std::size_t kGenConv2 = 295040;
inline constexpr std::size_t kGenConv2Bn = 512;
inline constexpr std::size_t kGenConvOut = 3459;
inline constexpr std::size_t kDiscConv1 = 1792;
inline constexpr std::size_t kDiscInception1 = 43200;
inline constexpr std::size_t kDiscInception1Bn = 512;
inline constexpr std::size_t kDiscInception2 = 217536;
inline constexpr std::size_t kDiscInception2Bn = 1024;
inline constexpr std::size_t kDiscConvPointwise = 65792;
inline constexpr std::size_t kDiscConv2 = 590080;
inline constexpr std::size_t kDiscConv2Bn = 1024;
inline constexpr std::size_t kDiscDense = 4097;
}  // namespace table

/// Allocations for the three distinct inception modules, with their stride
/// and dilation profiles filled in.
struct Architecture {
  InceptionAllocation generator;       // shared by both generator modules
  InceptionAllocation discriminator1;  // 64 -> 128, halves resolution
  InceptionAllocation discriminator2;  // 128 -> 256, halves resolution
  std::size_t width_divisor = 1;

  /// Every channel width divided by `divisor` (rounded up).
  Architecture scaled(std::size_t divisor) const;
};

struct ArchitectureSolution {
  Architecture architecture;
  SolveResult generator;
  SolveResult discriminator1;
  SolveResult discriminator2;
};

/// Runs the allocation solver against the three published inception counts.
ArchitectureSolution solve_architecture(const std::vector<InceptionTemplate>& templates = default_templates(),
                                        const SolveOptions& opts = {});

/// Fixes the stride/dilation profile of the three modules in place.
void apply_profiles(Architecture& arch);

enum class Role { Generator, Discriminator };
enum class LayerKind { Input, Dense, Reshape, Upsample, Conv, Inception, Flatten };
enum class Activation { None, Relu, LeakyRelu, Tanh, Sigmoid };

std::string to_string(LayerKind k);
std::string to_string(Activation a);

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::Input;
  std::size_t kernel = 0;
  std::size_t stride = 0;
  std::size_t dilation = 0;
  std::size_t in_features = 0;  // channels, or vector length for dense
  std::size_t out_features = 0;
  bool batch_norm = false;
  bool spectral_norm = false;
  bool dropout = false;
  Activation activation = Activation::None;
  std::optional<InceptionAllocation> inception;
  Shape declared;  // expected per-sample output shape
  Shape computed;  // filled by shape propagation
  std::size_t params = 0;     // weights + biases
  std::size_t bn_params = 0;  // 4*C when batch_norm
  std::optional<std::size_t> paper_params;
  std::optional<std::size_t> paper_bn_params;
};

struct NetworkSpec {
  Role role = Role::Generator;
  std::size_t width_divisor = 1;
  std::vector<LayerSpec> layers;
};

struct ModelOptions {
  bool discriminator_spectral_norm = true;
};

/// Layer sequences for the two networks. Published counts are attached only
/// at full width. Throws ShapeError when propagation disagrees with the
/// declared output sizes.
NetworkSpec build_generator(const Architecture& arch, const ModelOptions& opts = {});
NetworkSpec build_discriminator(const Architecture& arch, const ModelOptions& opts = {});

struct ParamRow {
  std::string name;
  std::string kernel;  // "3x3", or "-" for layers without one
  std::string stride;
  std::string dilation;
  std::size_t computed = 0;
  std::optional<std::size_t> paper;
  bool inception = false;  // row belongs to an inception module
  bool branch = false;     // per-branch breakdown, not counted in totals
  std::string note;

  bool has_target() const { return paper.has_value(); }
  bool matches() const { return paper && *paper == computed; }
};

struct ParamReport {
  std::vector<ParamRow> rows;
  std::size_t generator_total = 0;
  std::size_t discriminator_total = 0;
  std::size_t generator_paper_total = 0;
  std::size_t discriminator_paper_total = 0;

  /// True when every row with a published count, inception rows excluded, matches.
  bool non_inception_rows_match() const;
  bool all_rows_match() const;
};

ParamReport param_report(const NetworkSpec& generator, const NetworkSpec& discriminator);
/// Total weights, biases and BN entries of one network.
std::size_t total_parameters(const NetworkSpec& spec);

std::string report_text(const ParamReport& report);
std::string report_csv(const ParamReport& report);
std::string allocation_ledger(const ArchitectureSolution& solution);

}  // namespace igan
