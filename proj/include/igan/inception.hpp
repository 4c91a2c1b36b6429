#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

// Branch-width allocation for four-branch inception modules:
//   (1x1) | (1x1 -> 3x3) | (1x1 -> 5x5) | (avgpool -> 1x1)
// and the solver that recovers widths from a total parameter count.

namespace igan {

/// Branch topologies the solver may try.
enum class InceptionTemplate {
  Bottlenecked,      // both 3x3 and 5x5 behind a 1x1 reduction
  Direct5x5,         // 5x5 reads the module input directly
  Direct3x3,         // 3x3 reads the module input directly
  SinglePointwise,   // one 1x1 branch only
};

std::string to_string(InceptionTemplate t);
InceptionTemplate template_from_string(const std::string& s);

/// The three templates searched for the network's modules, in priority order.
std::vector<InceptionTemplate> default_templates();

struct InceptionAllocation {
  InceptionTemplate tmpl = InceptionTemplate::Bottlenecked;
  std::size_t in_channels = 0;
  std::size_t branch1_1x1_out = 0;
  std::size_t branch2_bottleneck = 0;  // 0 when the 3x3 is direct
  std::size_t branch2_3x3_out = 0;
  std::size_t branch3_bottleneck = 0;  // 0 when the 5x5 is direct
  std::size_t branch3_5x5_out = 0;
  std::size_t branch4_pool_1x1_out = 0;
  // stride applied to every branch's spatial operator
  std::size_t stride = 1;
  std::size_t dilation_1x1 = 1;  // reported only; a 1x1 tap ignores dilation
  std::size_t dilation_3x3 = 1;
  std::size_t dilation_5x5 = 1;
  std::size_t pool_window = 3;

  std::size_t out_channels() const;
  /// Conv weights plus biases over all branches (BN excluded).
  std::size_t parameter_count() const;
  /// Every width divided by `divisor`, rounded up.
  InceptionAllocation scaled(std::size_t divisor) const;
  bool same_widths(const InceptionAllocation& other) const;
  std::string describe() const;
};

/// Parameter count of a module with the given template and widths.
std::size_t inception_parameter_count(InceptionTemplate t, std::size_t in, std::size_t a, std::size_t b2,
                                      std::size_t c, std::size_t b3, std::size_t e, std::size_t f);

enum class SolveStatus { Exact, BestFit };

struct AllocationCandidate {
  InceptionAllocation allocation;
  std::int64_t deviation = 0;  // computed - target
};

struct SolveResult {
  InceptionAllocation allocation;
  SolveStatus status = SolveStatus::Exact;
  std::int64_t deviation = 0;
  std::size_t step = 1;  // width grid the winner was found on
  std::vector<InceptionTemplate> searched;
  std::size_t exact_solutions = 0;  // exact hits on the winning template and grid
};

class UnresolvableAllocation : public std::runtime_error {
 public:
  UnresolvableAllocation(const std::string& what, std::vector<AllocationCandidate> closest)
      : std::runtime_error(what), closest_(std::move(closest)) {}
  const std::vector<AllocationCandidate>& closest() const { return closest_; }

 private:
  std::vector<AllocationCandidate> closest_;
};

struct SolveOptions {
  std::size_t min_width = 4;
  std::vector<std::size_t> steps = {4, 1};  // multiples-of-4 pass, then every integer
  double max_relative_deviation = 0.01;     // best fits beyond this are unresolvable
};

/// Searches integer branch widths in [min_width, out_ch] whose parameter count
/// hits `target`. Passes run in `opts.steps` order and templates in the given
/// order; the first (pass, template) with an exact hit wins. Among exact hits
/// the allocation with output widths closest to an even four-way split wins,
/// then the smaller bottleneck total, then lexicographic order. Without an exact
/// hit the smallest |deviation| over everything searched is returned.
SolveResult solve_allocation(std::size_t in_ch, std::size_t out_ch, std::size_t target,
                             const std::vector<InceptionTemplate>& templates, const SolveOptions& opts = {});

}  // namespace igan
