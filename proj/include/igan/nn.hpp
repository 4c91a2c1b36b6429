#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "igan/ops.hpp"
#include "igan/rng.hpp"
#include "igan/tensor.hpp"

// Layer primitives over NHWC activations. Rank-3 inputs (H, W, C) are
// treated as a batch of one and returned at rank 3.

namespace igan::nn {

enum class Mode { Train, Eval };

/// LeakyReLU slope used throughout the discriminator.
inline constexpr double kLeakySlope = 0.2;

/// Square convolution with SAME-style padding p = d*(k-1)/2. Weights are laid
/// out [k, k, in, out], so reshaping them to (k*k*in, out) gives the im2col
/// GEMM operand directly.
struct ConvGeometry {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t dilation = 1;

  std::size_t padding() const { return dilation * (kernel - 1) / 2; }
  /// floor((extent + 2p - d(k-1) - 1) / s) + 1; throws if non-positive.
  std::size_t output_extent(std::size_t extent) const;
  std::size_t weight_count() const { return kernel * kernel * in_channels * out_channels; }
  std::size_t parameter_count() const { return weight_count() + out_channels; }
  Shape weight_shape() const { return {kernel, kernel, in_channels, out_channels}; }
  void validate() const;
};

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, const ConvGeometry& geom);

/// Each pixel becomes a 2x2 block; backward sums the block.
template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x);

enum class Padding { Valid, Same };

/// Average pooling. SAME pads by (window-1)/2 and averages over in-bounds taps
/// only, so constant inputs stay constant at the border.
struct PoolGeometry {
  std::size_t window = 2;
  std::size_t stride = 2;
  Padding padding = Padding::Valid;

  std::size_t pad() const { return padding == Padding::Same ? (window - 1) / 2 : 0; }
  std::size_t output_extent(std::size_t extent) const;
};

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, const PoolGeometry& geom);

/// Running statistics for batch normalization. Reported parameter count is
/// 4*C (gamma, beta, running mean, running variance).
template <typename T>
struct BatchNormState {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T momentum = T(0.9);
  T epsilon = T(1e-5);

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(channels, T(0)), running_var(channels, T(1)) {}
  std::size_t channels() const { return running_mean.size(); }
};

inline std::size_t batch_norm_parameter_count(std::size_t channels) { return 4 * channels; }

/// Per-channel normalization over every axis but the last.
/// Train mode: batch statistics (biased variance) normalize the input, and the
/// running statistics move as r <- momentum*r + (1-momentum)*batch, with the
/// unbiased batch variance feeding running_var.
/// Eval mode: running statistics normalize the input.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, BatchNormState<T>& state,
                     Mode mode);

struct DropoutParams {
  double rate = 0.3;
  Mode mode = Mode::Train;
};

/// Inverted dropout: kept units are scaled by 1/(1-rate). Identity in eval
/// mode or at rate 0. Draws one uniform per element from `rng` otherwise.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, const DropoutParams& params, Rng& rng);

/// Power-iteration state for a weight whose last axis is the output axis,
/// viewed as the matrix W (out x rest). `u` has `out` entries, `v` has `rest`.
template <typename T>
struct SpectralNormState {
  std::vector<T> u;
  std::vector<T> v;
};

class DegenerateSpectralNorm : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Unit-norm random u for a weight with `out` output units.
template <typename T>
SpectralNormState<T> make_spectral_norm_state(std::size_t out, Rng& rng);

/// Runs `iterations` rounds of v <- W^T u / |W^T u|, u <- W v / |W v| and
/// returns sigma = u^T W v. With zero iterations v is refreshed from u first.
template <typename T>
T power_iterate(const Tensor<T>& weight, SpectralNormState<T>& state, int iterations);

/// weight / sigma with sigma = u^T W v after `iterations` power-iteration
/// rounds. Differentiable in `weight` with u and v held fixed.
template <typename T>
Tensor<T> spectral_normalize(const Tensor<T>& weight, SpectralNormState<T>& state, int iterations = 1);

/// x (N, in) * w (in, out) + b (out).
template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

}  // namespace igan::nn
