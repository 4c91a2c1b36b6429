#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "igan/tensor.hpp"

namespace igan {

/// xoshiro256** seeded through SplitMix64.
///
/// The integer and uniform streams are bit-exact on every platform. Normal
/// draws use the Box-Muller transform on pairs of uniforms; they are
/// bit-exact wherever std::log/std::sqrt/std::cos/std::sin agree.
class Rng {
 public:
  static constexpr std::uint32_t kAlgorithmId = 1;
  static constexpr std::string_view kAlgorithmName = "xoshiro256**/splitmix64/box-muller";

  using State = std::array<std::uint64_t, 4>;

  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform_double();
  /// Uniform in [0, 1) with 24 bits of resolution (never rounds up to 1).
  float uniform_float();
  template <typename T>
  T uniform();
  /// Unbiased integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);
  /// Two independent standard normals.
  std::array<double, 2> normal_pair();

  const State& state() const { return state_; }
  void set_state(const State& state) { state_ = state; }

  /// Independent generator for a named sub-stream, derived from the current
  /// state without advancing it.
  Rng fork(std::uint64_t stream) const;

 private:
  Rng() = default;
  State state_{};
};

template <>
float Rng::uniform<float>();
template <>
double Rng::uniform<double>();

template <typename T>
Tensor<T> rng_uniform(Rng& rng, Shape shape);

template <typename T>
Tensor<T> rng_normal(Rng& rng, Shape shape, T mean = T(0), T stddev = T(1));

}  // namespace igan
