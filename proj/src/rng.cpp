#include "igan/rng.hpp"

#include <bit>
#include <cmath>
#include <numbers>

namespace igan {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) {
  for (auto& word : state_) word = splitmix64(seed);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = std::rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = std::rotl(state_[3], 45);
  return result;
}

double Rng::uniform_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

float Rng::uniform_float() {
  return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f;
}

template <>
float Rng::uniform<float>() {
  return uniform_float();
}

template <>
double Rng::uniform<double>() {
  return uniform_double();
}

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) return 0;
  // Rejection on the biased tail keeps the draw exactly uniform.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % bound;
}

std::array<double, 2> Rng::normal_pair() {
  const double u1 = 1.0 - uniform_double();  // (0, 1]
  const double u2 = uniform_double();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(theta), r * std::sin(theta)};
}

Rng Rng::fork(std::uint64_t stream) const {
  std::uint64_t mix = state_[0] ^ std::rotl(state_[1], 13) ^ std::rotl(state_[2], 29) ^ std::rotl(state_[3], 47);
  mix ^= stream * 0xD1B54A32D192ED03ULL;
  Rng child;
  for (auto& word : child.state_) word = splitmix64(mix);
  return child;
}

template <typename T>
Tensor<T> rng_uniform(Rng& rng, Shape shape) {
  check_extents(shape);
  std::vector<T> data(shape_numel(shape));
  for (auto& v : data) v = rng.uniform<T>();
  return Tensor<T>(std::move(shape), std::move(data));
}

template <typename T>
Tensor<T> rng_normal(Rng& rng, Shape shape, T mean, T stddev) {
  check_extents(shape);
  std::vector<T> data(shape_numel(shape));
  for (std::size_t i = 0; i < data.size(); i += 2) {
    const auto z = rng.normal_pair();
    data[i] = mean + stddev * static_cast<T>(z[0]);
    if (i + 1 < data.size()) data[i + 1] = mean + stddev * static_cast<T>(z[1]);
  }
  return Tensor<T>(std::move(shape), std::move(data));
}

template Tensor<float> rng_uniform(Rng&, Shape);
template Tensor<double> rng_uniform(Rng&, Shape);
template Tensor<float> rng_normal(Rng&, Shape, float, float);
template Tensor<double> rng_normal(Rng&, Shape, double, double);

}  // namespace igan
