#pragma once

// Central finite-difference gradient checking in double precision. The
// scalar under test is L = sum(w * f(inputs)) with fixed random weights w, so
// every output element contributes with a distinct sensitivity.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "igan/ops.hpp"
#include "igan/rng.hpp"
#include "igan/tensor.hpp"

namespace igan::check {

using Fn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps entries
/// whose true gradient is exactly zero from dividing by zero.
inline double relative_error(double a, double n, double floor = 1e-6) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

inline GradCheckResult gradcheck(const Fn& f, std::vector<Tensor<double>> inputs, std::uint64_t weight_seed,
                                 double h = 1e-3) {
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }

  Tensor<double> weights;
  {
    TapeScope<double> off(nullptr);
    auto probe = f(inputs);
    Rng rng(weight_seed);
    weights = rng_normal<double>(rng, probe.shape());
  }
  auto loss_of = [&](const std::vector<Tensor<double>>& xs) {
    TapeScope<double> off(nullptr);
    return sum(mul(f(xs), weights)).item();
  };

  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    auto loss = sum(mul(f(inputs), weights));
    backward(tape, loss);
  }

  GradCheckResult result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto analytic = std::vector<double>(inputs[i].grad().begin(), inputs[i].grad().end());
    if (analytic.empty()) analytic.assign(inputs[i].numel(), 0.0);
    auto values = inputs[i].mutable_data();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double saved = values[j];
      auto central = [&](double step) {
        values[j] = saved + step;
        const double up = loss_of(inputs);
        values[j] = saved - step;
        const double down = loss_of(inputs);
        values[j] = saved;
        return (up - down) / (2.0 * step);
      };
      // Richardson extrapolation cancels the O(h^2) term of the central difference.
      const double numeric = (4.0 * central(h / 2) - central(h)) / 3.0;
      const double err = relative_error(analytic[j], numeric);
      if (err > result.max_relative_error) result = {err, i, j, analytic[j], numeric};
    }
  }
  return result;
}

/// Random tensor whose entries stay at least `margin` away from zero, for ops
/// with a kink at the origin.
inline Tensor<double> random_away_from_zero(Rng& rng, Shape shape, double margin = 0.05) {
  auto t = rng_normal<double>(rng, std::move(shape));
  for (auto& v : t.mutable_data()) {
    if (std::abs(v) < margin) v = v < 0 ? v - margin : v + margin;
  }
  return t;
}

}  // namespace igan::check
