#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "igan/architecture.hpp"
#include "igan/model.hpp"
#include "igan/rng.hpp"
#include "igan/tensor.hpp"

// Alternating discriminator/generator optimisation with Adam, BCE losses and
// resumable state.

namespace igan {

/// Raised when a loss or gradient stops being finite. The message names the
/// step and the network or parameter involved.
class NumericFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// losses

/// Scores are clamped into [eps, 1 - eps] before taking logs.
inline constexpr double kScoreEpsilon = 1e-7;

struct LossValue {
  double value = 0.0;
  bool clamped = false;  // some score was outside (eps, 1 - eps)
};

/// -(1-s) mean(log r) - s mean(log(1-r)) - mean(log(1-f)), with real target 1-s.
LossValue d_loss(std::span<const double> real_scores, std::span<const double> fake_scores, double smoothing = 0.0);
/// Non-saturating generator loss -mean(log f).
LossValue g_loss(std::span<const double> fake_scores);

/// Differentiable score-space versions of the two losses (scores of any shape).
template <typename T>
Tensor<T> d_loss(const Tensor<T>& real_scores, const Tensor<T>& fake_scores, double smoothing = 0.0,
                 bool* clamped = nullptr);
template <typename T>
Tensor<T> g_loss(const Tensor<T>& fake_scores, bool* clamped = nullptr);

/// The same losses evaluated on pre-sigmoid logits through softplus, which
/// stays finite for any logit. Training uses these.
template <typename T>
Tensor<T> d_loss_from_logits(const Tensor<T>& real_logits, const Tensor<T>& fake_logits, double smoothing = 0.0);
template <typename T>
Tensor<T> g_loss_from_logits(const Tensor<T>& fake_logits);
/// d_loss_from_logits on one batch whose first `n_real` rows are real.
template <typename T>
Tensor<T> d_loss_from_mixed_logits(const Tensor<T>& logits, std::size_t n_real, double smoothing = 0.0);

// ---------------------------------------------------------------------------
// optimizer

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moments for one parameter, flat in parameter order.
struct AdamSlot {
  std::string name;
  std::vector<double> m;
  std::vector<double> v;
};

struct AdamState {
  std::uint64_t t = 0;
  std::vector<AdamSlot> slots;
};

/// Bias-corrected Adam update of every parameter from its accumulated grad.
/// A parameter without a grad counts as a zero gradient. All grads are checked
/// before anything is written, so a NaN aborts the whole step untouched.
template <typename T>
void adam_step(std::vector<NamedTensor<T>>& params, AdamState& state, const AdamConfig& cfg);

// ---------------------------------------------------------------------------
// training loop

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t steps = 500;
  double lr_g = 2e-4;
  double lr_d = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double dropout = 0.3;
  double label_smoothing = 0.0;
  std::uint64_t seed = 7;
  std::size_t width_divisor = 4;
  int sn_iterations = 1;
  bool discriminator_spectral_norm = true;
  std::size_t checkpoint_interval = 0;  // 0: final checkpoint only
  std::size_t log_interval = 50;

  /// Throws std::invalid_argument naming the first bad field.
  void validate() const;
  ModelConfig model_config() const;
};

struct StepLosses {
  double g_loss = 0.0;
  double d_loss = 0.0;
};

struct TrainState {
  std::uint64_t step = 0;
  AdamState adam_g;
  AdamState adam_d;
  Rng::State rng{};
  std::vector<double> g_history;
  std::vector<double> d_history;
};

/// Owns both networks and every piece of mutable training state. Data order
/// is a pure function of (seed, step), so a resumed run sees the same batches.
class Trainer {
 public:
  Trainer(const Architecture& full_width, const TrainConfig& cfg);

  const TrainConfig& config() const { return cfg_; }
  const Architecture& architecture() const { return full_arch_; }
  Generator<float>& generator() { return *gen_; }
  Discriminator<float>& discriminator() { return *disc_; }
  TrainState& state() { return state_; }
  const TrainState& state() const { return state_; }

  /// Discriminator update on a real batch plus a detached fake batch. Returns d_loss.
  double discriminator_phase(const Tensor<float>& real_batch);
  /// Generator update through a frozen discriminator. Returns g_loss.
  double generator_phase();
  /// One full iteration: D phase then G phase; appends to the loss history.
  StepLosses train_step(const Tensor<float>& real_batch);

  /// Indices of the corpus images forming the batch for `step` (0-based).
  std::vector<std::size_t> batch_indices(std::size_t corpus_size, std::uint64_t step) const;

  using StepCallback = std::function<void(std::uint64_t step, const StepLosses&)>;
  /// Runs train steps until state().step == cfg.steps. `corpus` is (M, 64, 64, 3).
  void train(const Tensor<float>& corpus, const StepCallback& on_step = {});

  /// Eval-mode samples from a dedicated noise stream that does not touch the
  /// training RNG.
  Tensor<float> sample(std::size_t count, std::uint64_t noise_seed);

 private:
  Rng rng();
  void store(const Rng& r);

  Architecture full_arch_;
  TrainConfig cfg_;
  std::unique_ptr<Generator<float>> gen_;
  std::unique_ptr<Discriminator<float>> disc_;
  TrainState state_;
};

/// Copies the images at `indices` out of a (M, H, W, C) corpus.
Tensor<float> gather_batch(const Tensor<float>& corpus, std::span<const std::size_t> indices);

/// `step,g_loss,d_loss` with one row per recorded step, 1-based.
std::string loss_csv(const TrainState& state);

}  // namespace igan
