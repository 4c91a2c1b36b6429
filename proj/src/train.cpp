#include "igan/train.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "igan/data.hpp"
#include "igan/ops.hpp"

namespace igan {

namespace {

double clamp_score(double s, bool& clamped) {
  if (!(s >= kScoreEpsilon)) {  // also catches NaN
    clamped = true;
    return kScoreEpsilon;
  }
  if (s > 1.0 - kScoreEpsilon) {
    clamped = true;
    return 1.0 - kScoreEpsilon;
  }
  return s;
}

double mean_of(std::span<const double> xs, auto&& f) {
  if (xs.empty()) throw std::invalid_argument("loss: empty score batch");
  double acc = 0.0;
  for (double x : xs) acc += f(x);
  return acc / static_cast<double>(xs.size());
}

void check_smoothing(double s) {
  if (!(s >= 0.0 && s <= 0.3)) throw std::invalid_argument("label smoothing must lie in [0, 0.3]");
}

template <typename T>
bool any_outside(const Tensor<T>& scores) {
  for (T s : scores.data()) {
    if (!(static_cast<double>(s) >= kScoreEpsilon && static_cast<double>(s) <= 1.0 - kScoreEpsilon)) return true;
  }
  return false;
}

template <typename T>
Tensor<T> clamp_scores(const Tensor<T>& s) {
  return clamp(s, static_cast<T>(kScoreEpsilon), static_cast<T>(1.0 - kScoreEpsilon));
}

template <typename T>
Tensor<T> one_minus(const Tensor<T>& x) {
  return add_scalar(neg(x), T(1));
}

}  // namespace

LossValue d_loss(std::span<const double> real_scores, std::span<const double> fake_scores, double smoothing) {
  check_smoothing(smoothing);
  LossValue out;
  const double target = 1.0 - smoothing;
  const double real = mean_of(real_scores, [&](double s) {
    const double c = clamp_score(s, out.clamped);
    return target * std::log(c) + smoothing * std::log1p(-c);
  });
  const double fake = mean_of(fake_scores, [&](double s) { return std::log1p(-clamp_score(s, out.clamped)); });
  out.value = -real - fake;
  return out;
}

LossValue g_loss(std::span<const double> fake_scores) {
  LossValue out;
  out.value = -mean_of(fake_scores, [&](double s) { return std::log(clamp_score(s, out.clamped)); });
  return out;
}

template <typename T>
Tensor<T> d_loss(const Tensor<T>& real_scores, const Tensor<T>& fake_scores, double smoothing, bool* clamped) {
  check_smoothing(smoothing);
  if (clamped) *clamped = any_outside(real_scores) || any_outside(fake_scores);
  auto r = clamp_scores(real_scores);
  auto f = clamp_scores(fake_scores);
  auto real_term = scale(mean(log(r)), static_cast<T>(1.0 - smoothing));
  if (smoothing > 0.0) real_term = add(real_term, scale(mean(log(one_minus(r))), static_cast<T>(smoothing)));
  return neg(add(real_term, mean(log(one_minus(f)))));
}

template <typename T>
Tensor<T> g_loss(const Tensor<T>& fake_scores, bool* clamped) {
  if (clamped) *clamped = any_outside(fake_scores);
  return neg(mean(log(clamp_scores(fake_scores))));
}

// BCE with target t on logit x is t*softplus(-x) + (1-t)*softplus(x).
template <typename T>
Tensor<T> d_loss_from_logits(const Tensor<T>& real_logits, const Tensor<T>& fake_logits, double smoothing) {
  check_smoothing(smoothing);
  auto real_term = scale(mean(softplus(neg(real_logits))), static_cast<T>(1.0 - smoothing));
  if (smoothing > 0.0) real_term = add(real_term, scale(mean(softplus(real_logits)), static_cast<T>(smoothing)));
  return add(real_term, mean(softplus(fake_logits)));
}

template <typename T>
Tensor<T> g_loss_from_logits(const Tensor<T>& fake_logits) {
  return mean(softplus(neg(fake_logits)));
}

template <typename T>
Tensor<T> d_loss_from_mixed_logits(const Tensor<T>& logits, std::size_t n_real, double smoothing) {
  check_smoothing(smoothing);
  const std::size_t n = logits.numel();
  if (n_real == 0 || n_real >= n) throw std::invalid_argument("d_loss: need both real and fake rows");
  const double inv_real = 1.0 / static_cast<double>(n_real);
  const double inv_fake = 1.0 / static_cast<double>(n - n_real);
  // per-row weights on softplus(-x) and softplus(x)
  std::vector<T> w_pos(n, T(0)), w_neg(n, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_real) {
      w_pos[i] = static_cast<T>((1.0 - smoothing) * inv_real);
      w_neg[i] = static_cast<T>(smoothing * inv_real);
    } else {
      w_neg[i] = static_cast<T>(inv_fake);
    }
  }
  const Tensor<T> wp(logits.shape(), std::move(w_pos));
  const Tensor<T> wn(logits.shape(), std::move(w_neg));
  return add(sum(mul(softplus(neg(logits)), wp)), sum(mul(softplus(logits), wn)));
}

template <typename T>
void adam_step(std::vector<NamedTensor<T>>& params, AdamState& state, const AdamConfig& cfg) {
  if (state.slots.empty()) {
    for (const auto& p : params) {
      state.slots.push_back({p.name, std::vector<double>(p.tensor.numel(), 0.0),
                             std::vector<double>(p.tensor.numel(), 0.0)});
    }
  }
  if (state.slots.size() != params.size()) throw std::invalid_argument("adam: optimizer state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (state.slots[i].name != p.name || state.slots[i].m.size() != p.tensor.numel()) {
      throw std::invalid_argument("adam: optimizer slot " + state.slots[i].name + " does not match parameter " + p.name);
    }
    if (!p.tensor.has_grad()) continue;
    for (T g : p.tensor.grad()) {
      if (!std::isfinite(static_cast<double>(g))) throw NumericFailure("adam: non-finite gradient in " + p.name);
    }
  }

  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& slot = state.slots[i];
    auto values = p.tensor.mutable_data();
    const bool has = p.tensor.has_grad();
    auto grad = p.tensor.grad();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = has ? static_cast<double>(grad[j]) : 0.0;
      slot.m[j] = cfg.beta1 * slot.m[j] + (1.0 - cfg.beta1) * g;
      slot.v[j] = cfg.beta2 * slot.v[j] + (1.0 - cfg.beta2) * g * g;
      const double step = cfg.lr * (slot.m[j] / bc1) / (std::sqrt(slot.v[j] / bc2) + cfg.eps);
      values[j] = static_cast<T>(static_cast<double>(values[j]) - step);
    }
  }
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("train config: " + what); };
  if (batch_size < 2) fail("batch_size must be >= 2");
  if (!(lr_g > 0.0)) fail("lr_g must be > 0");
  if (!(lr_d > 0.0)) fail("lr_d must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2 must lie in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps must be > 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (!(label_smoothing >= 0.0 && label_smoothing <= 0.3)) fail("label_smoothing must lie in [0, 0.3]");
  if (width_divisor == 0) fail("width_divisor must be >= 1");
  if (sn_iterations < 0) fail("sn_iterations must be >= 0");
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.width_divisor = width_divisor;
  m.dropout_rate = dropout;
  m.discriminator_spectral_norm = discriminator_spectral_norm;
  return m;
}

namespace {

constexpr std::uint64_t kTrainStream = 0x747261696e;  // "train"

void require_image_batch(const Tensor<float>& x, const char* what) {
  if (x.rank() != 4 || x.dim(1) != 64 || x.dim(2) != 64 || x.dim(3) != 3) {
    throw ShapeError(std::string(what) + ": expected (N, 64, 64, 3), got " + to_string(x.shape()));
  }
}

template <typename T>
void zero_grads(std::vector<NamedTensor<T>>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

}  // namespace

Trainer::Trainer(const Architecture& full_width, const TrainConfig& cfg) : full_arch_(full_width), cfg_(cfg) {
  cfg_.validate();
  Rng init(cfg_.seed);
  const auto mc = cfg_.model_config();
  gen_ = std::make_unique<Generator<float>>(full_arch_, mc, init);
  disc_ = std::make_unique<Discriminator<float>>(full_arch_, mc, init);
  state_.rng = Rng(cfg_.seed).fork(kTrainStream).state();
}

Rng Trainer::rng() {
  Rng r(0);
  r.set_state(state_.rng);
  return r;
}

void Trainer::store(const Rng& r) { state_.rng = r.state(); }

double Trainer::discriminator_phase(const Tensor<float>& real_batch) {
  require_image_batch(real_batch, "discriminator phase");
  const std::size_t n = real_batch.dim(0);
  Rng r = rng();
  gen_->update_spectral_norms(cfg_.sn_iterations);
  disc_->update_spectral_norms(cfg_.sn_iterations);

  Tensor<float> fake;
  {
    TapeScope<float> off(nullptr);
    fake = gen_->forward(rng_normal<float>(r, {n, table::kNoise}), nn::Mode::Train);
  }
  auto gp = gen_->parameters();
  auto dp = disc_->parameters();
  set_trainable(gp, false);
  zero_grads(dp);
  double value = 0.0;
  {
    Tape<float> tape;
    TapeScope<float> scope(tape);
    // Real and fake go through D as separate batches, so batch-norm statistics
    // on fakes match what the generator phase sees.
    auto real_logits = disc_->logits(real_batch, nn::Mode::Train, &r);
    auto fake_logits = disc_->logits(fake, nn::Mode::Train, &r);
    auto loss = d_loss_from_logits(real_logits, fake_logits, cfg_.label_smoothing);
    value = static_cast<double>(loss.item());
    if (!std::isfinite(value)) {
      set_trainable(gp, true);
      throw NumericFailure(fmt::format("step {}: discriminator loss is not finite", state_.step + 1));
    }
    backward(tape, loss);
  }
  try {
    adam_step(dp, state_.adam_d, AdamConfig{cfg_.lr_d, cfg_.beta1, cfg_.beta2, cfg_.adam_eps});
  } catch (const NumericFailure& e) {
    set_trainable(gp, true);
    throw NumericFailure(fmt::format("step {}: discriminator {}", state_.step + 1, e.what()));
  }
  zero_grads(dp);
  set_trainable(gp, true);
  store(r);
  return value;
}

double Trainer::generator_phase() {
  Rng r = rng();
  gen_->update_spectral_norms(cfg_.sn_iterations);
  disc_->update_spectral_norms(cfg_.sn_iterations);

  auto gp = gen_->parameters();
  auto dp = disc_->parameters();
  set_trainable(dp, false);
  zero_grads(gp);
  double value = 0.0;
  {
    Tape<float> tape;
    TapeScope<float> scope(tape);
    auto fake = gen_->forward(rng_normal<float>(r, {cfg_.batch_size, table::kNoise}), nn::Mode::Train);
    auto loss = g_loss_from_logits(disc_->logits(fake, nn::Mode::Train, &r));
    value = static_cast<double>(loss.item());
    if (!std::isfinite(value)) {
      set_trainable(dp, true);
      throw NumericFailure(fmt::format("step {}: generator loss is not finite", state_.step + 1));
    }
    backward(tape, loss);
  }
  try {
    adam_step(gp, state_.adam_g, AdamConfig{cfg_.lr_g, cfg_.beta1, cfg_.beta2, cfg_.adam_eps});
  } catch (const NumericFailure& e) {
    set_trainable(dp, true);
    throw NumericFailure(fmt::format("step {}: generator {}", state_.step + 1, e.what()));
  }
  zero_grads(gp);
  set_trainable(dp, true);
  store(r);
  return value;
}

StepLosses Trainer::train_step(const Tensor<float>& real_batch) {
  StepLosses out;
  out.d_loss = discriminator_phase(real_batch);
  out.g_loss = generator_phase();
  state_.d_history.push_back(out.d_loss);
  state_.g_history.push_back(out.g_loss);
  state_.step += 1;
  return out;
}

std::vector<std::size_t> Trainer::batch_indices(std::size_t corpus_size, std::uint64_t step) const {
  return data::batch_indices(corpus_size, cfg_.batch_size, cfg_.seed, step);
}

void Trainer::train(const Tensor<float>& corpus, const StepCallback& on_step) {
  require_image_batch(corpus, "train");
  while (state_.step < cfg_.steps) {
    const auto idx = batch_indices(corpus.dim(0), state_.step);
    const auto losses = train_step(gather_batch(corpus, idx));
    if (on_step) on_step(state_.step, losses);
  }
}

Tensor<float> Trainer::sample(std::size_t count, std::uint64_t noise_seed) {
  Rng r(noise_seed);
  TapeScope<float> off(nullptr);
  std::vector<float> out;
  out.reserve(count * 64 * 64 * 3);
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < count; start += kChunk) {
    const std::size_t n = std::min(kChunk, count - start);
    auto imgs = gen_->forward(rng_normal<float>(r, {n, table::kNoise}), nn::Mode::Eval);
    out.insert(out.end(), imgs.data().begin(), imgs.data().end());
  }
  return Tensor<float>({count, 64, 64, 3}, std::move(out));
}

Tensor<float> gather_batch(const Tensor<float>& corpus, std::span<const std::size_t> indices) {
  if (corpus.rank() != 4) throw ShapeError("gather_batch: corpus must be rank 4");
  const std::size_t per = corpus.numel() / corpus.dim(0);
  std::vector<float> out;
  out.reserve(indices.size() * per);
  auto src = corpus.data();
  for (std::size_t i : indices) {
    if (i >= corpus.dim(0)) throw std::out_of_range("gather_batch: index out of range");
    out.insert(out.end(), src.begin() + static_cast<std::ptrdiff_t>(i * per),
               src.begin() + static_cast<std::ptrdiff_t>((i + 1) * per));
  }
  Shape shape = corpus.shape();
  shape[0] = indices.size();
  return Tensor<float>(std::move(shape), std::move(out));
}

std::string loss_csv(const TrainState& state) {
  std::string out = "step,g_loss,d_loss\n";
  for (std::size_t i = 0; i < state.g_history.size(); ++i) {
    out += fmt::format("{},{},{}\n", i + 1, state.g_history[i], state.d_history[i]);
  }
  return out;
}

#define IGAN_INSTANTIATE_TRAIN(T)                                                                   \
  template Tensor<T> d_loss(const Tensor<T>&, const Tensor<T>&, double, bool*);                     \
  template Tensor<T> g_loss(const Tensor<T>&, bool*);                                               \
  template Tensor<T> d_loss_from_logits(const Tensor<T>&, const Tensor<T>&, double);                \
  template Tensor<T> g_loss_from_logits(const Tensor<T>&);                                          \
  template Tensor<T> d_loss_from_mixed_logits(const Tensor<T>&, std::size_t, double);               \
  template void adam_step(std::vector<NamedTensor<T>>&, AdamState&, const AdamConfig&);

IGAN_INSTANTIATE_TRAIN(float)
IGAN_INSTANTIATE_TRAIN(double)

}  // namespace igan
