#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include "igan/checkpoint.hpp"
#include "igan/ops.hpp"
#include "igan/train.hpp"
#include "support/gradcheck.hpp"

using namespace igan;

namespace {

const Architecture& full_arch() {
  static const Architecture arch = solve_architecture().architecture;
  return arch;
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.width_divisor = 8;
  cfg.batch_size = 4;
  cfg.steps = 6;
  cfg.seed = 3;
  return cfg;
}

Tensor<float> random_corpus(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  auto u = rng_uniform<float>(rng, {n, 64, 64, 3});
  std::vector<float> v(u.data().begin(), u.data().end());
  for (auto& x : v) x = 2.0f * x - 1.0f;
  return Tensor<float>({n, 64, 64, 3}, std::move(v));
}

std::vector<std::vector<float>> snapshot(std::vector<NamedTensor<float>> params) {
  std::vector<std::vector<float>> out;
  for (auto& p : params) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

// Independent scalar BCE used as the loss oracle.
double bce(double target, double s) { return -(target * std::log(s) + (1.0 - target) * std::log(1.0 - s)); }

}  // namespace

// ---------------------------------------------------------------------------
// losses

TEST(Losses, UntrainedScoresGiveTwoLn2AndLn2) {
  const std::vector<double> half(8, 0.5);
  EXPECT_NEAR(d_loss(half, half).value, 2.0 * std::log(2.0), 1e-12);
  EXPECT_NEAR(g_loss(half).value, std::log(2.0), 1e-12);
  EXPECT_FALSE(d_loss(half, half).clamped);
}

TEST(Losses, PerfectPlayersDriveLossesToZero) {
  const std::vector<double> hi(4, 1.0 - 1e-9), lo(4, 1e-9);
  EXPECT_LT(d_loss(hi, lo).value, 1e-6);
  EXPECT_LT(g_loss(hi).value, 1e-6);
}

TEST(Losses, RandomScoresMatchScalarFormula) {
  Rng rng(5);
  for (double smoothing : {0.0, 0.1, 0.3}) {
    std::vector<double> r(7), f(9);
    for (auto& x : r) x = 0.01 + 0.98 * rng.uniform_double();
    for (auto& x : f) x = 0.01 + 0.98 * rng.uniform_double();
    double want = 0.0;
    for (double x : r) want += bce(1.0 - smoothing, x) / 7.0;
    for (double x : f) want += bce(0.0, x) / 9.0;
    EXPECT_NEAR(d_loss(r, f, smoothing).value, want, 1e-12);
    double g = 0.0;
    for (double x : f) g += bce(1.0, x) / 9.0;
    EXPECT_NEAR(g_loss(f).value, g, 1e-12);
  }
}

TEST(Losses, OutOfRangeScoresAreClampedAndFlagged) {
  const std::vector<double> ok{0.5}, bad{1.0};
  const auto l = d_loss(ok, bad);
  EXPECT_TRUE(l.clamped);
  EXPECT_TRUE(std::isfinite(l.value));
  EXPECT_NEAR(l.value, std::log(2.0) - std::log(kScoreEpsilon), 1e-6);
  EXPECT_TRUE(g_loss(std::vector<double>{0.0}).clamped);
  EXPECT_THROW(d_loss(ok, ok, 0.5), std::invalid_argument);
}

TEST(Losses, TensorFormsAgreeWithScalarForms) {
  Rng rng(6);
  auto r = rng_uniform<double>(rng, {5, 1});
  auto f = rng_uniform<double>(rng, {6, 1});
  std::vector<double> rv(r.data().begin(), r.data().end()), fv(f.data().begin(), f.data().end());
  bool clamped = true;
  EXPECT_NEAR(d_loss(r, f, 0.2, &clamped).item(), d_loss(rv, fv, 0.2).value, 1e-12);
  EXPECT_FALSE(clamped);
  EXPECT_NEAR(g_loss(f).item(), g_loss(fv).value, 1e-12);
}

TEST(Losses, GeneratorGradientIsMinusOneOverNs) {
  Rng rng(7);
  auto s = rng_uniform<double>(rng, {6});
  for (auto& x : s.mutable_data()) x = 0.05 + 0.9 * x;
  s.set_requires_grad(true);
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    backward(tape, g_loss(s));
  }
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(s.grad()[i], -1.0 / (6.0 * s.data()[i]), 1e-12);
  auto f = [](const std::vector<Tensor<double>>& in) { return g_loss(in[0]); };
  EXPECT_LT(check::gradcheck(f, {s}, 8).max_relative_error, 1e-6);
}

TEST(Losses, LogitFormsEqualScoreFormsThroughSigmoid) {
  Rng rng(9);
  auto xr = rng_normal<double>(rng, {5, 1});
  auto xf = rng_normal<double>(rng, {5, 1});
  for (double s : {0.0, 0.15}) {
    EXPECT_NEAR(d_loss_from_logits(xr, xf, s).item(), d_loss(sigmoid(xr), sigmoid(xf), s).item(), 1e-12);
  }
  EXPECT_NEAR(g_loss_from_logits(xf).item(), g_loss(sigmoid(xf)).item(), 1e-12);

  std::vector<double> both(xr.data().begin(), xr.data().end());
  both.insert(both.end(), xf.data().begin(), xf.data().end());
  const Tensor<double> mixed({10, 1}, both);
  EXPECT_NEAR(d_loss_from_mixed_logits(mixed, 5, 0.1).item(), d_loss_from_logits(xr, xf, 0.1).item(), 1e-12);
}

TEST(Losses, LogitLossesStayFiniteForHugeLogits) {
  const auto big = Tensor<float>::full({4, 1}, 500.0f);
  const auto small = Tensor<float>::full({4, 1}, -500.0f);
  EXPECT_TRUE(std::isfinite(d_loss_from_logits(small, big).item()));
  EXPECT_TRUE(std::isfinite(g_loss_from_logits(small).item()));
  EXPECT_NEAR(d_loss_from_logits(big, small).item(), 0.0f, 1e-6f);
}

TEST(Losses, LogitGradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    auto f = [](const std::vector<Tensor<double>>& in) { return d_loss_from_mixed_logits(in[0], 3, 0.1); };
    EXPECT_LT(check::gradcheck(f, {rng_normal<double>(rng, {7, 1})}, seed).max_relative_error, 1e-6);
  }
}

// ---------------------------------------------------------------------------
// Adam

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  std::vector<NamedTensor<double>> params{{"w", Tensor<double>({3}, {1.0, -2.0, 3.0}, true)}};
  params[0].tensor.mutable_grad();  // allocates zeros
  AdamState st;
  adam_step(params, st, AdamConfig{});
  EXPECT_EQ(std::vector<double>(params[0].tensor.data().begin(), params[0].tensor.data().end()),
            (std::vector<double>{1.0, -2.0, 3.0}));
  EXPECT_EQ(st.t, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // Bias correction makes m_hat = g and v_hat = g^2 after one step.
  std::vector<NamedTensor<double>> params{{"theta", Tensor<double>::scalar(0.5, true)}};
  params[0].tensor.mutable_grad()[0] = 1.0;
  AdamState st;
  const AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};
  adam_step(params, st, cfg);
  EXPECT_NEAR(params[0].tensor.item(), 0.5 - 0.01 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, ConvergesOnConvexQuadratic) {
  std::vector<NamedTensor<double>> params{{"theta", Tensor<double>::scalar(1.0, true)}};
  AdamState st;
  const AdamConfig cfg{0.1, 0.9, 0.999, 1e-8};
  for (int i = 0; i < 100; ++i) {
    auto& t = params[0].tensor;
    t.zero_grad();
    t.mutable_grad()[0] = 2.0 * t.item();  // d/dθ θ²
    adam_step(params, st, cfg);
  }
  EXPECT_LT(std::abs(params[0].tensor.item()), 0.05);
}

TEST(Adam, NanGradientAbortsBeforeAnyWrite) {
  std::vector<NamedTensor<double>> params{{"a", Tensor<double>::scalar(1.0, true)},
                                          {"b", Tensor<double>::scalar(2.0, true)}};
  params[0].tensor.mutable_grad()[0] = 1.0;
  params[1].tensor.mutable_grad()[0] = std::nan("");
  AdamState st;
  try {
    adam_step(params, st, AdamConfig{});
    FAIL() << "expected NumericFailure";
  } catch (const NumericFailure& e) {
    EXPECT_NE(std::string(e.what()).find("b"), std::string::npos);
  }
  EXPECT_EQ(params[0].tensor.item(), 1.0);
  EXPECT_EQ(params[1].tensor.item(), 2.0);
  EXPECT_EQ(st.t, 0u);
}

// ---------------------------------------------------------------------------
// config

TEST(TrainConfigTest, ValidationRejectsBadValues) {
  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), std::invalid_argument);
  };
  bad([](TrainConfig& c) { c.batch_size = 1; });
  bad([](TrainConfig& c) { c.lr_g = 0.0; });
  bad([](TrainConfig& c) { c.lr_d = -1.0; });
  bad([](TrainConfig& c) { c.label_smoothing = 0.31; });
  bad([](TrainConfig& c) { c.dropout = 1.0; });
  EXPECT_NO_THROW(TrainConfig{}.validate());
}

TEST(TrainConfigTest, TextRoundTrip) {
  TrainConfig c;
  c.lr_g = 1.234e-4;
  c.seed = 99;
  c.discriminator_spectral_norm = false;
  c.label_smoothing = 0.1;
  TrainConfig back;
  std::istringstream in(config_to_text(c));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    ASSERT_NE(eq, std::string::npos);
    ASSERT_TRUE(apply_config_key(back, line.substr(0, eq), line.substr(eq + 3)));
  }
  EXPECT_EQ(config_to_text(back), config_to_text(c));
  EXPECT_FALSE(apply_config_key(back, "learning_rate", "1"));
  EXPECT_THROW(apply_config_key(back, "steps", "-3"), std::invalid_argument);
  EXPECT_THROW(apply_config_key(back, "lr_g", "fast"), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// training loop

TEST(Trainer, BatchesArePermutationsPerEpoch) {
  Trainer tr(full_arch(), tiny_config());
  std::multiset<std::size_t> seen;
  for (std::uint64_t s = 0; s < 3; ++s) {
    for (auto i : tr.batch_indices(13, s)) seen.insert(i);
  }
  // 13 images, batch 4: three full batches, one image left out per epoch
  EXPECT_EQ(seen.size(), 12u);
  EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), 12u);
  EXPECT_EQ(tr.batch_indices(13, 5), tr.batch_indices(13, 5));
  EXPECT_NE(tr.batch_indices(13, 0), tr.batch_indices(13, 3));
  EXPECT_THROW(tr.batch_indices(3, 0), std::invalid_argument);
}

TEST(Trainer, OneStepGivesFinitePositiveLosses) {
  Trainer tr(full_arch(), tiny_config());
  const auto l = tr.train_step(random_corpus(4, 1));
  EXPECT_TRUE(std::isfinite(l.g_loss) && l.g_loss > 0.0);
  EXPECT_TRUE(std::isfinite(l.d_loss) && l.d_loss > 0.0);
  EXPECT_EQ(tr.state().step, 1u);
  EXPECT_EQ(tr.state().g_history.size(), 1u);
}

TEST(Trainer, PhasesUpdateOnlyTheirOwnNetwork) {
  Trainer tr(full_arch(), tiny_config());
  const auto batch = random_corpus(4, 2);
  auto g0 = snapshot(tr.generator().parameters());
  auto d0 = snapshot(tr.discriminator().parameters());
  tr.discriminator_phase(batch);
  EXPECT_EQ(snapshot(tr.generator().parameters()), g0);
  EXPECT_NE(snapshot(tr.discriminator().parameters()), d0);

  auto d1 = snapshot(tr.discriminator().parameters());
  tr.generator_phase();
  EXPECT_EQ(snapshot(tr.discriminator().parameters()), d1);
  EXPECT_NE(snapshot(tr.generator().parameters()), g0);
  for (auto& p : tr.generator().parameters()) EXPECT_TRUE(p.tensor.requires_grad()) << p.name;
  for (auto& p : tr.discriminator().parameters()) EXPECT_TRUE(p.tensor.requires_grad()) << p.name;
}

TEST(Trainer, SameSeedReproducesLossHistoryOver20Steps) {
  auto cfg = tiny_config();
  cfg.steps = 20;
  const auto corpus = random_corpus(10, 4);
  Trainer a(full_arch(), cfg), b(full_arch(), cfg);
  a.train(corpus);
  b.train(corpus);
  EXPECT_EQ(a.state().g_history, b.state().g_history);
  EXPECT_EQ(a.state().d_history, b.state().d_history);
  EXPECT_EQ(loss_csv(a.state()), loss_csv(b.state()));
  EXPECT_EQ(snapshot(a.generator().parameters()), snapshot(b.generator().parameters()));
}

TEST(Trainer, LossCsvHasOneRowPerStep) {
  auto cfg = tiny_config();
  cfg.steps = 3;
  Trainer tr(full_arch(), cfg);
  std::size_t calls = 0;
  tr.train(random_corpus(8, 5), [&](std::uint64_t, const StepLosses&) { ++calls; });
  EXPECT_EQ(calls, 3u);
  const auto csv = loss_csv(tr.state());
  EXPECT_EQ(csv.rfind("step,g_loss,d_loss\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

TEST(Trainer, CorpusSmallerThanBatchIsRejected) {
  Trainer tr(full_arch(), tiny_config());
  EXPECT_THROW(tr.train(random_corpus(3, 6)), std::invalid_argument);
}

TEST(Trainer, SamplingDoesNotDisturbTraining) {
  auto cfg = tiny_config();
  cfg.steps = 3;
  const auto corpus = random_corpus(8, 7);
  Trainer a(full_arch(), cfg), b(full_arch(), cfg);
  a.train(corpus, [&](std::uint64_t, const StepLosses&) { (void)a.sample(2, 1); });
  b.train(corpus);
  EXPECT_EQ(a.state().g_history, b.state().g_history);
  EXPECT_EQ(snapshot(a.generator().parameters()), snapshot(b.generator().parameters()));
}

// ---------------------------------------------------------------------------
// checkpoints

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  auto cfg = tiny_config();
  cfg.steps = 2;
  Trainer tr(full_arch(), cfg);
  tr.train(random_corpus(8, 8));
  const auto bytes = make_checkpoint(tr).serialize();
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "IGAN");
  const auto again = Archive::parse(bytes).serialize();
  EXPECT_EQ(bytes, again);

  Trainer fresh(full_arch(), cfg);
  restore_checkpoint(fresh, Archive::parse(bytes));
  EXPECT_EQ(make_checkpoint(fresh).serialize(), bytes);
}

TEST(Checkpoint, FileRoundTrip) {
  Trainer tr(full_arch(), tiny_config());
  const auto path = std::filesystem::temp_directory_path() / "igan_test_ckpt.igan";
  make_checkpoint(tr).save(path);
  const auto loaded = Archive::load(path);
  EXPECT_EQ(loaded.serialize(), make_checkpoint(tr).serialize());
  EXPECT_EQ(config_to_text(checkpoint_config(loaded)), config_to_text(tr.config()));
  EXPECT_TRUE(checkpoint_architecture(loaded).generator.same_widths(full_arch().generator));
  std::filesystem::remove(path);
}

TEST(Checkpoint, ResumeMatchesUninterruptedRunBitwise) {
  auto cfg = tiny_config();
  cfg.steps = 6;
  const auto corpus = random_corpus(9, 9);

  Trainer straight(full_arch(), cfg);
  straight.train(corpus);

  auto half = cfg;
  half.steps = 3;
  Trainer first(full_arch(), half);
  first.train(corpus);
  const auto bytes = make_checkpoint(first).serialize();

  Trainer resumed(full_arch(), cfg);
  restore_checkpoint(resumed, Archive::parse(bytes));
  EXPECT_EQ(resumed.state().step, 3u);
  resumed.train(corpus);

  EXPECT_EQ(snapshot(resumed.generator().parameters()), snapshot(straight.generator().parameters()));
  EXPECT_EQ(snapshot(resumed.discriminator().parameters()), snapshot(straight.discriminator().parameters()));
  EXPECT_EQ(loss_csv(resumed.state()), loss_csv(straight.state()));
}

TEST(Checkpoint, CorruptInputIsRejected) {
  Trainer tr(full_arch(), tiny_config());
  auto bytes = make_checkpoint(tr).serialize();
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(Archive::parse(bad_magic), CheckpointError);
  auto bad_version = bytes;
  bad_version[4] = 99;
  EXPECT_THROW(Archive::parse(bad_version), CheckpointError);
  auto truncated = std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(bytes.size() / 2));
  EXPECT_THROW(Archive::parse(truncated), CheckpointError);

  auto other = tiny_config();
  other.width_divisor = 4;
  Trainer wider(full_arch(), other);
  EXPECT_THROW(restore_checkpoint(wider, Archive::parse(bytes)), CheckpointError);
}
