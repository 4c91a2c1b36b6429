#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <cstring>

#include "igan/architecture.hpp"
#include "igan/inception.hpp"
#include "igan/model.hpp"
#include "igan/ops.hpp"
#include "support/gradcheck.hpp"

using namespace igan;

namespace {

const ArchitectureSolution& solution() {
  static const ArchitectureSolution s = solve_architecture();
  return s;
}

// Direct enumeration of every bottlenecked allocation on a grid; independent
// of the solver's solve-for-the-last-width strategy.
std::int64_t brute_force_min_deviation(std::size_t in, std::size_t out, std::size_t target, std::size_t step) {
  std::int64_t best = INT64_MAX;
  for (std::size_t a = step; a <= out; a += step)
    for (std::size_t c = step; a + c <= out; c += step)
      for (std::size_t e = step; a + c + e < out; e += step) {
        const std::size_t f = out - a - c - e;
        if (f < step || f % step) continue;
        for (std::size_t b2 = step; b2 <= out; b2 += step)
          for (std::size_t b3 = step; b3 <= out; b3 += step) {
            const auto p = (in + 1) * (a + b2 + b3 + f) + (9 * b2 + 1) * c + (25 * b3 + 1) * e;
            best = std::min<std::int64_t>(best, std::llabs(static_cast<std::int64_t>(p) - static_cast<std::int64_t>(target)));
          }
      }
  return best;
}

}  // namespace

// ---------------------------------------------------------------------------
// allocation solver

TEST(Solver, SingleBranchLinearSolution) {
  auto r = solve_allocation(256, 64, 16448, {InceptionTemplate::SinglePointwise});
  EXPECT_EQ(r.status, SolveStatus::Exact);
  EXPECT_EQ(r.allocation.branch1_1x1_out, 64u);
  EXPECT_EQ(r.allocation.parameter_count(), 16448u);
}

TEST(Solver, CountFormulaMatchesHandSums) {
  // 1x1: 257*64; 3x3: 257*128 + 1153*64; 5x5: 257*32 + 801*64; pool: 257*64
  EXPECT_EQ(inception_parameter_count(InceptionTemplate::Bottlenecked, 256, 64, 128, 64, 32, 64, 64),
            257u * 64 + 257u * 128 + 1153u * 64 + 257u * 32 + 801u * 64 + 257u * 64);
  EXPECT_EQ(inception_parameter_count(InceptionTemplate::Direct5x5, 10, 1, 2, 3, 0, 4, 5),
            11u * 1 + 11u * 2 + 19u * 3 + 251u * 4 + 11u * 5);
  EXPECT_EQ(inception_parameter_count(InceptionTemplate::Direct3x3, 10, 1, 0, 3, 2, 4, 5),
            11u * 1 + 91u * 3 + 11u * 2 + 51u * 4 + 11u * 5);
}

TEST(Solver, RoundTripRecoversBalancedModules) {
  struct Case {
    std::size_t in, a, b2, c, b3, e, f;
  };
  const Case cases[] = {{256, 64, 128, 64, 32, 64, 64}, {64, 32, 32, 32, 32, 32, 32}, {96, 16, 24, 16, 8, 16, 16}};
  for (const auto& k : cases) {
    const std::size_t out = k.a + k.c + k.e + k.f;
    const auto target = inception_parameter_count(InceptionTemplate::Bottlenecked, k.in, k.a, k.b2, k.c, k.b3, k.e, k.f);
    auto r = solve_allocation(k.in, out, target, default_templates());
    ASSERT_EQ(r.status, SolveStatus::Exact);
    EXPECT_EQ(r.allocation.tmpl, InceptionTemplate::Bottlenecked);
    EXPECT_EQ(r.allocation.parameter_count(), target);
    EXPECT_EQ(r.allocation.branch1_1x1_out, k.a);
    EXPECT_EQ(r.allocation.branch2_bottleneck, k.b2);
    EXPECT_EQ(r.allocation.branch2_3x3_out, k.c);
    EXPECT_EQ(r.allocation.branch3_bottleneck, k.b3);
    EXPECT_EQ(r.allocation.branch3_5x5_out, k.e);
    EXPECT_EQ(r.allocation.branch4_pool_1x1_out, k.f);
  }
}

TEST(Solver, PublishedTargetsResolveExactly) {
  const auto& s = solution();
  EXPECT_EQ(s.generator.status, SolveStatus::Exact);
  EXPECT_EQ(s.discriminator1.status, SolveStatus::Exact);
  EXPECT_EQ(s.discriminator2.status, SolveStatus::Exact);
  EXPECT_EQ(s.architecture.generator.parameter_count(), table::kGenInception);
  EXPECT_EQ(s.architecture.discriminator1.parameter_count(), table::kDiscInception1);
  EXPECT_EQ(s.architecture.discriminator2.parameter_count(), table::kDiscInception2);
  EXPECT_EQ(s.architecture.generator.out_channels(), 256u);
  EXPECT_EQ(s.architecture.discriminator1.out_channels(), 128u);
  EXPECT_EQ(s.architecture.discriminator2.out_channels(), 256u);
}

TEST(Solver, CanonicalWidthsAreStable) {
  const auto& g = solution().architecture.generator;
  EXPECT_EQ(g.branch1_1x1_out, 64u);
  EXPECT_EQ(g.branch2_bottleneck, 128u);
  EXPECT_EQ(g.branch2_3x3_out, 64u);
  EXPECT_EQ(g.branch3_bottleneck, 32u);
  EXPECT_EQ(g.branch3_5x5_out, 64u);
  EXPECT_EQ(g.branch4_pool_1x1_out, 64u);
  const auto again = solve_architecture();
  EXPECT_TRUE(again.architecture.generator.same_widths(g));
  EXPECT_TRUE(again.architecture.discriminator1.same_widths(solution().architecture.discriminator1));
  EXPECT_TRUE(again.architecture.discriminator2.same_widths(solution().architecture.discriminator2));
}

TEST(Solver, BestFitMatchesBruteForce) {
  // Small module where exact hits are impossible on the 4-grid: the solver's
  // reported deviation must equal the exhaustive minimum.
  SolveOptions opts;
  opts.steps = {4};
  opts.max_relative_deviation = 0.5;
  for (std::size_t target : {5001u, 7777u, 12345u}) {
    const std::int64_t oracle = brute_force_min_deviation(20, 32, target, 4);
    auto r = solve_allocation(20, 32, target, {InceptionTemplate::Bottlenecked}, opts);
    EXPECT_EQ(std::llabs(r.deviation), oracle) << "target " << target;
    if (oracle != 0) {
      EXPECT_EQ(r.status, SolveStatus::BestFit);
    }
    EXPECT_EQ(static_cast<std::int64_t>(r.allocation.parameter_count()) - static_cast<std::int64_t>(target), r.deviation);
  }
}

TEST(Solver, UnresolvableReportsClosestCandidates) {
  try {
    solve_allocation(3, 16, 10'000'000, default_templates());
    FAIL() << "expected UnresolvableAllocation";
  } catch (const UnresolvableAllocation& e) {
    EXPECT_FALSE(e.closest().empty());
    EXPECT_NE(std::string(e.what()).find("unresolvable under templates"), std::string::npos);
  }
}

TEST(Solver, RejectsBadArguments) {
  EXPECT_THROW(solve_allocation(0, 16, 100, default_templates()), std::invalid_argument);
  EXPECT_THROW(solve_allocation(4, 16, 100, {}), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// network specs and parameter report

TEST(Spec, PublishedRowCounts) {
  const auto g = build_generator(solution().architecture);
  const auto d = build_discriminator(solution().architecture);
  auto row = [](const NetworkSpec& s, const std::string& name) -> const LayerSpec& {
    for (const auto& l : s.layers)
      if (l.name == name) return l;
    throw std::runtime_error("missing " + name);
  };
  EXPECT_EQ(row(g, "G.dense").params, 413696u);
  EXPECT_EQ(row(g, "G.conv1").params, 590080u);
  EXPECT_EQ(row(g, "G.conv1").bn_params, 1024u);
  EXPECT_EQ(row(g, "G.conv2").params, 295040u);
  EXPECT_EQ(row(g, "G.conv2").bn_params, 512u);
  EXPECT_EQ(row(g, "G.conv_out").params, 3459u);
  EXPECT_EQ(row(d, "D.conv1").params, 1792u);
  EXPECT_EQ(row(d, "D.conv_pw").params, 65792u);
  EXPECT_EQ(row(d, "D.conv2").params, 590080u);
  EXPECT_EQ(row(d, "D.inception2").bn_params, 1024u);
  EXPECT_EQ(row(d, "D.dense").params, 4097u);
}

TEST(Spec, ReportRowsAndTotals) {
  const auto g = build_generator(solution().architecture);
  const auto d = build_discriminator(solution().architecture);
  const auto rep = param_report(g, d);
  EXPECT_TRUE(rep.non_inception_rows_match());
  EXPECT_TRUE(rep.all_rows_match());
  std::size_t gsum = 0, dsum = 0;
  for (const auto& r : rep.rows) {
    if (r.branch) continue;
    (r.name[0] == 'G' ? gsum : dsum) += r.computed;
  }
  EXPECT_EQ(rep.generator_total, gsum);
  EXPECT_EQ(rep.discriminator_total, dsum);
  EXPECT_EQ(rep.generator_total, total_parameters(g));
  EXPECT_EQ(rep.discriminator_total, total_parameters(d));
  // branch rows of each module add up to the module row
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    if (!rep.rows[i].inception || rep.rows[i].branch) continue;
    std::size_t s = 0;
    for (std::size_t j = i + 1; j < rep.rows.size() && rep.rows[j].branch; ++j) s += rep.rows[j].computed;
    EXPECT_EQ(s, rep.rows[i].computed) << rep.rows[i].name;
  }
  const auto csv = report_csv(rep);
  EXPECT_EQ(csv.rfind("row_name,kernel,stride,dilation,params_computed,params_paper,match\n", 0), 0u);
  EXPECT_NE(csv.find("G.dense,-,-,-,413696,413696,true"), std::string::npos);
}

TEST(Spec, DeclaredShapesFollowTheTable) {
  const auto g = build_generator(solution().architecture);
  const std::vector<Shape> expected = {{100},         {4096},        {4, 4, 256},   {8, 8, 256},
                                       {8, 8, 256},   {16, 16, 256}, {16, 16, 256}, {32, 32, 256},
                                       {32, 32, 256}, {64, 64, 256}, {64, 64, 128}, {64, 64, 3}};
  ASSERT_EQ(g.layers.size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(g.layers[i].computed, expected[i]) << g.layers[i].name;
  const auto d = build_discriminator(solution().architecture);
  const std::vector<Shape> dexp = {{64, 64, 3}, {64, 64, 64}, {32, 32, 128}, {16, 16, 256},
                                   {8, 8, 256}, {4, 4, 256},  {4096},        {1}};
  ASSERT_EQ(d.layers.size(), dexp.size());
  for (std::size_t i = 0; i < dexp.size(); ++i) EXPECT_EQ(d.layers[i].computed, dexp[i]) << d.layers[i].name;
}

TEST(Spec, UnstridedDiscriminatorBranchIsCaught) {
  auto arch = solution().architecture;
  arch.discriminator1.stride = 1;  // spatial extent would stay at 64
  EXPECT_THROW(build_discriminator(arch), ShapeError);
}

TEST(Spec, ScaledArchitectureKeepsShapesConsistent) {
  for (std::size_t div : {2u, 4u, 8u}) {
    const auto arch = solution().architecture.scaled(div);
    EXPECT_NO_THROW(build_generator(arch));
    EXPECT_NO_THROW(build_discriminator(arch));
  }
}

// ---------------------------------------------------------------------------
// runtime modules

TEST(Inception, GeneratorModulePreservesExtent) {
  Rng rng(1);
  const auto& a = solution().architecture.generator;
  InceptionLayer<float> layer("m", a, 0.02, rng);
  auto y = inception_forward(rng_normal<float>(rng, {1, 16, 16, 256}), layer);
  EXPECT_EQ(y.shape(), (Shape{1, 16, 16, 256}));
}

TEST(Inception, DiscriminatorModuleHalvesExtent) {
  Rng rng(2);
  const auto& a = solution().architecture.discriminator1;
  InceptionLayer<float> layer("m", a, 0.02, rng);
  auto y = inception_forward(rng_normal<float>(rng, {1, 64, 64, 64}), layer);
  EXPECT_EQ(y.shape(), (Shape{1, 32, 32, 128}));
}

TEST(Inception, ZeroWeightsGiveZeroOutput) {
  Rng rng(3);
  auto a = solution().architecture.generator.scaled(8);
  InceptionLayer<double> layer("m", a, 0.0, rng);
  auto y = inception_forward(rng_normal<double>(rng, {2, 8, 8, a.in_channels}), layer);
  EXPECT_EQ(y.shape(), (Shape{2, 8, 8, a.out_channels()}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Inception, BranchOrderIsFixed) {
  // Only the pool branch's weights are nonzero: output channels outside the
  // last block must be exactly zero.
  Rng rng(4);
  auto a = solution().architecture.generator.scaled(8);
  InceptionLayer<double> layer("m", a, 0.0, rng);
  std::vector<NamedTensor<double>> params;
  std::vector<NamedBuffer<double>> bufs;
  layer.collect(params, bufs);
  for (auto& p : params)
    if (p.name == "m.b4.bias")
      for (auto& v : p.tensor.mutable_data()) v = 1.0;
  auto y = inception_forward(rng_normal<double>(rng, {1, 4, 4, a.in_channels}), layer);
  const std::size_t c = a.out_channels();
  const std::size_t first_pool = c - a.branch4_pool_1x1_out;
  for (std::size_t p = 0; p < 16; ++p)
    for (std::size_t ch = 0; ch < c; ++ch) EXPECT_EQ(y.data()[p * c + ch], ch >= first_pool ? 1.0 : 0.0);
}

TEST(Models, FullWidthShapeTrace) {
  Rng rng(5);
  Generator<float> g(solution().architecture, ModelConfig{}, rng);
  ShapeTrace trace;
  auto img = g.forward(rng_normal<float>(rng, {1, 100}), nn::Mode::Eval, &trace);
  const auto& spec = g.spec();
  ASSERT_EQ(trace.shapes.size(), spec.layers.size());
  for (std::size_t i = 0; i < trace.shapes.size(); ++i) {
    EXPECT_EQ(trace.names[i], spec.layers[i].name);
    EXPECT_EQ(trace.shapes[i], spec.layers[i].declared) << trace.names[i];
  }
  for (float v : img.data()) {
    EXPECT_GT(v, -1.f);
    EXPECT_LT(v, 1.f);
  }
  Discriminator<float> d(solution().architecture, ModelConfig{}, rng);
  ShapeTrace dtrace;
  auto p = d.forward(img, nn::Mode::Eval, nullptr, &dtrace);
  ASSERT_EQ(dtrace.shapes.size(), d.spec().layers.size());
  for (std::size_t i = 0; i < dtrace.shapes.size(); ++i) EXPECT_EQ(dtrace.shapes[i], d.spec().layers[i].declared);
  EXPECT_EQ(p.shape(), (Shape{1, 1}));
  EXPECT_GT(p.item(), 0.f);
  EXPECT_LT(p.item(), 1.f);
}

TEST(Models, OutputRangesOverManyInputs) {
  Rng rng(6);
  ModelConfig cfg;
  cfg.width_divisor = 4;
  Generator<float> g(solution().architecture, cfg, rng);
  Discriminator<float> d(solution().architecture, cfg, rng);
  std::size_t seen = 0;
  for (int chunk = 0; chunk < 20; ++chunk) {
    auto img = g.forward(rng_normal<float>(rng, {50, 100}), nn::Mode::Eval);
    for (float v : img.data()) {
      ASSERT_GT(v, -1.f);
      ASSERT_LT(v, 1.f);
    }
    auto p = d.forward(img, nn::Mode::Eval, nullptr);
    for (float v : p.data()) {
      ASSERT_GT(v, 0.f);
      ASSERT_LT(v, 1.f);
    }
    seen += 50;
  }
  EXPECT_EQ(seen, 1000u);
}

TEST(Models, SameSeedBuildsIdenticalParameters) {
  ModelConfig cfg;
  cfg.width_divisor = 8;
  Rng r1(9), r2(9);
  Generator<float> a(solution().architecture, cfg, r1);
  Generator<float> b(solution().architecture, cfg, r2);
  auto pa = a.parameters();
  auto pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    ASSERT_EQ(pa[i].tensor.shape(), pb[i].tensor.shape());
    EXPECT_EQ(0, std::memcmp(pa[i].tensor.data().data(), pb[i].tensor.data().data(), pa[i].tensor.numel() * sizeof(float)));
  }
}

TEST(Models, ParameterCountMatchesSpec) {
  Rng rng(10);
  Generator<float> g(solution().architecture, ModelConfig{}, rng);
  std::size_t n = 0;
  for (auto& p : g.parameters()) n += p.tensor.numel();
  std::size_t running = 0;
  for (auto& b : g.buffers())
    if (b.name.find("running") != std::string::npos) running += b.values->size();
  EXPECT_EQ(n + running, total_parameters(g.spec()));
}

TEST(Models, EndToEndGradientSpotCheck) {
  // D(G(z)) in double at 1/8 width. Train-mode BN couples the batch, and a
  // fixed dropout seed per evaluation keeps the function deterministic.
  ModelConfig cfg;
  cfg.width_divisor = 8;
  Rng init(11);
  Generator<double> g(solution().architecture, cfg, init);
  Discriminator<double> d(solution().architecture, cfg, init);
  g.update_spectral_norms(3);
  d.update_spectral_norms(3);
  auto z = rng_normal<double>(init, {2, 100});
  z.set_requires_grad(true);

  auto loss = [&] {
    Rng drop(42);
    return sum(d.logits(g.forward(z, nn::Mode::Train), nn::Mode::Train, &drop));
  };
  auto gp = g.parameters();
  auto dp = d.parameters();
  std::vector<NamedTensor<double>> all = gp;
  all.insert(all.end(), dp.begin(), dp.end());
  all.push_back({"z", z});
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    backward(tape, loss());
  }
  std::size_t checked = 0;
  Rng pick(12);
  for (auto& p : all) {
    ASSERT_TRUE(p.tensor.has_grad()) << p.name;
    for (double v : p.tensor.grad()) ASSERT_TRUE(std::isfinite(v)) << p.name;
    // two spot entries per tensor
    for (int k = 0; k < 2; ++k) {
      const std::size_t j = pick.below(p.tensor.numel());
      auto vals = p.tensor.mutable_data();
      const double saved = vals[j];
      auto central = [&](double h) {
        TapeScope<double> off(nullptr);
        vals[j] = saved + h;
        const double up = loss().item();
        vals[j] = saved - h;
        const double down = loss().item();
        vals[j] = saved;
        return (up - down) / (2 * h);
      };
      // ReLU kinks make larger steps cross activation boundaries, so a tiny
      // plain central step is used; the floor absorbs its roundoff on
      // gradients that are exactly zero (biases feeding batch norm).
      const double numeric = central(3e-7);
      const double analytic = p.tensor.grad()[j];
      EXPECT_LT(check::relative_error(analytic, numeric, 1e-4), 1e-4)
          << p.name << "[" << j << "] analytic " << analytic << " numeric " << numeric;
      ++checked;
    }
  }
  EXPECT_GT(checked, 50u);
}
