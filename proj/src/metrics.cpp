#include "igan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "igan/nn.hpp"
#include "igan/ops.hpp"
#include "igan/train.hpp"

namespace igan::metrics {

using data::kImageSize;
using data::kImageValues;

// ---------------------------------------------------------------------------
// embeddings

EmbeddingProvider pixel_avg_64() {
  EmbeddingProvider p;
  p.id = "pixel-avg-64";
  p.dim = 64;
  p.embed = [](std::span<const float> img, std::span<double> out) {
    constexpr std::size_t kBlock = kImageSize / 8;
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t y = 0; y < kImageSize; ++y) {
      for (std::size_t x = 0; x < kImageSize; ++x) {
        const float* px = img.data() + (y * kImageSize + x) * 3;
        const double luma = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
        out[(y / kBlock) * 8 + x / kBlock] += luma;
      }
    }
    for (auto& v : out) v /= static_cast<double>(kBlock * kBlock);
  };
  return p;
}

EmbeddingProvider provider_by_id(const std::string& id) {
  if (id == "pixel-avg-64") return pixel_avg_64();
  throw MetricError("unknown embedding provider '" + id + "'");
}

Eigen::MatrixXd embed_images(const EmbeddingProvider& provider, const Tensor<float>& images) {
  if (images.rank() != 4 || images.dim(1) != kImageSize || images.dim(2) != kImageSize || images.dim(3) != 3) {
    throw ShapeError("embed_images: expected (N, 64, 64, 3), got " + to_string(images.shape()));
  }
  const std::size_t n = images.dim(0);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(provider.dim));
  std::vector<double> row(provider.dim);
  for (std::size_t i = 0; i < n; ++i) {
    provider.embed(images.data().subspan(i * kImageValues, kImageValues), row);
    for (std::size_t j = 0; j < provider.dim; ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
  }
  return out;
}

GaussianStats gaussian_stats(const Eigen::MatrixXd& features, std::string provider) {
  if (features.rows() < 2) throw MetricError("gaussian_stats: need at least 2 samples");
  GaussianStats s;
  s.n = static_cast<std::size_t>(features.rows());
  s.provider = std::move(provider);
  s.mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - s.mean.transpose();
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(features.rows() - 1);
  s.cov = 0.5 * (cov + cov.transpose());
  return s;
}

void save_stats(const GaussianStats& stats, const std::filesystem::path& path) {
  Archive a;
  a.put_f64("stats/mean", {stats.mean.data(), static_cast<std::size_t>(stats.mean.size())});
  a.put_f64("stats/cov", {stats.cov.data(), static_cast<std::size_t>(stats.cov.size())});
  const std::uint64_t n = stats.n;
  a.put_u64("stats/n", {&n, 1});
  a.put_text("stats/provider", stats.provider);
  a.save(path);
}

GaussianStats load_stats(const std::filesystem::path& path) {
  const auto a = Archive::load(path);
  GaussianStats s;
  const auto mean = a.get_f64("stats/mean");
  const auto cov = a.get_f64("stats/cov");
  const auto e = static_cast<Eigen::Index>(mean.size());
  if (cov.size() != mean.size() * mean.size()) throw MetricError("stats file has inconsistent dimensions");
  s.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), e);
  s.cov = Eigen::Map<const Eigen::MatrixXd>(cov.data(), e, e);
  s.n = a.get_u64("stats/n").at(0);
  s.provider = a.get_text("stats/provider");
  return s;
}

namespace {

constexpr double kNegativeEigenTolerance = 1e-6;

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw MetricError(std::string("fid: eigendecomposition failed for ") + what);
  Eigen::VectorXd lam = es.eigenvalues();
  if (lam.size() > 0 && lam.minCoeff() < -kNegativeEigenTolerance) {
    throw MetricError(fmt::format("fid: {} has eigenvalue {:.3g} below -1e-6", what, lam.minCoeff()));
  }
  lam = lam.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double fid(const GaussianStats& real, const GaussianStats& gen) {
  if (real.mean.size() != gen.mean.size() || real.cov.rows() != gen.cov.rows()) {
    throw MetricError(fmt::format("fid: dimension mismatch ({} vs {})", real.mean.size(), gen.mean.size()));
  }
  if (!real.provider.empty() && !gen.provider.empty() && real.provider != gen.provider) {
    throw MetricError("fid: provider mismatch (" + real.provider + " vs " + gen.provider + ")");
  }
  const Eigen::MatrixXd root_r = psd_sqrt(real.cov, "real covariance");
  psd_sqrt(gen.cov, "generated covariance");  // validates the eigenvalue floor
  Eigen::MatrixXd inner = root_r * gen.cov * root_r;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner, Eigen::EigenvaluesOnly);
  const double tr_root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double value = (real.mean - gen.mean).squaredNorm() + real.cov.trace() + gen.cov.trace() - 2.0 * tr_root;
  if (value < -kNegativeEigenTolerance) throw MetricError(fmt::format("fid: negative distance {:.3g}", value));
  return std::max(value, 0.0);
}

// ---------------------------------------------------------------------------
// inception score

InceptionScore inception_score(const Eigen::MatrixXd& probs, std::size_t splits) {
  const auto n = static_cast<std::size_t>(probs.rows());
  if (splits == 0 || n < splits) throw MetricError(fmt::format("inception score: {} rows cannot form {} splits", n, splits));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    if (std::abs(probs.row(i).sum() - 1.0) > 1e-5 || probs.row(i).minCoeff() < 0.0) {
      throw MetricError(fmt::format("inception score: row {} is not a probability distribution", i));
    }
  }
  std::vector<double> scores;
  for (std::size_t s = 0; s < splits; ++s) {
    const auto lo = static_cast<Eigen::Index>(s * n / splits);
    const auto hi = static_cast<Eigen::Index>((s + 1) * n / splits);
    const auto part = probs.middleRows(lo, hi - lo);
    const Eigen::RowVectorXd marginal = part.colwise().mean();
    double kl_sum = 0.0;
    for (Eigen::Index i = 0; i < part.rows(); ++i) {
      for (Eigen::Index k = 0; k < part.cols(); ++k) {
        const double p = part(i, k);
        if (p > 0.0) kl_sum += p * (std::log(p) - std::log(marginal(k)));
      }
    }
    scores.push_back(std::exp(kl_sum / static_cast<double>(part.rows())));
  }
  InceptionScore out;
  for (double v : scores) out.mean += v / static_cast<double>(splits);
  for (double v : scores) out.stddev += (v - out.mean) * (v - out.mean) / static_cast<double>(splits);
  out.stddev = std::sqrt(out.stddev);
  return out;
}

// ---------------------------------------------------------------------------
// shape classifier

namespace {

constexpr std::size_t kC1 = 16, kC2 = 32, kC3 = 32;

Tensor<float> he_init(Rng& rng, Shape shape, std::size_t fan_in) {
  auto t = rng_normal<float>(rng, std::move(shape), 0.0f, static_cast<float>(std::sqrt(2.0 / double(fan_in))));
  t.set_requires_grad(true);
  return t;
}

Tensor<float> zeros_param(std::size_t n) {
  auto t = Tensor<float>::zeros({n});
  t.set_requires_grad(true);
  return t;
}

}  // namespace

ShapeClassifier::ShapeClassifier(std::size_t classes, std::uint64_t init_seed) : classes_(classes) {
  if (classes < 2) throw std::invalid_argument("classifier: need at least two classes");
  Rng rng(init_seed);
  w1_ = he_init(rng, {3, 3, 3, kC1}, 27);
  b1_ = zeros_param(kC1);
  w2_ = he_init(rng, {3, 3, kC1, kC2}, 9 * kC1);
  b2_ = zeros_param(kC2);
  w3_ = he_init(rng, {3, 3, kC2, kC3}, 9 * kC2);
  b3_ = zeros_param(kC3);
  wd_ = he_init(rng, {4 * 4 * kC3, classes}, 4 * 4 * kC3);
  bd_ = zeros_param(classes);
}

Tensor<float> ShapeClassifier::logits(const Tensor<float>& images) {
  auto h = nn::avg_pool2d(images, nn::PoolGeometry{4, 4, nn::Padding::Valid});  // 16x16
  h = relu(nn::conv2d(h, w1_, b1_, nn::ConvGeometry{3, kC1, 3, 1, 1}));
  h = relu(nn::conv2d(h, w2_, b2_, nn::ConvGeometry{kC1, kC2, 3, 2, 1}));  // 8x8
  h = relu(nn::conv2d(h, w3_, b3_, nn::ConvGeometry{kC2, kC3, 3, 2, 1}));  // 4x4
  return nn::dense(flatten(h), wd_, bd_);
}

std::vector<NamedTensor<float>> ShapeClassifier::parameters() {
  return {{"w1", w1_}, {"b1", b1_}, {"w2", w2_}, {"b2", b2_}, {"w3", w3_}, {"b3", b3_}, {"wd", wd_}, {"bd", bd_}};
}

Eigen::MatrixXd ShapeClassifier::predict(const Tensor<float>& images) {
  TapeScope<float> off(nullptr);
  const auto logp = log_softmax(logits(images));
  const auto n = static_cast<Eigen::Index>(images.dim(0));
  const auto k = static_cast<Eigen::Index>(classes_);
  Eigen::MatrixXd p(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) p(i, j) = std::exp(static_cast<double>(logp.data()[i * k + j]));
    p.row(i) /= p.row(i).sum();  // exact normalization in double
  }
  return p;
}

void ShapeClassifier::fit(const data::Dataset& ds, std::size_t steps, std::size_t batch, double lr, std::uint64_t seed) {
  for (const auto& r : ds.records) {
    if (r.label < 0 || static_cast<std::size_t>(r.label) >= classes_) {
      throw std::invalid_argument("classifier: record " + r.source + " has no usable label");
    }
  }
  auto params = parameters();
  AdamState adam;
  const AdamConfig cfg{lr, 0.9, 0.999, 1e-8};
  for (std::size_t step = 0; step < steps; ++step) {
    const auto idx = data::batch_indices(ds.size(), batch, seed, step);
    std::vector<float> px, onehot(batch * classes_, 0.0f);
    px.reserve(batch * kImageValues);
    for (std::size_t i = 0; i < batch; ++i) {
      const auto& r = ds.records[idx[i]];
      px.insert(px.end(), r.pixels.begin(), r.pixels.end());
      onehot[i * classes_ + static_cast<std::size_t>(r.label)] = 1.0f;
    }
    const Tensor<float> x({batch, kImageSize, kImageSize, 3}, std::move(px));
    const Tensor<float> y({batch, classes_}, std::move(onehot));
    for (auto& p : params) p.tensor.zero_grad();
    Tape<float> tape;
    TapeScope<float> scope(tape);
    auto loss = scale(sum(mul(log_softmax(logits(x)), y)), -1.0f / static_cast<float>(batch));
    backward(tape, loss);
    adam_step(params, adam, cfg);
  }
  for (auto& p : params) p.tensor.zero_grad();
}

double ShapeClassifier::accuracy(const data::Dataset& ds) {
  const auto probs = predict(ds.as_tensor());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    Eigen::Index best = 0;
    probs.row(static_cast<Eigen::Index>(i)).maxCoeff(&best);
    hits += best == ds.records[i].label ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

Archive ShapeClassifier::to_archive() const {
  Archive a;
  auto self = const_cast<ShapeClassifier*>(this)->parameters();
  for (const auto& p : self) a.put_f32("classifier/" + p.name, p.tensor.shape(), p.tensor.data());
  const std::uint64_t k = classes_;
  a.put_u64("classifier/classes", {&k, 1});
  a.put_text("classifier/id", kId);
  return a;
}

ShapeClassifier ShapeClassifier::from_archive(const Archive& a) {
  if (a.get_text("classifier/id") != kId) throw CheckpointError("classifier: unexpected model id");
  ShapeClassifier c(a.get_u64("classifier/classes").at(0));
  for (auto& p : c.parameters()) {
    const auto name = "classifier/" + p.name;
    if (a.entry(name).shape != p.tensor.shape()) throw CheckpointError("classifier: " + p.name + " has the wrong shape");
    const auto v = a.get_f32(name);
    std::copy(v.begin(), v.end(), p.tensor.mutable_data().begin());
  }
  return c;
}

ShapeClassifier train_reference_classifier() {
  const auto corpus = data::synth_corpus(20240, 1600, data::kMaxSynthClasses);
  ShapeClassifier c(data::kMaxSynthClasses, 1);
  c.fit(corpus, 800, 32, 2e-3, 11);
  return c;
}

// ---------------------------------------------------------------------------
// PSNR / SSIM

double psnr(std::span<const float> a, std::span<const float> b, double max_value) {
  if (a.size() != b.size()) throw MetricError(fmt::format("psnr: size mismatch ({} vs {})", a.size(), b.size()));
  if (a.empty()) throw MetricError("psnr: empty images");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    se += d * d;
  }
  if (se == 0.0) return kInf;
  return 10.0 * std::log10(max_value * max_value / (se / static_cast<double>(a.size())));
}

double ssim(std::span<const float> a, std::span<const float> b, std::size_t width, std::size_t height,
            std::size_t channels, const SsimOptions& opts) {
  if (a.size() != b.size() || a.size() != width * height * channels) throw MetricError("ssim: shape mismatch");
  if (opts.window == 0 || opts.window > width || opts.window > height) {
    throw MetricError(fmt::format("ssim: window {} does not fit a {}x{} image", opts.window, width, height));
  }
  const std::size_t k = opts.window;
  std::vector<double> g(k);
  const double mid = (static_cast<double>(k) - 1.0) / 2.0;
  for (std::size_t i = 0; i < k; ++i) g[i] = std::exp(-(i - mid) * (i - mid) / (2.0 * opts.sigma * opts.sigma));
  const double gs = std::accumulate(g.begin(), g.end(), 0.0);
  for (auto& v : g) v /= gs;

  const double c1 = (0.01 * opts.dynamic_range) * (0.01 * opts.dynamic_range);
  const double c2 = (0.03 * opts.dynamic_range) * (0.03 * opts.dynamic_range);
  const std::size_t ow = width - k + 1, oh = height - k + 1;

  // Separable 'valid' Gaussian filter of one plane.
  auto filter = [&](const std::vector<double>& plane) {
    std::vector<double> rows(height * ow), out(oh * ow);
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double s = 0.0;
        for (std::size_t t = 0; t < k; ++t) s += g[t] * plane[y * width + x + t];
        rows[y * ow + x] = s;
      }
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double s = 0.0;
        for (std::size_t t = 0; t < k; ++t) s += g[t] * rows[(y + t) * ow + x];
        out[y * ow + x] = s;
      }
    return out;
  };

  double total = 0.0;
  std::vector<double> pa(width * height), pb(width * height), paa(pa.size()), pbb(pa.size()), pab(pa.size());
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < width * height; ++i) {
      pa[i] = a[i * channels + c];
      pb[i] = b[i * channels + c];
      paa[i] = pa[i] * pa[i];
      pbb[i] = pb[i] * pb[i];
      pab[i] = pa[i] * pb[i];
    }
    const auto mu_a = filter(pa), mu_b = filter(pb), e_aa = filter(paa), e_bb = filter(pbb), e_ab = filter(pab);
    double sum = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double va = e_aa[i] - mu_a[i] * mu_a[i];
      const double vb = e_bb[i] - mu_b[i] * mu_b[i];
      const double cov = e_ab[i] - mu_a[i] * mu_b[i];
      sum += ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
    }
    total += sum / static_cast<double>(mu_a.size());
  }
  return std::clamp(total / static_cast<double>(channels), -1.0, 1.0);
}

namespace {

void require_pairs(const Tensor<float>& a, const Tensor<float>& b, const char* what) {
  if (a.shape() != b.shape() || a.rank() != 4) {
    throw MetricError(fmt::format("{}: paired sets must have equal (N, H, W, C) shapes, got {} and {}", what,
                                  to_string(a.shape()), to_string(b.shape())));
  }
}

}  // namespace

double mean_psnr(const Tensor<float>& a, const Tensor<float>& b) {
  require_pairs(a, b, "psnr");
  const std::size_t n = a.dim(0), per = a.numel() / n;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += psnr(a.data().subspan(i * per, per), b.data().subspan(i * per, per), 2.0);
  return sum / static_cast<double>(n);
}

double mean_ssim(const Tensor<float>& a, const Tensor<float>& b, const SsimOptions& opts) {
  require_pairs(a, b, "ssim");
  const std::size_t n = a.dim(0), h = a.dim(1), w = a.dim(2), c = a.dim(3), per = h * w * c;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += ssim(a.data().subspan(i * per, per), b.data().subspan(i * per, per), w, h, c, opts);
  return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// report

std::string format_value(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{:.6f}", v);
}

std::string report_csv(const MetricReport& r) {
  std::string out = "metric,value,provider,n_real,n_gen\n";
  auto row = [&](const std::string& metric, double v, const std::string& provider) {
    out += fmt::format("{},{},{},{},{}\n", metric, format_value(v), provider, r.n_real, r.n_gen);
  };
  row("fid", r.fid, r.provider);
  row("is_mean", r.is.mean, r.classifier);
  if (r.is_splits > 1) row("is_std", r.is.stddev, r.classifier);
  if (r.paired) {
    row("psnr", r.psnr, "paired");
    row("ssim", r.ssim, "paired");
  }
  return out;
}

std::string report_text(const MetricReport& r) {
  std::string out;
  auto line = [&](const std::string& metric, double v, const std::string& provider) {
    out += fmt::format("{:<8} {:>14}  {:<14} n_real={} n_gen={}\n", metric, format_value(v), provider, r.n_real, r.n_gen);
  };
  line("FID", r.fid, r.provider);
  line("IS", r.is.mean, r.classifier);
  if (r.is_splits > 1) line("IS std", r.is.stddev, fmt::format("{} splits", r.is_splits));
  if (r.paired) {
    line("PSNR", r.psnr, "paired, dB");
    line("SSIM", r.ssim, "paired");
  }
  return out;
}

}  // namespace igan::metrics
