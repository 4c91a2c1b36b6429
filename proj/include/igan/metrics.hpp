#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "igan/checkpoint.hpp"
#include "igan/data.hpp"
#include "igan/model.hpp"
#include "igan/rng.hpp"
#include "igan/tensor.hpp"

// FID, Inception Score, PSNR and SSIM with pluggable embedding and classifier
// providers. Nothing here depends on a pretrained Inception network.

namespace igan::metrics {

class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// embeddings and Gaussian statistics

/// Deterministic image -> feature map. `embed` receives one 64x64x3 image in
/// [-1, 1] (HWC) and writes `dim` features.
struct EmbeddingProvider {
  std::string id;
  std::size_t dim = 0;
  std::function<void(std::span<const float> image, std::span<double> out)> embed;
};

/// BT.601 luma, then 8x8 block means over the 64x64 image: 64 features.
EmbeddingProvider pixel_avg_64();
/// Looks a provider up by id; throws MetricError for unknown ids.
EmbeddingProvider provider_by_id(const std::string& id);

/// Row i holds the features of image i of a (N, 64, 64, 3) batch.
Eigen::MatrixXd embed_images(const EmbeddingProvider& provider, const Tensor<float>& images);

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // unbiased, symmetrized
  std::size_t n = 0;
  std::string provider;
};

/// Sample mean and unbiased covariance of the rows of `features`; N >= 2.
GaussianStats gaussian_stats(const Eigen::MatrixXd& features, std::string provider = {});

void save_stats(const GaussianStats& stats, const std::filesystem::path& path);
GaussianStats load_stats(const std::filesystem::path& path);

/// ||mu_r - mu_g||^2 + Tr(S_r + S_g - 2 (S_r S_g)^(1/2)), with the root taken
/// through the symmetric form S_r^(1/2) S_g S_r^(1/2). Throws on dimension or
/// provider mismatch and on covariance eigenvalues below -1e-6.
double fid(const GaussianStats& real, const GaussianStats& gen);

// ---------------------------------------------------------------------------
// inception score

struct InceptionScore {
  double mean = 0.0;
  double stddev = 0.0;  // population std over splits; 0 for one split
};

/// exp(mean_x KL(p(y|x) || p(y))) per split. Rows must sum to 1 within 1e-5.
InceptionScore inception_score(const Eigen::MatrixXd& probs, std::size_t splits = 1);

/// Small convnet over 16x16 downsampled images that labels the synthetic
/// shape classes. Its softmax output is the conditional label distribution
/// used by the inception score.
class ShapeClassifier {
 public:
  static constexpr const char* kId = "shape-cnn-v1";

  explicit ShapeClassifier(std::size_t classes, std::uint64_t init_seed = 1);

  std::size_t classes() const { return classes_; }
  /// Softmax probabilities, one row per image.
  Eigen::MatrixXd predict(const Tensor<float>& images);
  /// Adam on cross-entropy over shuffled batches of `ds` (labels required).
  void fit(const data::Dataset& ds, std::size_t steps, std::size_t batch, double lr, std::uint64_t seed);
  double accuracy(const data::Dataset& ds);

  Archive to_archive() const;
  static ShapeClassifier from_archive(const Archive& archive);

 private:
  Tensor<float> logits(const Tensor<float>& images);
  std::vector<NamedTensor<float>> parameters();

  std::size_t classes_;
  Tensor<float> w1_, b1_, w2_, b2_, w3_, b3_, wd_, bd_;
};

/// Deterministic recipe for the shipped classifier checkpoint: 8 shape
/// classes, fixed corpus and training seeds.
ShapeClassifier train_reference_classifier();

// ---------------------------------------------------------------------------
// paired image metrics

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// 10 log10(max^2 / MSE); +inf for identical inputs.
double psnr(std::span<const float> a, std::span<const float> b, double max_value);

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double dynamic_range = 2.0;  // images in [-1, 1]
};

/// Mean local SSIM over all window positions fully inside the image,
/// averaged over channels. Images are HWC with the given extents.
double ssim(std::span<const float> a, std::span<const float> b, std::size_t width, std::size_t height,
            std::size_t channels, const SsimOptions& opts = {});

/// Means over aligned pairs of two (N, H, W, C) sets with N equal. PSNR is
/// computed on the [-1, 1] scale (peak-to-peak 2).
double mean_psnr(const Tensor<float>& a, const Tensor<float>& b);
double mean_ssim(const Tensor<float>& a, const Tensor<float>& b, const SsimOptions& opts = {});

// ---------------------------------------------------------------------------
// report

struct MetricReport {
  double fid = 0.0;
  InceptionScore is;
  std::size_t is_splits = 1;
  double psnr = 0.0;
  double ssim = 0.0;
  bool paired = false;  // psnr/ssim present
  std::string provider;
  std::string classifier;
  std::size_t n_real = 0;
  std::size_t n_gen = 0;
  // inputs the values were computed from
  GaussianStats real_stats;
  GaussianStats gen_stats;
  Eigen::MatrixXd class_probs;
};

/// Renders a double, with the infinity sentinel spelled "inf".
std::string format_value(double v);
/// `metric,value,provider,n_real,n_gen`, one row per metric.
std::string report_csv(const MetricReport& r);
std::string report_text(const MetricReport& r);

}  // namespace igan::metrics
