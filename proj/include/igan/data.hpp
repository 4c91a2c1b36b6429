#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "igan/tensor.hpp"

// Image ingestion, normalization, batching and the synthetic shape corpus.

namespace igan::data {

inline constexpr std::size_t kImageSize = 64;
inline constexpr std::size_t kChannels = 3;
inline constexpr std::size_t kImageValues = kImageSize * kImageSize * kChannels;
/// Number of distinct shape classes the synthetic corpus can draw.
inline constexpr std::size_t kMaxSynthClasses = 8;

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit interleaved RGB raster.
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;  // height * width * 3
};

Image8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& image);
/// Binary PPM (P6, maxval 255).
Image8 read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image8& image);
/// Dispatches on the extension (.png, .ppm); throws DataError otherwise.
Image8 read_image(const std::filesystem::path& path);

/// x / 127.5 - 1, so 0 -> -1 and 255 -> +1.
inline float normalize_pixel(double v) { return static_cast<float>(v / 127.5 - 1.0); }
/// Inverse of normalize_pixel, rounded to nearest and clamped to [0, 255].
std::uint8_t denormalize_pixel(float x);

/// Bilinear resampling with half-pixel centres: destination pixel (x, y) reads
/// the source at ((x + 0.5) * sw / dw - 0.5, (y + 0.5) * sh / dh - 0.5),
/// clamped to the image. Layout is interleaved HWC.
std::vector<float> resize_bilinear(const std::vector<float>& src, std::size_t sw, std::size_t sh,
                                   std::size_t channels, std::size_t dw, std::size_t dh);

struct ImageRecord {
  std::vector<float> pixels;  // 64 x 64 x 3 in [-1, 1]
  int label = -1;             // -1 when unlabeled
  std::string source;         // file path or synthetic descriptor
};

struct Dataset {
  std::vector<ImageRecord> records;
  std::vector<std::string> class_names;  // index = label
  std::uint64_t shuffle_seed = 0;
  std::uint64_t epoch = 0;

  std::size_t size() const { return records.size(); }
  /// All records stacked into (N, 64, 64, 3).
  Tensor<float> as_tensor() const;
};

/// Decoded image -> record: bilinear resize to size x size, then normalize.
ImageRecord to_record(const Image8& image, std::size_t size = kImageSize);
Image8 to_image(std::span<const float> pixels, std::size_t width, std::size_t height);

struct LoadReport {
  std::size_t loaded = 0;
  std::size_t skipped = 0;
  std::vector<std::string> warnings;
};

/// Recursively reads every .png/.ppm under `dir` in sorted path order. The
/// first directory level below `dir` names the class; files directly in
/// `dir` are unlabeled. Undecodable files are skipped and counted; an empty
/// result throws DataError.
Dataset load_images(const std::filesystem::path& dir, std::size_t resize_to = kImageSize,
                    LoadReport* report = nullptr);

/// Deterministic geometric shapes, one class per shape type; image i has
/// class i % k_classes, so classes are balanced whenever k divides n.
Dataset synth_corpus(std::uint64_t seed, std::size_t n, std::size_t k_classes);
/// Class names of the shape types, in label order.
const std::vector<std::string>& synth_class_names();

/// Writes `root/<class>/<index>.png` for every record.
void write_dataset(const Dataset& ds, const std::filesystem::path& root);

/// Seeded permutation of [0, n) for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch);
/// Record indices for global batch number `step`; epochs hold floor(n / batch)
/// batches and the remainder is dropped.
std::vector<std::size_t> batch_indices(std::size_t n, std::size_t batch, std::uint64_t seed, std::uint64_t step);

/// Endless, seed-deterministic sequence of (batch, 64, 64, 3) tensors.
class BatchIterator {
 public:
  BatchIterator(const Dataset& ds, std::size_t batch, std::uint64_t seed);
  std::size_t batches_per_epoch() const { return ds_->size() / batch_; }
  std::uint64_t epoch() const { return step_ / batches_per_epoch(); }
  Tensor<float> next();
  /// Indices the next call to next() will use.
  std::vector<std::size_t> peek_indices() const;

 private:
  const Dataset* ds_;
  std::size_t batch_;
  std::uint64_t seed_;
  std::uint64_t step_ = 0;
};

/// Tiles (N, H, W, 3) images in [-1, 1] into one raster, `cols` per row, with
/// a `pad`-pixel mid-grey gutter.
Image8 tile_grid(const Tensor<float>& images, std::size_t cols, std::size_t pad = 2);

}  // namespace igan::data
