#include "igan/data.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "igan/rng.hpp"

namespace igan::data {

std::uint8_t denormalize_pixel(float x) {
  const double v = std::round((static_cast<double>(x) + 1.0) * 127.5);
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

std::vector<float> resize_bilinear(const std::vector<float>& src, std::size_t sw, std::size_t sh,
                                   std::size_t channels, std::size_t dw, std::size_t dh) {
  if (sw == 0 || sh == 0 || dw == 0 || dh == 0 || channels == 0) throw DataError("resize: empty image");
  if (src.size() != sw * sh * channels) throw DataError("resize: source buffer does not match its size");
  std::vector<float> out(dw * dh * channels);
  // Source coordinate and blend weight for one destination index.
  auto axis = [](std::size_t d, std::size_t dst, std::size_t srcn) {
    double s = (static_cast<double>(d) + 0.5) * static_cast<double>(srcn) / static_cast<double>(dst) - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(srcn - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(s));
    const auto i1 = std::min(i0 + 1, srcn - 1);
    return std::tuple{i0, i1, s - static_cast<double>(i0)};
  };
  for (std::size_t y = 0; y < dh; ++y) {
    const auto [y0, y1, fy] = axis(y, dh, sh);
    for (std::size_t x = 0; x < dw; ++x) {
      const auto [x0, x1, fx] = axis(x, dw, sw);
      for (std::size_t c = 0; c < channels; ++c) {
        auto at = [&](std::size_t yy, std::size_t xx) { return static_cast<double>(src[(yy * sw + xx) * channels + c]); };
        const double top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
        const double bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
        out[(y * dw + x) * channels + c] = static_cast<float>(top * (1.0 - fy) + bottom * fy);
      }
    }
  }
  return out;
}

ImageRecord to_record(const Image8& image, std::size_t size) {
  std::vector<float> raw(image.rgb.begin(), image.rgb.end());
  ImageRecord rec;
  if (image.width != size || image.height != size) {
    raw = resize_bilinear(raw, image.width, image.height, 3, size, size);
  }
  rec.pixels.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) rec.pixels[i] = normalize_pixel(raw[i]);
  return rec;
}

Image8 to_image(std::span<const float> pixels, std::size_t width, std::size_t height) {
  if (pixels.size() != width * height * 3) throw DataError("to_image: pixel count does not match the size");
  Image8 img{width, height, std::vector<std::uint8_t>(pixels.size())};
  std::transform(pixels.begin(), pixels.end(), img.rgb.begin(), denormalize_pixel);
  return img;
}

Tensor<float> Dataset::as_tensor() const {
  if (records.empty()) throw DataError("dataset is empty");
  std::vector<float> out;
  out.reserve(records.size() * kImageValues);
  for (const auto& r : records) {
    if (r.pixels.size() != kImageValues) throw DataError("record " + r.source + " is not 64x64x3");
    out.insert(out.end(), r.pixels.begin(), r.pixels.end());
  }
  return Tensor<float>({records.size(), kImageSize, kImageSize, kChannels}, std::move(out));
}

Dataset load_images(const std::filesystem::path& dir, std::size_t resize_to, LoadReport* report) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png" || ext == ".ppm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());

  Dataset ds;
  LoadReport local;
  LoadReport& rep = report ? *report : local;
  for (const auto& f : files) {
    const auto rel = fs::relative(f, dir);
    int label = -1;
    if (std::distance(rel.begin(), rel.end()) > 1) {
      const std::string cls = rel.begin()->string();
      auto it = std::find(ds.class_names.begin(), ds.class_names.end(), cls);
      if (it == ds.class_names.end()) it = ds.class_names.insert(ds.class_names.end(), cls);
      label = static_cast<int>(it - ds.class_names.begin());
    }
    try {
      auto rec = to_record(read_image(f), resize_to);
      rec.label = label;
      rec.source = f.string();
      ds.records.push_back(std::move(rec));
      ++rep.loaded;
    } catch (const DataError& e) {
      ++rep.skipped;
      rep.warnings.emplace_back(e.what());
      spdlog::warn("skipping {}: {}", f.string(), e.what());
    }
  }
  if (ds.records.empty()) throw DataError("no decodable images under " + dir.string());
  return ds;
}

// ---------------------------------------------------------------------------
// synthetic corpus

const std::vector<std::string>& synth_class_names() {
  static const std::vector<std::string> names{"circle", "square", "triangle", "ring",
                                              "cross",  "diamond", "bar",    "frame"};
  return names;
}

namespace {

// Inside test in shape-local units, where the shape spans roughly [-1, 1].
bool inside(std::size_t cls, double u, double v) {
  const double au = std::abs(u), av = std::abs(v);
  switch (cls) {
    case 0: return u * u + v * v <= 1.0;
    case 1: return au <= 0.85 && av <= 0.85;
    case 2: return v <= 0.8 && v >= -1.0 && au <= (v + 1.0) / 1.8;
    case 3: {
      const double r2 = u * u + v * v;
      return r2 <= 1.0 && r2 >= 0.3;
    }
    case 4: return (au <= 0.3 && av <= 1.0) || (av <= 0.3 && au <= 1.0);
    case 5: return au + av <= 1.0;
    case 6: return au <= 1.2 && av <= 0.35;
    default: {
      const double m = std::max(au, av);
      return m <= 0.9 && m >= 0.55;
    }
  }
}

constexpr std::uint64_t kSynthStream = 0x73796e7468;  // "synth"
constexpr std::uint64_t kEpochStream = 0x65706f6368;  // "epoch"
constexpr int kSuper = 3;                             // samples per axis per pixel

}  // namespace

Dataset synth_corpus(std::uint64_t seed, std::size_t n, std::size_t k_classes) {
  if (k_classes == 0 || k_classes > kMaxSynthClasses) {
    throw std::invalid_argument(fmt::format("synth_corpus: k_classes must lie in [1, {}]", kMaxSynthClasses));
  }
  if (n < k_classes) throw std::invalid_argument("synth_corpus: need at least one image per class");
  Dataset ds;
  ds.class_names.assign(synth_class_names().begin(), synth_class_names().begin() + static_cast<std::ptrdiff_t>(k_classes));
  ds.shuffle_seed = seed;
  const Rng base(seed);
  const double size = static_cast<double>(kImageSize);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cls = i % k_classes;
    Rng r = base.fork(kSynthStream + i);
    const double cx = size * (0.3 + 0.4 * r.uniform_double());
    const double cy = size * (0.3 + 0.4 * r.uniform_double());
    const double scale = size * (0.16 + 0.14 * r.uniform_double());
    double fg[3], bg[3];
    for (auto& c : fg) c = 0.45 + 0.55 * r.uniform_double();
    for (auto& c : bg) c = 0.3 * r.uniform_double();

    ImageRecord rec;
    rec.label = static_cast<int>(cls);
    rec.source = fmt::format("synth:{}:{}:{}", seed, i, synth_class_names()[cls]);
    rec.pixels.resize(kImageValues);
    for (std::size_t y = 0; y < kImageSize; ++y) {
      for (std::size_t x = 0; x < kImageSize; ++x) {
        int hits = 0;
        for (int sy = 0; sy < kSuper; ++sy) {
          for (int sx = 0; sx < kSuper; ++sx) {
            const double px = static_cast<double>(x) + (sx + 0.5) / kSuper;
            const double py = static_cast<double>(y) + (sy + 0.5) / kSuper;
            hits += inside(cls, (px - cx) / scale, (py - cy) / scale) ? 1 : 0;
          }
        }
        const double cover = hits / static_cast<double>(kSuper * kSuper);
        for (std::size_t c = 0; c < 3; ++c) {
          const double value = bg[c] + cover * (fg[c] - bg[c]);  // in [0, 1]
          rec.pixels[(y * kImageSize + x) * 3 + c] = static_cast<float>(2.0 * value - 1.0);
        }
      }
    }
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& r = ds.records[i];
    const std::string cls =
        r.label >= 0 && static_cast<std::size_t>(r.label) < ds.class_names.size() ? ds.class_names[r.label] : "unlabeled";
    const auto dir = root / cls;
    fs::create_directories(dir);
    write_png(dir / fmt::format("{:06d}.png", i), to_image(r.pixels, kImageSize, kImageSize));
  }
}

// ---------------------------------------------------------------------------
// batching

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  if (n < 2) return perm;
  Rng r = Rng(seed).fork(kEpochStream + epoch);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[r.below(i + 1)]);
  return perm;
}

std::vector<std::size_t> batch_indices(std::size_t n, std::size_t batch, std::uint64_t seed, std::uint64_t step) {
  if (batch == 0) throw std::invalid_argument("batch size must be positive");
  if (n < batch) {
    throw std::invalid_argument(fmt::format("dataset has {} images, fewer than the batch size {}", n, batch));
  }
  const std::uint64_t per_epoch = n / batch;
  const auto perm = epoch_order(n, seed, step / per_epoch);
  const auto first = perm.begin() + static_cast<std::ptrdiff_t>((step % per_epoch) * batch);
  return {first, first + static_cast<std::ptrdiff_t>(batch)};
}

BatchIterator::BatchIterator(const Dataset& ds, std::size_t batch, std::uint64_t seed)
    : ds_(&ds), batch_(batch), seed_(seed) {
  if (batch == 0 || batch > ds.size()) {
    throw std::invalid_argument(fmt::format("batch size {} does not fit a dataset of {}", batch, ds.size()));
  }
}

std::vector<std::size_t> BatchIterator::peek_indices() const { return batch_indices(ds_->size(), batch_, seed_, step_); }

Tensor<float> BatchIterator::next() {
  const auto idx = peek_indices();
  ++step_;
  std::vector<float> out;
  out.reserve(idx.size() * kImageValues);
  for (auto i : idx) {
    const auto& px = ds_->records[i].pixels;
    if (px.size() != kImageValues) throw DataError("record " + ds_->records[i].source + " is not 64x64x3");
    out.insert(out.end(), px.begin(), px.end());
  }
#ifndef NDEBUG
  for (float v : out) assert(v >= -1.0f && v <= 1.0f);
#endif
  return Tensor<float>({idx.size(), kImageSize, kImageSize, kChannels}, std::move(out));
}

Image8 tile_grid(const Tensor<float>& images, std::size_t cols, std::size_t pad) {
  if (images.rank() != 4 || images.dim(3) != 3) throw ShapeError("tile_grid: expected (N, H, W, 3)");
  if (cols == 0) throw std::invalid_argument("tile_grid: cols must be positive");
  const std::size_t n = images.dim(0), h = images.dim(1), w = images.dim(2);
  const std::size_t ncols = std::min(cols, n);
  const std::size_t rows = (n + ncols - 1) / ncols;
  Image8 img;
  img.width = ncols * w + (ncols + 1) * pad;
  img.height = rows * h + (rows + 1) * pad;
  img.rgb.assign(img.width * img.height * 3, 128);
  auto src = images.data();
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t ox = pad + (k % ncols) * (w + pad);
    const std::size_t oy = pad + (k / ncols) * (h + pad);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t c = 0; c < 3; ++c) {
          img.rgb[((oy + y) * img.width + ox + x) * 3 + c] = denormalize_pixel(src[((k * h + y) * w + x) * 3 + c]);
        }
      }
    }
  }
  return img;
}

}  // namespace igan::data
