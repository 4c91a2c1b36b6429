#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "igan/architecture.hpp"
#include "igan/nn.hpp"
#include "igan/rng.hpp"
#include "igan/tensor.hpp"

// Runtime generator and discriminator built from an Architecture. Every
// trainable tensor and every piece of persistent layer state carries a
// stable dotted name used by the optimizer and checkpoints.

namespace igan {

struct ModelConfig {
  std::size_t width_divisor = 1;
  double dropout_rate = 0.3;
  double leaky_slope = nn::kLeakySlope;
  double init_std = 0.02;
  bool discriminator_spectral_norm = true;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

/// Non-trainable state: BN running statistics and SN power-iteration vectors.
template <typename T>
struct NamedBuffer {
  std::string name;
  std::vector<T>* values;
};

template <typename T>
class ConvLayer {
 public:
  ConvLayer() = default;
  ConvLayer(std::string name, const nn::ConvGeometry& geom, bool spectral_norm, double init_std, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x);
  /// Power-iteration refresh of the SN estimate; no-op without SN.
  void update_spectral_norm(int iterations);
  /// The weight actually applied (normalized when SN is on).
  Tensor<T> effective_weight();

  const nn::ConvGeometry& geometry() const { return geom_; }
  bool spectral_norm() const { return sn_; }
  void collect(std::vector<NamedTensor<T>>& params, std::vector<NamedBuffer<T>>& buffers);

 private:
  std::string name_;
  nn::ConvGeometry geom_;
  bool sn_ = false;
  Tensor<T> weight_;
  Tensor<T> bias_;
  nn::SpectralNormState<T> sn_state_;
};

template <typename T>
class BatchNormLayer {
 public:
  BatchNormLayer() = default;
  BatchNormLayer(std::string name, std::size_t channels);

  Tensor<T> forward(const Tensor<T>& x, nn::Mode mode) { return nn::batch_norm(x, gamma_, beta_, state_, mode); }
  void collect(std::vector<NamedTensor<T>>& params, std::vector<NamedBuffer<T>>& buffers);

 private:
  std::string name_;
  Tensor<T> gamma_;
  Tensor<T> beta_;
  nn::BatchNormState<T> state_;
};

/// Four parallel branches concatenated in the fixed order
/// 1x1 | 1x1 -> 3x3 | 1x1 -> 5x5 | avgpool -> 1x1.
template <typename T>
class InceptionLayer {
 public:
  InceptionLayer() = default;
  InceptionLayer(std::string name, const InceptionAllocation& alloc, double init_std, Rng& rng);

  const InceptionAllocation& allocation() const { return alloc_; }
  void collect(std::vector<NamedTensor<T>>& params, std::vector<NamedBuffer<T>>& buffers);

  template <typename U>
  friend Tensor<U> inception_forward(const Tensor<U>& x, InceptionLayer<U>& layer);

 private:
  std::string name_;
  InceptionAllocation alloc_;
  ConvLayer<T> b1_;
  std::optional<ConvLayer<T>> b2_reduce_;
  ConvLayer<T> b2_;
  std::optional<ConvLayer<T>> b3_reduce_;
  ConvLayer<T> b3_;
  ConvLayer<T> b4_;
};

template <typename T>
Tensor<T> inception_forward(const Tensor<T>& x, InceptionLayer<T>& layer);

/// Per-sample output shape of every table row, in order.
struct ShapeTrace {
  std::vector<std::string> names;
  std::vector<Shape> shapes;
  void add(std::string name, const Shape& batched);
};

template <typename T>
class Generator {
 public:
  Generator(const Architecture& arch, const ModelConfig& cfg, Rng& init_rng);

  /// z (N, 100) -> images (N, 64, 64, 3) in (-1, 1).
  Tensor<T> forward(const Tensor<T>& z, nn::Mode mode, ShapeTrace* trace = nullptr);
  void update_spectral_norms(int iterations);
  std::vector<NamedTensor<T>> parameters();
  std::vector<NamedBuffer<T>> buffers();
  const NetworkSpec& spec() const { return spec_; }

 private:
  NetworkSpec spec_;
  std::size_t c0_ = 0;
  Tensor<T> dense_w_, dense_b_;
  ConvLayer<T> conv1_;
  BatchNormLayer<T> bn1_;
  InceptionLayer<T> inc1_, inc2_;
  BatchNormLayer<T> bn_inc1_, bn_inc2_;
  ConvLayer<T> conv2_;
  BatchNormLayer<T> bn2_;
  ConvLayer<T> conv_out_;
};

template <typename T>
class Discriminator {
 public:
  Discriminator(const Architecture& arch, const ModelConfig& cfg, Rng& init_rng);

  /// images (N, 64, 64, 3) -> pre-sigmoid scores (N, 1). `dropout_rng` is
  /// required in train mode when the dropout rate is positive.
  Tensor<T> logits(const Tensor<T>& x, nn::Mode mode, Rng* dropout_rng, ShapeTrace* trace = nullptr);
  /// sigmoid(logits): probabilities in (0, 1).
  Tensor<T> forward(const Tensor<T>& x, nn::Mode mode, Rng* dropout_rng, ShapeTrace* trace = nullptr);
  void update_spectral_norms(int iterations);
  std::vector<NamedTensor<T>> parameters();
  std::vector<NamedBuffer<T>> buffers();
  const NetworkSpec& spec() const { return spec_; }

 private:
  Tensor<T> drop(const Tensor<T>& x, nn::Mode mode, Rng* rng);

  NetworkSpec spec_;
  ModelConfig cfg_;
  ConvLayer<T> conv1_;
  InceptionLayer<T> inc1_, inc2_;
  BatchNormLayer<T> bn_inc1_, bn_inc2_;
  ConvLayer<T> conv_pw_;
  ConvLayer<T> conv2_;
  BatchNormLayer<T> bn2_;
  Tensor<T> dense_w_, dense_b_;
};

/// Toggles requires_grad on every tensor in `params`.
template <typename T>
void set_trainable(std::vector<NamedTensor<T>>& params, bool trainable) {
  for (auto& p : params) p.tensor.set_requires_grad(trainable);
}

}  // namespace igan
