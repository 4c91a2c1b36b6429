#include "igan/model.hpp"

#include <stdexcept>

#include "igan/ops.hpp"

namespace igan {

namespace {

template <typename T>
Tensor<T> init_weight(Rng& rng, Shape shape, double std) {
  return rng_normal<T>(rng, std::move(shape), T(0), static_cast<T>(std));
}

Architecture effective_architecture(const Architecture& arch, std::size_t divisor) {
  if (arch.width_divisor != 1) throw std::invalid_argument("model: expected a full-width architecture");
  return divisor == 1 ? arch : arch.scaled(divisor);
}

}  // namespace

void ShapeTrace::add(std::string name, const Shape& batched) {
  names.push_back(std::move(name));
  shapes.emplace_back(batched.begin() + 1, batched.end());
}

// ---------------------------------------------------------------------------

template <typename T>
ConvLayer<T>::ConvLayer(std::string name, const nn::ConvGeometry& geom, bool spectral_norm, double init_std, Rng& rng)
    : name_(std::move(name)), geom_(geom), sn_(spectral_norm) {
  geom_.validate();
  weight_ = init_weight<T>(rng, geom_.weight_shape(), init_std);
  weight_.set_requires_grad(true);
  bias_ = Tensor<T>::zeros({geom_.out_channels});
  bias_.set_requires_grad(true);
  if (sn_) {
    sn_state_ = nn::make_spectral_norm_state<T>(geom_.out_channels, rng);
    nn::power_iterate(weight_, sn_state_, 0);  // fills v so the state is complete from the start
  }
}

template <typename T>
void ConvLayer<T>::update_spectral_norm(int iterations) {
  if (sn_) nn::power_iterate(weight_, sn_state_, iterations);
}

template <typename T>
Tensor<T> ConvLayer<T>::effective_weight() {
  return sn_ ? nn::spectral_normalize(weight_, sn_state_, 0) : weight_;
}

template <typename T>
Tensor<T> ConvLayer<T>::forward(const Tensor<T>& x) {
  return nn::conv2d(x, effective_weight(), bias_, geom_);
}

template <typename T>
void ConvLayer<T>::collect(std::vector<NamedTensor<T>>& params, std::vector<NamedBuffer<T>>& buffers) {
  params.push_back({name_ + ".weight", weight_});
  params.push_back({name_ + ".bias", bias_});
  if (sn_) {
    buffers.push_back({name_ + ".sn_u", &sn_state_.u});
    buffers.push_back({name_ + ".sn_v", &sn_state_.v});
  }
}

// ---------------------------------------------------------------------------

template <typename T>
BatchNormLayer<T>::BatchNormLayer(std::string name, std::size_t channels)
    : name_(std::move(name)), gamma_(Tensor<T>::full({channels}, T(1))), beta_(Tensor<T>::zeros({channels})),
      state_(channels) {
  gamma_.set_requires_grad(true);
  beta_.set_requires_grad(true);
}

template <typename T>
void BatchNormLayer<T>::collect(std::vector<NamedTensor<T>>& params, std::vector<NamedBuffer<T>>& buffers) {
  params.push_back({name_ + ".gamma", gamma_});
  params.push_back({name_ + ".beta", beta_});
  buffers.push_back({name_ + ".running_mean", &state_.running_mean});
  buffers.push_back({name_ + ".running_var", &state_.running_var});
}

// ---------------------------------------------------------------------------

template <typename T>
InceptionLayer<T>::InceptionLayer(std::string name, const InceptionAllocation& a, double init_std, Rng& rng)
    : name_(std::move(name)), alloc_(a) {
  const std::size_t in = a.in_channels;
  const std::size_t s = a.stride;
  b1_ = ConvLayer<T>(name_ + ".b1", {in, a.branch1_1x1_out, 1, s, a.dilation_1x1}, false, init_std, rng);
  std::size_t in3 = in;
  if (a.branch2_bottleneck) {
    b2_reduce_.emplace(name_ + ".b2_reduce", nn::ConvGeometry{in, a.branch2_bottleneck, 1, 1, 1}, false, init_std, rng);
    in3 = a.branch2_bottleneck;
  }
  b2_ = ConvLayer<T>(name_ + ".b2", {in3, a.branch2_3x3_out, 3, s, a.dilation_3x3}, false, init_std, rng);
  std::size_t in5 = in;
  if (a.branch3_bottleneck) {
    b3_reduce_.emplace(name_ + ".b3_reduce", nn::ConvGeometry{in, a.branch3_bottleneck, 1, 1, 1}, false, init_std, rng);
    in5 = a.branch3_bottleneck;
  }
  b3_ = ConvLayer<T>(name_ + ".b3", {in5, a.branch3_5x5_out, 5, s, a.dilation_5x5}, false, init_std, rng);
  b4_ = ConvLayer<T>(name_ + ".b4", {in, a.branch4_pool_1x1_out, 1, 1, 1}, false, init_std, rng);
}

template <typename T>
void InceptionLayer<T>::collect(std::vector<NamedTensor<T>>& params, std::vector<NamedBuffer<T>>& buffers) {
  b1_.collect(params, buffers);
  if (b2_reduce_) b2_reduce_->collect(params, buffers);
  b2_.collect(params, buffers);
  if (b3_reduce_) b3_reduce_->collect(params, buffers);
  b3_.collect(params, buffers);
  b4_.collect(params, buffers);
}

template <typename T>
Tensor<T> inception_forward(const Tensor<T>& x, InceptionLayer<T>& layer) {
  const auto& a = layer.alloc_;
  const Tensor<T> p1 = layer.b1_.forward(x);
  const Tensor<T> p2 = layer.b2_.forward(layer.b2_reduce_ ? layer.b2_reduce_->forward(x) : x);
  const Tensor<T> p3 = layer.b3_.forward(layer.b3_reduce_ ? layer.b3_reduce_->forward(x) : x);
  const Tensor<T> pooled = nn::avg_pool2d(x, nn::PoolGeometry{a.pool_window, a.stride, nn::Padding::Same});
  const Tensor<T> p4 = layer.b4_.forward(pooled);
  // concat_channels rejects any spatial disagreement between branches
  return concat_channels(std::vector<Tensor<T>>{p1, p2, p3, p4});
}

// ---------------------------------------------------------------------------

template <typename T>
Generator<T>::Generator(const Architecture& full, const ModelConfig& cfg, Rng& rng) {
  const Architecture arch = effective_architecture(full, cfg.width_divisor);
  spec_ = build_generator(arch);
  const auto& L = spec_.layers;
  auto find = [&](const std::string& name) -> const LayerSpec& {
    for (const auto& l : L)
      if (l.name == name) return l;
    throw std::logic_error("generator spec lacks " + name);
  };
  const auto& dense = find("G.dense");
  c0_ = dense.out_features / 16;
  dense_w_ = init_weight<T>(rng, {dense.in_features, dense.out_features}, cfg.init_std);
  dense_w_.set_requires_grad(true);
  dense_b_ = Tensor<T>::zeros({dense.out_features});
  dense_b_.set_requires_grad(true);

  auto conv_of = [&](const LayerSpec& l) {
    return ConvLayer<T>(l.name, {l.in_features, l.out_features, l.kernel, l.stride, l.dilation}, l.spectral_norm,
                        cfg.init_std, rng);
  };
  const auto& c1 = find("G.conv1");
  conv1_ = conv_of(c1);
  bn1_ = BatchNormLayer<T>("G.conv1.bn", c1.out_features);
  inc1_ = InceptionLayer<T>("G.inception1", arch.generator, cfg.init_std, rng);
  bn_inc1_ = BatchNormLayer<T>("G.inception1.bn", arch.generator.out_channels());
  inc2_ = InceptionLayer<T>("G.inception2", arch.generator, cfg.init_std, rng);
  bn_inc2_ = BatchNormLayer<T>("G.inception2.bn", arch.generator.out_channels());
  const auto& c2 = find("G.conv2");
  conv2_ = conv_of(c2);
  bn2_ = BatchNormLayer<T>("G.conv2.bn", c2.out_features);
  conv_out_ = conv_of(find("G.conv_out"));
}

template <typename T>
Tensor<T> Generator<T>::forward(const Tensor<T>& z, nn::Mode mode, ShapeTrace* trace) {
  if (z.rank() != 2 || z.dim(1) != table::kNoise) {
    throw ShapeError("generator: expected noise (N, " + std::to_string(table::kNoise) + "), got " +
                     to_string(z.shape()));
  }
  const std::size_t n = z.dim(0);
  auto note = [&](const char* name, const Tensor<T>& t) {
    if (trace) trace->add(name, t.shape());
  };
  note("G.input", z);
  Tensor<T> h = nn::dense(z, dense_w_, dense_b_);
  note("G.dense", h);
  h = reshape(h, {n, 4, 4, c0_});
  note("G.reshape", h);
  h = nn::upsample_nearest2x(h);
  note("G.upsample1", h);
  h = relu(bn1_.forward(conv1_.forward(h), mode));
  note("G.conv1", h);
  h = nn::upsample_nearest2x(h);
  note("G.upsample2", h);
  h = relu(bn_inc1_.forward(inception_forward(h, inc1_), mode));
  note("G.inception1", h);
  h = nn::upsample_nearest2x(h);
  note("G.upsample3", h);
  h = relu(bn_inc2_.forward(inception_forward(h, inc2_), mode));
  note("G.inception2", h);
  h = nn::upsample_nearest2x(h);
  note("G.upsample4", h);
  h = relu(bn2_.forward(conv2_.forward(h), mode));
  note("G.conv2", h);
  h = igan::tanh(conv_out_.forward(h));
  note("G.conv_out", h);
  return h;
}

template <typename T>
void Generator<T>::update_spectral_norms(int iterations) {
  conv1_.update_spectral_norm(iterations);
  conv2_.update_spectral_norm(iterations);
}

template <typename T>
std::vector<NamedTensor<T>> Generator<T>::parameters() {
  std::vector<NamedTensor<T>> p;
  std::vector<NamedBuffer<T>> b;
  p.push_back({"G.dense.weight", dense_w_});
  p.push_back({"G.dense.bias", dense_b_});
  conv1_.collect(p, b);
  bn1_.collect(p, b);
  inc1_.collect(p, b);
  bn_inc1_.collect(p, b);
  inc2_.collect(p, b);
  bn_inc2_.collect(p, b);
  conv2_.collect(p, b);
  bn2_.collect(p, b);
  conv_out_.collect(p, b);
  return p;
}

template <typename T>
std::vector<NamedBuffer<T>> Generator<T>::buffers() {
  std::vector<NamedTensor<T>> p;
  std::vector<NamedBuffer<T>> b;
  conv1_.collect(p, b);
  bn1_.collect(p, b);
  inc1_.collect(p, b);
  bn_inc1_.collect(p, b);
  inc2_.collect(p, b);
  bn_inc2_.collect(p, b);
  conv2_.collect(p, b);
  bn2_.collect(p, b);
  conv_out_.collect(p, b);
  return b;
}

// ---------------------------------------------------------------------------

template <typename T>
Discriminator<T>::Discriminator(const Architecture& full, const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  const Architecture arch = effective_architecture(full, cfg.width_divisor);
  ModelOptions opts;
  opts.discriminator_spectral_norm = cfg.discriminator_spectral_norm;
  spec_ = build_discriminator(arch, opts);
  auto find = [&](const std::string& name) -> const LayerSpec& {
    for (const auto& l : spec_.layers)
      if (l.name == name) return l;
    throw std::logic_error("discriminator spec lacks " + name);
  };
  auto conv_of = [&](const LayerSpec& l) {
    return ConvLayer<T>(l.name, {l.in_features, l.out_features, l.kernel, l.stride, l.dilation}, l.spectral_norm,
                        cfg.init_std, rng);
  };
  conv1_ = conv_of(find("D.conv1"));
  inc1_ = InceptionLayer<T>("D.inception1", arch.discriminator1, cfg.init_std, rng);
  bn_inc1_ = BatchNormLayer<T>("D.inception1.bn", arch.discriminator1.out_channels());
  inc2_ = InceptionLayer<T>("D.inception2", arch.discriminator2, cfg.init_std, rng);
  bn_inc2_ = BatchNormLayer<T>("D.inception2.bn", arch.discriminator2.out_channels());
  conv_pw_ = conv_of(find("D.conv_pw"));
  const auto& c2 = find("D.conv2");
  conv2_ = conv_of(c2);
  bn2_ = BatchNormLayer<T>("D.conv2.bn", c2.out_features);
  const auto& dense = find("D.dense");
  dense_w_ = init_weight<T>(rng, {dense.in_features, 1}, cfg.init_std);
  dense_w_.set_requires_grad(true);
  dense_b_ = Tensor<T>::zeros({1});
  dense_b_.set_requires_grad(true);
}

template <typename T>
Tensor<T> Discriminator<T>::drop(const Tensor<T>& x, nn::Mode mode, Rng* rng) {
  if (mode == nn::Mode::Eval || cfg_.dropout_rate == 0.0) return x;
  if (!rng) throw std::invalid_argument("discriminator: train-mode dropout needs an rng");
  return nn::dropout(x, nn::DropoutParams{cfg_.dropout_rate, mode}, *rng);
}

template <typename T>
Tensor<T> Discriminator<T>::logits(const Tensor<T>& x, nn::Mode mode, Rng* rng, ShapeTrace* trace) {
  if (x.rank() != 4 || x.dim(1) != 64 || x.dim(2) != 64 || x.dim(3) != 3) {
    throw ShapeError("discriminator: expected images (N, 64, 64, 3), got " + to_string(x.shape()));
  }
  auto note = [&](const char* name, const Tensor<T>& t) {
    if (trace) trace->add(name, t.shape());
  };
  const T slope = static_cast<T>(cfg_.leaky_slope);
  note("D.input", x);
  Tensor<T> h = drop(leaky_relu(conv1_.forward(x), slope), mode, rng);
  note("D.conv1", h);
  h = leaky_relu(drop(bn_inc1_.forward(inception_forward(h, inc1_), mode), mode, rng), slope);
  note("D.inception1", h);
  h = leaky_relu(drop(bn_inc2_.forward(inception_forward(h, inc2_), mode), mode, rng), slope);
  note("D.inception2", h);
  h = conv_pw_.forward(h);
  note("D.conv_pw", h);
  h = leaky_relu(drop(bn2_.forward(conv2_.forward(h), mode), mode, rng), slope);
  note("D.conv2", h);
  h = flatten(h);
  note("D.flatten", h);
  h = nn::dense(h, dense_w_, dense_b_);
  return h;
}

template <typename T>
Tensor<T> Discriminator<T>::forward(const Tensor<T>& x, nn::Mode mode, Rng* rng, ShapeTrace* trace) {
  Tensor<T> p = sigmoid(logits(x, mode, rng, trace));
  if (trace) trace->add("D.dense", p.shape());
  return p;
}

template <typename T>
void Discriminator<T>::update_spectral_norms(int iterations) {
  conv1_.update_spectral_norm(iterations);
  conv_pw_.update_spectral_norm(iterations);
  conv2_.update_spectral_norm(iterations);
}

template <typename T>
std::vector<NamedTensor<T>> Discriminator<T>::parameters() {
  std::vector<NamedTensor<T>> p;
  std::vector<NamedBuffer<T>> b;
  conv1_.collect(p, b);
  inc1_.collect(p, b);
  bn_inc1_.collect(p, b);
  inc2_.collect(p, b);
  bn_inc2_.collect(p, b);
  conv_pw_.collect(p, b);
  conv2_.collect(p, b);
  bn2_.collect(p, b);
  p.push_back({"D.dense.weight", dense_w_});
  p.push_back({"D.dense.bias", dense_b_});
  return p;
}

template <typename T>
std::vector<NamedBuffer<T>> Discriminator<T>::buffers() {
  std::vector<NamedTensor<T>> p;
  std::vector<NamedBuffer<T>> b;
  conv1_.collect(p, b);
  inc1_.collect(p, b);
  bn_inc1_.collect(p, b);
  inc2_.collect(p, b);
  bn_inc2_.collect(p, b);
  conv_pw_.collect(p, b);
  conv2_.collect(p, b);
  bn2_.collect(p, b);
  return b;
}

#define IGAN_INSTANTIATE_MODEL(T)                                              \
  template class ConvLayer<T>;                                                 \
  template class BatchNormLayer<T>;                                            \
  template class InceptionLayer<T>;                                            \
  template Tensor<T> inception_forward(const Tensor<T>&, InceptionLayer<T>&); \
  template class Generator<T>;                                                 \
  template class Discriminator<T>;

IGAN_INSTANTIATE_MODEL(float)
IGAN_INSTANTIATE_MODEL(double)

}  // namespace igan
