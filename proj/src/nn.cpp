#include "igan/nn.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "blas.hpp"
#include "record.hpp"

namespace igan::nn {

using detail::finish;
using detail::grad_sink;

namespace {

struct Nhwc {
  std::size_t n, h, w, c;
  bool batched;
};

template <typename T>
Nhwc nhwc_of(const Tensor<T>& x, const char* op) {
  const auto& s = x.shape();
  if (s.size() == 4) return {s[0], s[1], s[2], s[3], true};
  if (s.size() == 3) return {1, s[0], s[1], s[2], false};
  throw ShapeError(std::string(op) + ": expected (N, H, W, C) or (H, W, C), got " + to_string(s));
}

Shape nhwc_shape(const Nhwc& d, std::size_t h, std::size_t w, std::size_t c) {
  if (d.batched) return {d.n, h, w, c};
  return {h, w, c};
}

// Upper bound on im2col buffer elements; conv work is chunked over samples.
constexpr std::size_t kColumnBudget = std::size_t{1} << 22;

template <typename T>
void im2col(const T* x, const Nhwc& d, const ConvGeometry& g, std::size_t oh, std::size_t ow, std::size_t n0,
            std::size_t n1, T* col) {
  const std::size_t k = g.kernel;
  const std::size_t cin = d.c;
  const std::size_t r = k * k * cin;
  const auto p = static_cast<std::ptrdiff_t>(g.padding());
  for (std::size_t n = n0; n < n1; ++n) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T* row = col + ((n - n0) * oh * ow + oy * ow + ox) * r;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky * g.dilation) - p;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx * g.dilation) - p;
            T* dst = row + (ky * k + kx) * cin;
            if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(d.h) || ix >= static_cast<std::ptrdiff_t>(d.w)) {
              std::fill_n(dst, cin, T(0));
            } else {
              std::copy_n(x + ((n * d.h + iy) * d.w + ix) * cin, cin, dst);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const Nhwc& d, const ConvGeometry& g, std::size_t oh, std::size_t ow, std::size_t n0,
            std::size_t n1, T* dx) {
  const std::size_t k = g.kernel;
  const std::size_t cin = d.c;
  const std::size_t r = k * k * cin;
  const auto p = static_cast<std::ptrdiff_t>(g.padding());
  for (std::size_t n = n0; n < n1; ++n) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const T* row = col + ((n - n0) * oh * ow + oy * ow + ox) * r;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky * g.dilation) - p;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx * g.dilation) - p;
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w)) continue;
            const T* src = row + (ky * k + kx) * cin;
            T* dst = dx + ((n * d.h + iy) * d.w + ix) * cin;
            for (std::size_t c = 0; c < cin; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

}  // namespace

void ConvGeometry::validate() const {
  if (in_channels == 0 || out_channels == 0) throw std::invalid_argument("conv2d: channel counts must be positive");
  if (kernel == 0 || kernel % 2 == 0) throw std::invalid_argument("conv2d: kernel must be odd for SAME padding");
  if (stride == 0 || dilation == 0) throw std::invalid_argument("conv2d: stride and dilation must be >= 1");
}

std::size_t ConvGeometry::output_extent(std::size_t extent) const {
  const auto span = static_cast<std::ptrdiff_t>(dilation * (kernel - 1) + 1);
  const auto padded = static_cast<std::ptrdiff_t>(extent + 2 * padding());
  if (padded < span) {
    throw ShapeError("conv2d: input extent " + std::to_string(extent) + " yields a non-positive output extent");
  }
  return static_cast<std::size_t>((padded - span) / static_cast<std::ptrdiff_t>(stride)) + 1;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, const ConvGeometry& geom) {
  geom.validate();
  const Nhwc d = nhwc_of(x, "conv2d");
  if (d.c != geom.in_channels) {
    throw ShapeError("conv2d: input has " + std::to_string(d.c) + " channels, layer expects " +
                     std::to_string(geom.in_channels));
  }
  if (weight.shape() != geom.weight_shape()) {
    throw ShapeError("conv2d: weight shape " + to_string(weight.shape()) + ", expected " +
                     to_string(geom.weight_shape()));
  }
  if (bias.shape() != Shape{geom.out_channels}) {
    throw ShapeError("conv2d: bias shape " + to_string(bias.shape()) + ", expected (" +
                     std::to_string(geom.out_channels) + ")");
  }
  const std::size_t oh = geom.output_extent(d.h);
  const std::size_t ow = geom.output_extent(d.w);
  const std::size_t cout = geom.out_channels;
  const std::size_t r = geom.kernel * geom.kernel * d.c;
  const std::size_t rows_per_sample = oh * ow;
  const bool pointwise = geom.kernel == 1 && geom.stride == 1;
  const std::size_t chunk = std::max<std::size_t>(1, kColumnBudget / std::max<std::size_t>(1, rows_per_sample * r));

  std::vector<T> out(d.n * rows_per_sample * cout);
  const T* xv = x.data().data();
  const T* wv = weight.data().data();
  if (pointwise) {
    detail::gemm(false, false, static_cast<int>(d.n * rows_per_sample), static_cast<int>(cout), static_cast<int>(r),
                 T(1), xv, static_cast<int>(r), wv, static_cast<int>(cout), T(0), out.data(), static_cast<int>(cout));
  } else {
    std::vector<T> col(std::min(chunk, d.n) * rows_per_sample * r);
    for (std::size_t n0 = 0; n0 < d.n; n0 += chunk) {
      const std::size_t n1 = std::min(d.n, n0 + chunk);
      const std::size_t rows = (n1 - n0) * rows_per_sample;
      im2col(xv, d, geom, oh, ow, n0, n1, col.data());
      detail::gemm(false, false, static_cast<int>(rows), static_cast<int>(cout), static_cast<int>(r), T(1),
                   col.data(), static_cast<int>(r), wv, static_cast<int>(cout), T(0),
                   out.data() + n0 * rows_per_sample * cout, static_cast<int>(cout));
    }
  }
  auto bv = bias.data();
  for (std::size_t row = 0; row < d.n * rows_per_sample; ++row) {
    for (std::size_t o = 0; o < cout; ++o) out[row * cout + o] += bv[o];
  }

  return finish<T>(nhwc_shape(d, oh, ow, cout), std::move(out), {x, weight, bias},
                   [x, weight, bias, geom, d, oh, ow, r, rows_per_sample, pointwise, chunk](std::span<const T> g) {
    const std::size_t cout = geom.out_channels;
    auto gx = grad_sink(x);
    auto gw = grad_sink(weight);
    auto gb = grad_sink(bias);
    if (!gb.empty()) {
      std::vector<double> acc(cout, 0.0);
      for (std::size_t row = 0; row < d.n * rows_per_sample; ++row) {
        for (std::size_t o = 0; o < cout; ++o) acc[o] += static_cast<double>(g[row * cout + o]);
      }
      for (std::size_t o = 0; o < cout; ++o) gb[o] += static_cast<T>(acc[o]);
    }
    if (gx.empty() && gw.empty()) return;
    const T* xv = x.data().data();
    const T* wv = weight.data().data();
    const int ic = static_cast<int>(cout);
    const int ir = static_cast<int>(r);
    if (pointwise) {
      const int rows = static_cast<int>(d.n * rows_per_sample);
      if (!gw.empty()) detail::gemm(true, false, ir, ic, rows, T(1), xv, ir, g.data(), ic, T(1), gw.data(), ic);
      if (!gx.empty()) detail::gemm(false, true, rows, ir, ic, T(1), g.data(), ic, wv, ic, T(1), gx.data(), ir);
      return;
    }
    std::vector<T> col(std::min(chunk, d.n) * rows_per_sample * r);
    for (std::size_t n0 = 0; n0 < d.n; n0 += chunk) {
      const std::size_t n1 = std::min(d.n, n0 + chunk);
      const int rows = static_cast<int>((n1 - n0) * rows_per_sample);
      const T* gchunk = g.data() + n0 * rows_per_sample * cout;
      if (!gw.empty()) {
        im2col(xv, d, geom, oh, ow, n0, n1, col.data());
        detail::gemm(true, false, ir, ic, rows, T(1), col.data(), ir, gchunk, ic, T(1), gw.data(), ic);
      }
      if (!gx.empty()) {
        detail::gemm(false, true, rows, ir, ic, T(1), gchunk, ic, wv, ic, T(0), col.data(), ir);
        col2im(col.data(), d, geom, oh, ow, n0, n1, gx.data());
      }
    }
  });
}

template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
  const Nhwc d = nhwc_of(x, "upsample_nearest2x");
  const std::size_t oh = 2 * d.h;
  const std::size_t ow = 2 * d.w;
  auto xv = x.data();
  std::vector<T> out(d.n * oh * ow * d.c);
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const T* src = xv.data() + ((n * d.h + y / 2) * d.w + xx / 2) * d.c;
        std::copy_n(src, d.c, out.data() + ((n * oh + y) * ow + xx) * d.c);
      }
    }
  }
  return finish<T>(nhwc_shape(d, oh, ow, d.c), std::move(out), {x}, [x, d, oh, ow](std::span<const T> g) {
    auto gx = grad_sink(x);
    for (std::size_t n = 0; n < d.n; ++n) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t xx = 0; xx < ow; ++xx) {
          const T* src = g.data() + ((n * oh + y) * ow + xx) * d.c;
          T* dst = gx.data() + ((n * d.h + y / 2) * d.w + xx / 2) * d.c;
          for (std::size_t c = 0; c < d.c; ++c) dst[c] += src[c];
        }
      }
    }
  });
}

std::size_t PoolGeometry::output_extent(std::size_t extent) const {
  if (window == 0 || stride == 0) throw std::invalid_argument("avg_pool2d: window and stride must be positive");
  if (padding == Padding::Same && window % 2 == 0) throw std::invalid_argument("avg_pool2d: SAME needs an odd window");
  const std::size_t padded = extent + 2 * pad();
  if (window > padded) {
    throw ShapeError("avg_pool2d: window " + std::to_string(window) + " larger than padded input extent " +
                     std::to_string(padded));
  }
  return (padded - window) / stride + 1;
}

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, const PoolGeometry& geom) {
  const Nhwc d = nhwc_of(x, "avg_pool2d");
  const std::size_t oh = geom.output_extent(d.h);
  const std::size_t ow = geom.output_extent(d.w);
  const auto p = static_cast<std::ptrdiff_t>(geom.pad());
  auto xv = x.data();

  // Window bounds clipped to the image, shared by forward and backward.
  auto clip = [geom, p](std::size_t o, std::size_t extent) {
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(o * geom.stride) - p);
    const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(extent),
                                             static_cast<std::ptrdiff_t>(o * geom.stride + geom.window) - p);
    return std::pair<std::size_t, std::size_t>(static_cast<std::size_t>(lo), static_cast<std::size_t>(hi));
  };

  std::vector<T> out(d.n * oh * ow * d.c, T(0));
  std::vector<double> acc(d.c);
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const auto [y0, y1] = clip(oy, d.h);
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const auto [x0, x1] = clip(ox, d.w);
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t y = y0; y < y1; ++y) {
          for (std::size_t xx = x0; xx < x1; ++xx) {
            const T* src = xv.data() + ((n * d.h + y) * d.w + xx) * d.c;
            for (std::size_t c = 0; c < d.c; ++c) acc[c] += static_cast<double>(src[c]);
          }
        }
        const double count = static_cast<double>((y1 - y0) * (x1 - x0));
        T* dst = out.data() + ((n * oh + oy) * ow + ox) * d.c;
        for (std::size_t c = 0; c < d.c; ++c) dst[c] = static_cast<T>(acc[c] / count);
      }
    }
  }
  return finish<T>(nhwc_shape(d, oh, ow, d.c), std::move(out), {x}, [x, d, oh, ow, clip](std::span<const T> g) {
    auto gx = grad_sink(x);
    for (std::size_t n = 0; n < d.n; ++n) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        const auto [y0, y1] = clip(oy, d.h);
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const auto [x0, x1] = clip(ox, d.w);
          const T inv = T(1) / static_cast<T>((y1 - y0) * (x1 - x0));
          const T* src = g.data() + ((n * oh + oy) * ow + ox) * d.c;
          for (std::size_t y = y0; y < y1; ++y) {
            for (std::size_t xx = x0; xx < x1; ++xx) {
              T* dst = gx.data() + ((n * d.h + y) * d.w + xx) * d.c;
              for (std::size_t c = 0; c < d.c; ++c) dst[c] += src[c] * inv;
            }
          }
        }
      }
    }
  });
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, BatchNormState<T>& state,
                     Mode mode) {
  if (x.rank() < 2) throw ShapeError("batch_norm: input needs a batch axis, got " + to_string(x.shape()));
  const std::size_t c = x.shape().back();
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c} || state.channels() != c) {
    throw ShapeError("batch_norm: input has " + std::to_string(c) + " channels, parameters have " +
                     std::to_string(state.channels()));
  }
  const std::size_t m = x.numel() / c;
  auto xv = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();

  std::vector<T> inv_std(c);
  std::vector<T> centre(c);
  if (mode == Mode::Train) {
    std::vector<double> mu(c, 0.0);
    std::vector<double> var(c, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < c; ++j) mu[j] += static_cast<double>(xv[i * c + j]);
    }
    for (std::size_t j = 0; j < c; ++j) mu[j] /= static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        const double dlt = static_cast<double>(xv[i * c + j]) - mu[j];
        var[j] += dlt * dlt;
      }
    }
    const T mom = state.momentum;
    for (std::size_t j = 0; j < c; ++j) {
      const double biased = var[j] / static_cast<double>(m);
      const double unbiased = m > 1 ? var[j] / static_cast<double>(m - 1) : biased;
      centre[j] = static_cast<T>(mu[j]);
      inv_std[j] = static_cast<T>(1.0 / std::sqrt(biased + static_cast<double>(state.epsilon)));
      state.running_mean[j] = mom * state.running_mean[j] + (T(1) - mom) * static_cast<T>(mu[j]);
      state.running_var[j] = mom * state.running_var[j] + (T(1) - mom) * static_cast<T>(unbiased);
    }
  } else {
    for (std::size_t j = 0; j < c; ++j) {
      centre[j] = state.running_mean[j];
      inv_std[j] = T(1) / std::sqrt(state.running_var[j] + state.epsilon);
    }
  }

  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const T h = (xv[i * c + j] - centre[j]) * inv_std[j];
      (*xhat)[i * c + j] = h;
      out[i * c + j] = gv[j] * h + bv[j];
    }
  }
  const bool train = mode == Mode::Train;
  return finish<T>(x.shape(), std::move(out), {x, gamma, beta},
                   [x, gamma, beta, xhat, inv_std, m, c, train](std::span<const T> g) {
    auto gx = grad_sink(x);
    auto gg = grad_sink(gamma);
    auto gbeta = grad_sink(beta);
    auto gv = gamma.data();
    std::vector<double> sum_dy(c, 0.0);
    std::vector<double> sum_dy_xhat(c, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        sum_dy[j] += static_cast<double>(g[i * c + j]);
        sum_dy_xhat[j] += static_cast<double>(g[i * c + j]) * static_cast<double>((*xhat)[i * c + j]);
      }
    }
    for (std::size_t j = 0; j < c; ++j) {
      if (!gg.empty()) gg[j] += static_cast<T>(sum_dy_xhat[j]);
      if (!gbeta.empty()) gbeta[j] += static_cast<T>(sum_dy[j]);
    }
    if (gx.empty()) return;
    if (!train) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[i * c + j] * gv[j] * inv_std[j];
      }
      return;
    }
    const T inv_m = T(1) / static_cast<T>(m);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        const T mean_dy = static_cast<T>(sum_dy[j]) * inv_m;
        const T mean_dy_xhat = static_cast<T>(sum_dy_xhat[j]) * inv_m;
        gx[i * c + j] += gv[j] * inv_std[j] * (g[i * c + j] - mean_dy - (*xhat)[i * c + j] * mean_dy_xhat);
      }
    }
  });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, const DropoutParams& params, Rng& rng) {
  if (!(params.rate >= 0.0 && params.rate < 1.0)) {
    throw std::invalid_argument("dropout: rate must lie in [0, 1), got " + std::to_string(params.rate));
  }
  if (params.mode == Mode::Eval || params.rate == 0.0) return x;
  const T rate = static_cast<T>(params.rate);
  const T keep_scale = T(1) / (T(1) - rate);
  auto mask = std::make_shared<std::vector<T>>(x.numel());
  auto xv = x.data();
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = rng.uniform<T>() >= rate ? keep_scale : T(0);
    out[i] = xv[i] * (*mask)[i];
  }
  return finish<T>(x.shape(), std::move(out), {x}, [x, mask](std::span<const T> g) {
    auto gx = grad_sink(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*mask)[i];
  });
}

namespace {

struct MatrixView {
  std::size_t rest;  // rows of the stored (rest x out) layout
  std::size_t out;
};

template <typename T>
MatrixView spectral_view(const Tensor<T>& weight) {
  if (weight.rank() < 1) throw ShapeError("spectral_normalize: weight must have an output axis");
  const std::size_t out = weight.shape().back();
  return {weight.numel() / out, out};
}

// Returns the Euclidean norm before scaling; leaves `v` untouched when zero.
double normalize_in_place(std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  const double norm = std::sqrt(s);
  if (norm > 0.0) {
    for (double& x : v) x /= norm;
  }
  return norm;
}

}  // namespace

template <typename T>
SpectralNormState<T> make_spectral_norm_state(std::size_t out, Rng& rng) {
  SpectralNormState<T> state;
  std::vector<double> u(out);
  for (std::size_t i = 0; i < out; i += 2) {
    const auto z = rng.normal_pair();
    u[i] = z[0];
    if (i + 1 < out) u[i + 1] = z[1];
  }
  normalize_in_place(u);
  state.u.assign(u.begin(), u.end());
  return state;
}

template <typename T>
T power_iterate(const Tensor<T>& weight, SpectralNormState<T>& state, int iterations) {
  const auto [rest, out] = spectral_view(weight);
  if (state.u.size() != out) {
    throw std::invalid_argument("power_iterate: u has " + std::to_string(state.u.size()) + " entries, weight has " +
                                std::to_string(out) + " outputs");
  }
  auto w = weight.data();
  std::vector<double> u(state.u.begin(), state.u.end());
  std::vector<double> v(rest);

  auto refresh_v = [&] {
    std::fill(v.begin(), v.end(), 0.0);
    for (std::size_t r = 0; r < rest; ++r) {
      double acc = 0.0;
      for (std::size_t o = 0; o < out; ++o) acc += static_cast<double>(w[r * out + o]) * u[o];
      v[r] = acc;
    }
    if (normalize_in_place(v) == 0.0) throw DegenerateSpectralNorm("spectral norm estimate is zero (W^T u = 0)");
  };
  auto w_times_v = [&] {
    std::vector<double> wv(out, 0.0);
    for (std::size_t r = 0; r < rest; ++r) {
      for (std::size_t o = 0; o < out; ++o) wv[o] += static_cast<double>(w[r * out + o]) * v[r];
    }
    return wv;
  };

  if (iterations <= 0) refresh_v();
  for (int it = 0; it < iterations; ++it) {
    refresh_v();
    u = w_times_v();
    if (normalize_in_place(u) == 0.0) throw DegenerateSpectralNorm("spectral norm estimate is zero (W v = 0)");
  }
  const auto wv = w_times_v();
  double sigma = 0.0;
  for (std::size_t o = 0; o < out; ++o) sigma += u[o] * wv[o];
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw DegenerateSpectralNorm("spectral norm estimate is not positive: " + std::to_string(sigma));
  }
  state.u.assign(u.begin(), u.end());
  state.v.assign(v.begin(), v.end());
  return static_cast<T>(sigma);
}

template <typename T>
Tensor<T> spectral_normalize(const Tensor<T>& weight, SpectralNormState<T>& state, int iterations) {
  const T sigma = power_iterate(weight, state, iterations);
  const auto [rest, out] = spectral_view(weight);
  auto w = weight.data();
  std::vector<T> result(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) result[i] = w[i] / sigma;
  return finish<T>(weight.shape(), std::move(result), {weight},
                   [weight, sigma, u = state.u, v = state.v, rest, out](std::span<const T> g) {
    auto gw = grad_sink(weight);
    auto w = weight.data();
    // d(W/sigma) with sigma = u^T W v: G/sigma - <G, W>/sigma^2 * v u^T (stored layout).
    double inner = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) inner += static_cast<double>(g[i]) * static_cast<double>(w[i]);
    const double coef = inner / (static_cast<double>(sigma) * static_cast<double>(sigma));
    for (std::size_t r = 0; r < rest; ++r) {
      for (std::size_t o = 0; o < out; ++o) {
        const std::size_t i = r * out + o;
        gw[i] += static_cast<T>(static_cast<double>(g[i]) / static_cast<double>(sigma) -
                                coef * static_cast<double>(v[r]) * static_cast<double>(u[o]));
      }
    }
  });
}

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  return add_bias(matmul(x, weight), bias);
}

#define IGAN_INSTANTIATE_NN(T)                                                                               \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const ConvGeometry&);     \
  template Tensor<T> upsample_nearest2x(const Tensor<T>&);                                                   \
  template Tensor<T> avg_pool2d(const Tensor<T>&, const PoolGeometry&);                                      \
  template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, BatchNormState<T>&, Mode); \
  template Tensor<T> dropout(const Tensor<T>&, const DropoutParams&, Rng&);                                  \
  template SpectralNormState<T> make_spectral_norm_state(std::size_t, Rng&);                                 \
  template T power_iterate(const Tensor<T>&, SpectralNormState<T>&, int);                                    \
  template Tensor<T> spectral_normalize(const Tensor<T>&, SpectralNormState<T>&, int);                       \
  template Tensor<T> dense(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

IGAN_INSTANTIATE_NN(float)
IGAN_INSTANTIATE_NN(double)

}  // namespace igan::nn
