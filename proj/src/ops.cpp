#include "igan/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "blas.hpp"
#include "record.hpp"

namespace igan {

using detail::finish;
using detail::grad_sink;

namespace {

const char* name_of(BinaryOp op) {
  switch (op) {
    case BinaryOp::Add: return "add";
    case BinaryOp::Sub: return "sub";
    case BinaryOp::Mul: return "mul";
    case BinaryOp::Div: return "div";
  }
  return "?";
}

template <typename T>
T softplus_value(T x) {
  // max(x, 0) + log1p(exp(-|x|))
  return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename T>
T sigmoid_value(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

template <typename T>
Tensor<T> elementwise(BinaryOp op, const Tensor<T>& a, const Tensor<T>& b) {
  const bool b_scalar = b.numel() == 1 && a.shape() != b.shape();
  if (!b_scalar && a.shape() != b.shape()) {
    throw ShapeError(std::string(name_of(op)) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  const auto n = a.numel();
  auto av = a.data();
  auto bv = b.data();
  std::vector<T> out(n);
  auto b_at = [&](std::size_t i) { return b_scalar ? bv[0] : bv[i]; };
  switch (op) {
    case BinaryOp::Add: for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + b_at(i); break;
    case BinaryOp::Sub: for (std::size_t i = 0; i < n; ++i) out[i] = av[i] - b_at(i); break;
    case BinaryOp::Mul: for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * b_at(i); break;
    case BinaryOp::Div: for (std::size_t i = 0; i < n; ++i) out[i] = av[i] / b_at(i); break;
  }
  return finish<T>(a.shape(), std::move(out), {a, b}, [op, a, b, b_scalar](std::span<const T> g) {
    auto ga = grad_sink(a);
    auto gb = grad_sink(b);
    auto av = a.data();
    auto bv = b.data();
    const auto n = g.size();
    auto b_at = [&](std::size_t i) { return b_scalar ? bv[0] : bv[i]; };
    double b_total = 0.0;  // scalar-b gradient is a sum over all elements
    auto push_b = [&](std::size_t i, T v) {
      if (gb.empty()) return;
      if (b_scalar) b_total += static_cast<double>(v);
      else gb[i] += v;
    };
    for (std::size_t i = 0; i < n; ++i) {
      switch (op) {
        case BinaryOp::Add:
          if (!ga.empty()) ga[i] += g[i];
          push_b(i, g[i]);
          break;
        case BinaryOp::Sub:
          if (!ga.empty()) ga[i] += g[i];
          push_b(i, -g[i]);
          break;
        case BinaryOp::Mul:
          if (!ga.empty()) ga[i] += g[i] * b_at(i);
          push_b(i, g[i] * av[i]);
          break;
        case BinaryOp::Div: {
          const T bi = b_at(i);
          if (!ga.empty()) ga[i] += g[i] / bi;
          push_b(i, -g[i] * av[i] / (bi * bi));
          break;
        }
      }
    }
    if (b_scalar && !gb.empty()) gb[0] += static_cast<T>(b_total);
  });
}

template <typename T>
Tensor<T> elementwise(UnaryOp op, const Tensor<T>& a) {
  const auto n = a.numel();
  auto av = a.data();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T x = av[i];
    switch (op) {
      case UnaryOp::Neg: out[i] = -x; break;
      case UnaryOp::Exp: out[i] = std::exp(x); break;
      case UnaryOp::Log: out[i] = std::log(x); break;
      case UnaryOp::Tanh: out[i] = std::tanh(x); break;
      case UnaryOp::Sigmoid: out[i] = sigmoid_value(x); break;
      case UnaryOp::Relu: out[i] = x > T(0) ? x : T(0); break;
      case UnaryOp::Square: out[i] = x * x; break;
      case UnaryOp::Softplus: out[i] = softplus_value(x); break;
    }
  }
  // Rules that are cheaper from the output keep a copy of it.
  std::shared_ptr<const std::vector<T>> saved;
  if (op == UnaryOp::Exp || op == UnaryOp::Tanh || op == UnaryOp::Sigmoid) {
    saved = std::make_shared<const std::vector<T>>(out);
  }
  return finish<T>(a.shape(), std::move(out), {a}, [op, a, saved](std::span<const T> g) {
    auto ga = grad_sink(a);
    if (ga.empty()) return;
    auto av = a.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T x = av[i];
      T d = T(0);
      switch (op) {
        case UnaryOp::Neg: d = T(-1); break;
        case UnaryOp::Exp: d = (*saved)[i]; break;
        case UnaryOp::Log: d = T(1) / x; break;
        case UnaryOp::Tanh: d = T(1) - (*saved)[i] * (*saved)[i]; break;
        case UnaryOp::Sigmoid: d = (*saved)[i] * (T(1) - (*saved)[i]); break;
        case UnaryOp::Relu: d = x > T(0) ? T(1) : T(0); break;
        case UnaryOp::Square: d = T(2) * x; break;
        case UnaryOp::Softplus: d = sigmoid_value(x); break;
      }
      ga[i] += g[i] * d;
    }
  });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
  auto av = a.data();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] > T(0) ? av[i] : slope * av[i];
  return finish<T>(a.shape(), std::move(out), {a}, [a, slope](std::span<const T> g) {
    auto ga = grad_sink(a);
    auto av = a.data();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += av[i] > T(0) ? g[i] : slope * g[i];
  });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  auto av = a.data();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::clamp(av[i], lo, hi);
  return finish<T>(a.shape(), std::move(out), {a}, [a, lo, hi](std::span<const T> g) {
    auto ga = grad_sink(a);
    auto av = a.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (av[i] > lo && av[i] < hi) ga[i] += g[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  auto av = a.data();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * factor;
  return finish<T>(a.shape(), std::move(out), {a}, [a, factor](std::span<const T> g) {
    auto ga = grad_sink(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T value) {
  auto av = a.data();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + value;
  return finish<T>(a.shape(), std::move(out), {a}, [a](std::span<const T> g) {
    auto ga = grad_sink(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  const int m = static_cast<int>(a.dim(0));
  const int k = static_cast<int>(a.dim(1));
  const int n = static_cast<int>(b.dim(1));
  std::vector<T> out(static_cast<std::size_t>(m) * n);
  detail::gemm(false, false, m, n, k, T(1), a.data().data(), k, b.data().data(), n, T(0), out.data(), n);
  return finish<T>({a.dim(0), b.dim(1)}, std::move(out), {a, b}, [a, b, m, n, k](std::span<const T> g) {
    auto ga = grad_sink(a);
    auto gb = grad_sink(b);
    // dA = G * B^T, dB = A^T * G
    if (!ga.empty()) detail::gemm(false, true, m, k, n, T(1), g.data(), n, b.data().data(), n, T(1), ga.data(), k);
    if (!gb.empty()) detail::gemm(true, false, k, n, m, T(1), a.data().data(), k, g.data(), n, T(1), gb.data(), n);
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  double total = 0.0;
  for (T v : a.data()) total += static_cast<double>(v);
  return finish<T>(Shape{}, {static_cast<T>(total)}, {a}, [a](std::span<const T> g) {
    auto ga = grad_sink(a);
    for (auto& v : ga) v += g[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  double total = 0.0;
  for (T v : a.data()) total += static_cast<double>(v);
  const auto n = a.numel();
  return finish<T>(Shape{}, {static_cast<T>(total / static_cast<double>(n))}, {a}, [a, n](std::span<const T> g) {
    auto ga = grad_sink(a);
    const T share = g[0] / static_cast<T>(n);
    for (auto& v : ga) v += share;
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  std::vector<T> out(a.data().begin(), a.data().end());
  return finish<T>(std::move(shape), std::move(out), {a}, [a](std::span<const T> g) {
    auto ga = grad_sink(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

template <typename T>
Tensor<T> flatten(const Tensor<T>& a) {
  if (a.rank() < 1) throw ShapeError("flatten: needs a leading batch axis");
  return reshape(a, Shape{a.dim(0), a.numel() / a.dim(0)});
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& a, const Tensor<T>& bias) {
  if (a.rank() < 1 || bias.rank() != 1 || a.shape().back() != bias.dim(0)) {
    throw ShapeError("add_bias: bias " + to_string(bias.shape()) + " does not match last axis of " +
                     to_string(a.shape()));
  }
  const auto c = bias.dim(0);
  const auto rows = a.numel() / c;
  auto av = a.data();
  auto bv = bias.data();
  std::vector<T> out(av.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = av[r * c + j] + bv[j];
  }
  return finish<T>(a.shape(), std::move(out), {a, bias}, [a, bias, rows, c](std::span<const T> g) {
    auto ga = grad_sink(a);
    auto gb = grad_sink(bias);
    if (!ga.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (!gb.empty()) {
      std::vector<double> acc(c, 0.0);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < c; ++j) acc[j] += static_cast<double>(g[r * c + j]);
      }
      for (std::size_t j = 0; j < c; ++j) gb[j] += static_cast<T>(acc[j]);
    }
  });
}

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape& first = parts[0].shape();
  if (first.empty()) throw ShapeError("concat_channels: inputs need at least one axis");
  const Shape lead(first.begin(), first.end() - 1);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(lead.begin(), lead.end(), s.begin())) {
      throw ShapeError("concat_channels: leading extents differ, " + to_string(first) + " vs " + to_string(s));
    }
    widths.push_back(s.back());
    total += s.back();
  }
  const auto rows = shape_numel(lead);
  std::vector<T> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto pv = parts[p].data();
    const auto w = widths[p];
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(pv.begin() + r * w, w, out.begin() + r * total + offset);
    }
    offset += w;
  }
  Shape shape = lead;
  shape.push_back(total);
  std::vector<Tensor<T>> inputs(parts.begin(), parts.end());
  return finish<T>(std::move(shape), std::move(out), inputs, [inputs, widths, rows, total](std::span<const T> g) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < inputs.size(); ++p) {
      auto gp = grad_sink(inputs[p]);
      const auto w = widths[p];
      if (!gp.empty()) {
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < w; ++j) gp[r * w + j] += g[r * total + offset + j];
        }
      }
      offset += w;
    }
  });
}

template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& a, std::span<const std::size_t> sizes) {
  if (a.rank() < 1) throw ShapeError("split_channels: input needs at least one axis");
  const auto total = a.shape().back();
  std::size_t covered = 0;
  for (auto s : sizes) covered += s;
  if (covered != total) {
    throw ShapeError("split_channels: sizes sum to " + std::to_string(covered) + " but input has " +
                     std::to_string(total) + " channels");
  }
  const auto rows = a.numel() / total;
  std::vector<Tensor<T>> outs;
  std::size_t offset = 0;
  for (auto w : sizes) {
    std::vector<T> out(rows * w);
    auto av = a.data();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(av.begin() + r * total + offset, w, out.begin() + r * w);
    }
    Shape shape = a.shape();
    shape.back() = w;
    outs.push_back(finish<T>(std::move(shape), std::move(out), {a}, [a, rows, total, offset, w](std::span<const T> g) {
      auto ga = grad_sink(a);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < w; ++j) ga[r * total + offset + j] += g[r * w + j];
      }
    }));
    offset += w;
  }
  return outs;
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& a) {
  if (a.rank() != 2) throw ShapeError("log_softmax: expects (N, K), got " + to_string(a.shape()));
  const auto n = a.dim(0);
  const auto k = a.dim(1);
  auto av = a.data();
  std::vector<T> out(av.size());
  for (std::size_t r = 0; r < n; ++r) {
    const T* row = av.data() + r * k;
    const T mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(static_cast<double>(row[j] - mx));
    const T lse = mx + static_cast<T>(std::log(z));
    for (std::size_t j = 0; j < k; ++j) out[r * k + j] = row[j] - lse;
  }
  auto saved = std::make_shared<const std::vector<T>>(out);
  return finish<T>(a.shape(), std::move(out), {a}, [a, saved, n, k](std::span<const T> g) {
    auto ga = grad_sink(a);
    for (std::size_t r = 0; r < n; ++r) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < k; ++j) gsum += static_cast<double>(g[r * k + j]);
      for (std::size_t j = 0; j < k; ++j) {
        const T p = std::exp((*saved)[r * k + j]);
        ga[r * k + j] += g[r * k + j] - p * static_cast<T>(gsum);
      }
    }
  });
}

#define IGAN_INSTANTIATE_OPS(T)                                                           \
  template Tensor<T> elementwise(BinaryOp, const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> elementwise(UnaryOp, const Tensor<T>&);                             \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                    \
  template Tensor<T> clamp(const Tensor<T>&, T, T);                                      \
  template Tensor<T> scale(const Tensor<T>&, T);                                         \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                    \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> sum(const Tensor<T>&);                                              \
  template Tensor<T> mean(const Tensor<T>&);                                             \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                   \
  template Tensor<T> flatten(const Tensor<T>&);                                          \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> concat_channels(std::span<const Tensor<T>>);                        \
  template std::vector<Tensor<T>> split_channels(const Tensor<T>&, std::span<const std::size_t>); \
  template Tensor<T> log_softmax(const Tensor<T>&);

IGAN_INSTANTIATE_OPS(float)
IGAN_INSTANTIATE_OPS(double)

}  // namespace igan
