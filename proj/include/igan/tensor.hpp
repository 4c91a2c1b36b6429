#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace igan {

using Shape = std::vector<std::size_t>;

/// Product of the extents. The empty shape denotes a scalar and has one element.
std::size_t shape_numel(const Shape& shape);
std::string to_string(const Shape& shape);
/// Throws ShapeError if any extent is zero.
void check_extents(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class AutodiffError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <typename T>
class Tape;

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  const Tape<T>* producer = nullptr;  // tape that recorded this node as an output

  std::span<T> grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

}  // namespace detail

/// Row-major N-dimensional array. The data buffer is fixed once the tensor
/// is produced by an op; only leaves (parameters) are written in place, and
/// only between steps.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node().shape; }
  std::size_t rank() const { return node().shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node().data.size(); }

  std::span<const T> data() const { return node().data; }
  std::span<T> mutable_data() { return node().data; }
  T item() const;

  bool requires_grad() const { return node().requires_grad; }
  void set_requires_grad(bool value);
  bool has_grad() const { return !node().grad.empty(); }
  std::span<const T> grad() const { return node().grad; }
  std::span<T> mutable_grad() { return node().grad_buffer(); }
  void zero_grad() { node().grad.clear(); }

  /// Copy of the values without autodiff history.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }
  const detail::NodePtr<T>& node_ptr() const { return node_; }
  static Tensor from_node(detail::NodePtr<T> node);

 private:
  detail::Node<T>& node() const;
  detail::NodePtr<T> node_;
};

/// Define-by-run record of differentiable operations. Entries are appended
/// in execution order, so reverse iteration is a valid topological order.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::vector<detail::NodePtr<T>> inputs, detail::NodePtr<T> output, BackwardFn backward);
  std::size_t size() const { return entries_.size(); }
  bool produced(const Tensor<T>& tensor) const;

  /// Seeds d(loss)/d(loss) = 1 and runs every reachable backward rule once.
  /// A tape can be consumed only once.
  void backward(const Tensor<T>& loss);

 private:
  struct Entry {
    std::vector<detail::NodePtr<T>> inputs;
    detail::NodePtr<T> output;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
  bool consumed_ = false;
};

template <typename T>
void backward(Tape<T>& tape, const Tensor<T>& loss) {
  tape.backward(loss);
}

/// Makes `tape` the recording target for ops on the current thread until the
/// scope ends. A null tape suspends recording (inference / detached forward).
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>* tape);
  explicit TapeScope(Tape<T>& tape) : TapeScope(&tape) {}
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

  static Tape<T>* current();

 private:
  Tape<T>* previous_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;
extern template class TapeScope<float>;
extern template class TapeScope<double>;

}  // namespace igan
