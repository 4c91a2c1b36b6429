#include "igan/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace igan {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

void check_extents(const Shape& shape) {
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor shape " + to_string(shape) + " has a zero extent");
  }
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) {
  check_extents(shape);
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor shape " + to_string(shape) + " needs " + std::to_string(shape_numel(shape)) +
                     " values, got " + std::to_string(data.size()));
  }
  node_ = std::make_shared<detail::Node<T>>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_node(detail::NodePtr<T> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

template <typename T>
detail::Node<T>& Tensor<T>::node() const {
  if (!node_) throw std::logic_error("use of an undefined tensor");
  return *node_;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  const auto& s = node().shape;
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(s));
  }
  return s[axis];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar tensor of shape " + to_string(shape()));
  return node().data[0];
}

template <typename T>
void Tensor<T>::set_requires_grad(bool value) {
  if (node().producer != nullptr) throw AutodiffError("requires_grad can only be changed on leaf tensors");
  node().requires_grad = value;
  if (!value) node().grad.clear();
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node().shape, node().data, false);
}

template <typename T>
void Tape<T>::record(std::vector<detail::NodePtr<T>> inputs, detail::NodePtr<T> output, BackwardFn backward) {
  if (consumed_) throw AutodiffError("cannot record onto a tape that has already run backward");
  output->producer = this;
  entries_.push_back(Entry{std::move(inputs), std::move(output), std::move(backward)});
}

template <typename T>
bool Tape<T>::produced(const Tensor<T>& tensor) const {
  return tensor.defined() && tensor.node_ptr()->producer == this;
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw AutodiffError("backward needs a scalar loss, got shape " +
                        (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!produced(loss)) throw AutodiffError("loss was not recorded on this tape");
  if (consumed_) throw AutodiffError("tape already consumed by a previous backward pass");
  consumed_ = true;

  loss.node_ptr()->grad_buffer()[0] += T(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    // Outputs that never received gradient are not upstream of the loss.
    if (it->output->grad.empty()) continue;
    it->backward();
  }
}

namespace {
template <typename T>
thread_local Tape<T>* active_tape = nullptr;
}  // namespace

template <typename T>
TapeScope<T>::TapeScope(Tape<T>* tape) : previous_(active_tape<T>) {
  active_tape<T> = tape;
}

template <typename T>
TapeScope<T>::~TapeScope() {
  active_tape<T> = previous_;
}

template <typename T>
Tape<T>* TapeScope<T>::current() {
  return active_tape<T>;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template class TapeScope<float>;
template class TapeScope<double>;

}  // namespace igan
