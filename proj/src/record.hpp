#pragma once

// Internal helpers shared by the op implementations: building an op result
// and registering its backward rule on the active tape.

#include <span>
#include <utility>
#include <vector>

#include "igan/tensor.hpp"

namespace igan::detail {

/// Gradient buffer of `t` if it participates in autodiff, else an empty span.
template <typename T>
std::span<T> grad_sink(const Tensor<T>& t) {
  if (!t.requires_grad()) return {};
  return t.node_ptr()->grad_buffer();
}

/// Wraps (shape, data) into a tensor and, when a tape is active and any input
/// requires grad, records `backward(output_grad)` for it.
template <typename T, typename F>
Tensor<T> finish(Shape shape, std::vector<T> data, const std::vector<Tensor<T>>& inputs, F&& backward) {
  Tensor<T> out(std::move(shape), std::move(data));
  Tape<T>* tape = TapeScope<T>::current();
  if (tape == nullptr) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;

  auto out_node = out.node_ptr();
  out_node->requires_grad = true;
  std::vector<NodePtr<T>> nodes;
  nodes.reserve(inputs.size());
  for (const auto& in : inputs) nodes.push_back(in.node_ptr());
  Node<T>* raw = out_node.get();
  tape->record(std::move(nodes), std::move(out_node),
               [raw, fn = std::forward<F>(backward)]() { fn(std::span<const T>(raw->grad)); });
  return out;
}

}  // namespace igan::detail
