#include "metalab/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "metalab/errors.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace metalab {
namespace {
thread_local bool g_grad_enabled = true;

#if defined(__GLIBC__)
// Activation buffers of tens of megabytes are allocated and freed on every
// step. glibc would serve each one with a fresh mmap and fault every page in
// again; keeping them on the heap lets later steps reuse the pages.
const bool g_allocator_tuned = [] {
  mallopt(M_MMAP_MAX, 0);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return true;
}();
#endif
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << " x ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool enabled) { g_grad_enabled = enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("Tensor: shape " + shape_str(shape) + " does not match " +
                     std::to_string(data.size()) + " elements");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw ShapeError("Tensor::dim: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(impl_->shape));
  }
  return impl_->shape[axis];
}

template <typename T>
T Tensor<T>::item() const {
  if (impl_->data.size() != 1) {
    throw ShapeError("Tensor::item on " + shape_str(impl_->shape));
  }
  return impl_->data[0];
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(impl_->shape, impl_->data, false);
}

template <typename T>
Tensor<T> Tensor<T>::from_impl(std::shared_ptr<Impl> impl) {
  Tensor t;
  t.impl_ = std::move(impl);
  return t;
}

template <typename T>
void Tensor<T>::backward() const {
  if (impl_->data.size() != 1) {
    throw ShapeError("backward() needs a single-element tensor, got " + shape_str(impl_->shape));
  }
  if (!impl_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<Impl*> order;
  std::unordered_set<Impl*> visited;
  std::vector<std::pair<Impl*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Impl* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Gradients are allocated on first use; an intermediate's gradient is
  // released as soon as it has been propagated, which bounds peak memory to
  // roughly one extra activation per live edge of the graph.
  auto ensure_grad = [](Impl* node) {
    if (node->grad.size() != node->data.size()) node->grad.assign(node->data.size(), T(0));
  };
  if (impl_->backward_fn) {
    impl_->grad.assign(1, T(0));
  } else {
    ensure_grad(impl_.get());
  }
  impl_->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Impl* node = *it;
    if (!node->backward_fn || node->grad.empty()) continue;
    for (const auto& parent : node->parents)
      if (parent->requires_grad) ensure_grad(parent.get());
    node->backward_fn(*node);
    if (node != impl_.get()) std::vector<T>().swap(node->grad);
  }
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const std::vector<Tensor<T>>& inputs,
                      BackwardFn<T> backward_fn) {
  Tensor<T> out(std::move(shape), std::move(data), false);
  if (!GradMode::enabled()) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor<T>& t) { return t.defined() && t.requires_grad(); });
  if (!any) return out;
  auto& impl = *out.impl();
  impl.requires_grad = true;
  for (const auto& in : inputs) {
    if (in.defined() && in.requires_grad()) impl.parents.push_back(in.impl());
  }
  impl.backward_fn = std::move(backward_fn);
  return out;
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_result(Shape, std::vector<float>, const std::vector<Tensor<float>>&,
                                   BackwardFn<float>);
template Tensor<double> make_result(Shape, std::vector<double>, const std::vector<Tensor<double>>&,
                                    BackwardFn<double>);

}  // namespace metalab
