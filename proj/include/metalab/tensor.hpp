#pragma once

// Dense row-major tensors with dynamic reverse-mode differentiation.
//
// Every op produces a node holding its inputs and a backward closure; calling
// backward() on a scalar walks the graph in reverse topological order and
// accumulates into the `grad` buffer of every node that requires a gradient.
// Instantiated for float (training) and double (gradient checks).

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace metalab {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Thread-local switch; while disabled, ops record no graph.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool enabled);
};

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  // Reads self.grad = d(root)/d(self) (and self.data if needed) and
  // accumulates into the parents' grad buffers.
  std::function<void(const TensorImpl& self)> backward_fn;
};

}  // namespace detail

template <typename T>
class Tensor {
 public:
  using value_type = T;
  using Impl = detail::TensorImpl<T>;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const T> data() const { return impl_->data; }
  std::span<T> mutable_data() { return impl_->data; }
  T at(std::size_t flat) const { return impl_->data.at(flat); }
  T item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool value) { impl_->requires_grad = value; }
  bool is_leaf() const { return !impl_->backward_fn; }
  bool has_grad() const { return !impl_->grad.empty(); }
  // Empty span when backward never reached this node.
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> mutable_grad() { return impl_->grad; }
  void zero_grad();

  // Seeds d(this)/d(this) = 1; requires a single-element tensor.
  void backward() const;

  // New leaf with a copy of the data and no history.
  Tensor detach() const;

  const std::shared_ptr<Impl>& impl() const { return impl_; }
  static Tensor from_impl(std::shared_ptr<Impl> impl);

 private:
  std::shared_ptr<Impl> impl_;
};

// Builds the result node of an op. The closure and parents are only kept when
// grad mode is on and at least one input requires a gradient.
template <typename T>
using BackwardFn = std::function<void(const detail::TensorImpl<T>& self)>;

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const std::vector<Tensor<T>>& inputs,
                      BackwardFn<T> backward_fn);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace metalab
