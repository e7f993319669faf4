#include "hccr/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>

namespace hccr {

namespace detail {

namespace {

struct BufferPool {
  std::unordered_map<std::size_t, std::vector<std::vector<double>>> by_size;
  std::size_t pooled_bytes = 0;
  static constexpr std::size_t kMaxPooledBytes = std::size_t{3} << 30;
};

BufferPool& pool() {
  thread_local BufferPool p;
  return p;
}

// pooling only pays off for buffers large enough to bypass the allocator's
// fast paths
constexpr std::size_t kMinPooledElements = 4096;

}  // namespace

std::vector<double> take_buffer(std::size_t n) {
  if (n >= kMinPooledElements) {
    auto& bucket = pool().by_size[n];
    if (!bucket.empty()) {
      std::vector<double> v = std::move(bucket.back());
      bucket.pop_back();
      pool().pooled_bytes -= n * sizeof(double);
      return v;
    }
  }
  return std::vector<double>(n);
}

void recycle_buffer(std::vector<double>&& v) {
  const std::size_t n = v.size();
  if (n < kMinPooledElements || n != v.capacity()) return;
  BufferPool& p = pool();
  if (p.pooled_bytes + n * sizeof(double) > BufferPool::kMaxPooledBytes) return;
  p.pooled_bytes += n * sizeof(double);
  p.by_size[n].push_back(std::move(v));
}

}  // namespace detail

void TensorImpl::ensure_grad() {
  if (grad.size() == data.size()) return;
  grad = detail::take_buffer(data.size());
  std::fill(grad.begin(), grad.end(), 0.0);
}

std::int64_t shape_size(const Shape& shape) {
  std::int64_t n = 1;
  for (std::int64_t extent : shape) {
    if (extent < 1) throw ShapeError("shape extent must be >= 1, got " + std::to_string(extent));
    n *= extent;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data) : impl_(std::make_shared<TensorImpl>()) {
  const std::int64_t n = shape_size(shape);
  if (n != static_cast<std::int64_t>(data.size())) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_str(shape) + " (" + std::to_string(n) + " elements)");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
}

Tensor Tensor::zeros(const Shape& shape) {
  return Tensor(shape, std::vector<double>(shape_size(shape), 0.0));
}

Tensor Tensor::full(const Shape& shape, double value) {
  return Tensor(shape, std::vector<double>(shape_size(shape), value));
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() needs a single-element tensor, shape is " + shape_str(shape()));
  return impl().data[0];
}

void Tensor::set_requires_grad(bool enabled) {
  impl().requires_grad = enabled;
  if (enabled) impl().ensure_grad();
}

std::span<const double> Tensor::grad() const {
  if (!grad_allocated()) throw Error("gradient not allocated; set_requires_grad first");
  return impl().grad;
}

std::span<double> Tensor::grad() {
  if (!grad_allocated()) throw Error("gradient not allocated; set_requires_grad first");
  return impl().grad;
}

double Tensor::grad_item() const {
  if (size() != 1) throw ShapeError("grad_item() needs a single-element tensor");
  return grad()[0];
}

void Tensor::zero_grad() {
  if (grad_allocated()) std::fill(impl().grad.begin(), impl().grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  return Tensor(impl().shape, impl().data);
}

void backward(const Tensor& root, Tape& tape) {
  if (root.size() != 1) {
    throw ShapeError("backward root must be a scalar, shape is " + shape_str(root.shape()));
  }
  if (tape.consumed_) throw Error("tape already consumed by a previous backward pass");
  tape.consumed_ = true;

  TensorImpl& r = *root.handle();
  if (r.requires_grad) {
    r.ensure_grad();
    r.grad[0] = 1.0;
  }
  for (auto it = tape.nodes_.rbegin(); it != tape.nodes_.rend(); ++it) {
    if (*it) (*it)();
    *it = nullptr;  // free saved activations as the pass walks back
  }
}

namespace detail {

void accumulate(TensorImpl& t, std::span<const double> g) {
  t.ensure_grad();
  double* dst = t.grad.data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

}  // namespace detail

}  // namespace hccr
