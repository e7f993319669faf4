#ifndef HCCR_TENSOR_HPP
#define HCCR_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "hccr/error.hpp"

namespace hccr {

/// Ordered extents, all >= 1. An empty shape is a rank-0 scalar.
using Shape = std::vector<std::int64_t>;

/// Product of extents; throws ShapeError on a non-positive extent.
std::int64_t shape_size(const Shape& shape);

std::string shape_str(const Shape& shape);

namespace detail {
/// Recycling pool for tensor buffers. Layer shapes recur every training step;
/// reusing exact-size buffers avoids the mmap/page-fault churn of repeatedly
/// allocating multi-megabyte vectors. Thread-local, bounded, value-neutral.
std::vector<double> take_buffer(std::size_t n);
void recycle_buffer(std::vector<double>&& v);
}  // namespace detail

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until requires_grad; then data.size() zeros

  void ensure_grad();

  ~TensorImpl() {
    detail::recycle_buffer(std::move(data));
    detail::recycle_buffer(std::move(grad));
  }
};

/// N-dimensional array of 64-bit reals with an optional accumulated gradient.
/// Cheap shared handle; op results are freshly allocated and never mutated
/// after construction, so handles are safe to pass between threads.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, double value);
  static Tensor scalar(double value) { return Tensor({}, {value}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl().shape; }
  int rank() const { return static_cast<int>(impl().shape.size()); }
  std::int64_t dim(int axis) const { return impl().shape.at(axis); }
  std::int64_t size() const { return static_cast<std::int64_t>(impl().data.size()); }

  std::span<const double> data() const { return impl().data; }
  std::span<double> data() { return impl().data; }

  /// Value of a single-element tensor.
  double item() const;

  bool requires_grad() const { return impl().requires_grad; }
  void set_requires_grad(bool enabled);

  bool grad_allocated() const { return !impl().grad.empty(); }
  std::span<const double> grad() const;
  std::span<double> grad();
  double grad_item() const;
  void zero_grad();

  /// Deep copy; the copy does not require grad.
  Tensor clone() const;

  const std::shared_ptr<TensorImpl>& handle() const { return impl_; }

 private:
  TensorImpl& impl() const {
    if (!impl_) throw Error("use of an undefined tensor");
    return *impl_;
  }
  std::shared_ptr<TensorImpl> impl_;
};

/// Records the forward computation as a sequence of backward rules in
/// topological order (operands are always created before results). A tape and
/// its backward pass are single-threaded; concurrent training needs
/// independent tapes.
class Tape {
 public:
  Tape() = default;
  explicit Tape(bool recording) : recording_(recording) {}

  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }

  void record(std::function<void()> backward_rule) {
    nodes_.push_back(std::move(backward_rule));
  }

  std::size_t node_count() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  /// Non-smooth forward events (leaky_relu at exactly 0, maxpool ties) seen by
  /// ops run against this tape; grad_check surfaces these as kink warnings.
  void note_nonsmooth(std::size_t events = 1) { nonsmooth_ += events; }
  std::size_t nonsmooth_events() const { return nonsmooth_; }

  /// Widens kink detection from exact hits to a band: values within this
  /// distance of a non-smooth point count as events. Finite-difference suites
  /// use it to redraw trials that landed too close to a kink.
  void set_kink_tolerance(double tol) { kink_tolerance_ = tol; }
  double kink_tolerance() const { return kink_tolerance_; }

  void clear() {
    nodes_.clear();
    consumed_ = false;
    nonsmooth_ = 0;
  }

  friend void backward(const Tensor& root, Tape& tape);

 private:
  std::vector<std::function<void()>> nodes_;
  bool recording_ = true;
  bool consumed_ = false;
  std::size_t nonsmooth_ = 0;
  double kink_tolerance_ = 0.0;
};

/// Reverse pass: seeds the scalar root's gradient with 1.0 and runs every
/// recorded rule exactly once in reverse order, summing gradients over fan-out
/// paths. Leaves that do not feed the root keep a zero gradient. Each node is
/// released as soon as it has run, so forward activations free incrementally.
void backward(const Tensor& root, Tape& tape);

namespace detail {
/// grad += g, elementwise. Allocates the grad buffer on first use.
void accumulate(TensorImpl& t, std::span<const double> g);
}  // namespace detail

}  // namespace hccr

#endif
