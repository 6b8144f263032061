#pragma once

#include <cstddef>
#include <cstdint>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace recnet {

using Shape = std::vector<int64_t>;

/// Cache-line aligned storage. Vectorized reductions peel differently
/// depending on the start address, so a fixed alignment keeps results
/// bitwise reproducible from run to run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, size_t) noexcept { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using AlignedBuffer = std::vector<double, AlignedAllocator<double>>;

std::string shape_str(const Shape& shape);
int64_t shape_numel(const Shape& shape);

/// Dense row-major array of doubles. Feature maps use the (batch, height,
/// width, channels) layout; parameters and statistics use whatever rank
/// their owner documents.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int axis) const;
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // NHWC accessors; only valid on rank-4 tensors.
  int64_t batch() const { return shape_[0]; }
  int64_t height() const { return shape_[1]; }
  int64_t width() const { return shape_[2]; }
  int64_t channels() const { return shape_[3]; }
  double& at(int64_t n, int64_t y, int64_t x, int64_t c) {
    return data_[static_cast<size_t>(((n * shape_[1] + y) * shape_[2] + x) * shape_[3] + c)];
  }
  const double& at(int64_t n, int64_t y, int64_t x, int64_t c) const {
    return data_[static_cast<size_t>(((n * shape_[1] + y) * shape_[2] + x) * shape_[3] + c)];
  }

  void fill(double v);
  /// Elementwise this += other (same shape).
  void add_(const Tensor& other);
  void scale_(double s);

  double sum() const;
  double max_abs() const;
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  /// Returns a copy with a different shape and the same element count.
  Tensor reshaped(Shape shape) const;

 private:
  Shape shape_;
  AlignedBuffer data_;
};

/// Throws std::invalid_argument naming `what` unless the tensor is rank 4.
void require_nhwc(const Tensor& t, const char* what);
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace recnet
