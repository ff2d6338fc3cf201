#ifndef CCL_CORE_TENSOR_HPP
#define CCL_CORE_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <new>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ccl {

/// Raised when an argument violates a documented precondition
/// (shape mismatch, out-of-range configuration, non-finite input, ...).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

/// Dense NCHW extent. Every tensor in the library is four dimensional;
/// scalars are 1x1x1x1 and per-channel vectors are 1xCx1x1.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  constexpr std::size_t numel() const noexcept {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) *
           static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  constexpr std::size_t plane() const noexcept {
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    std::ostringstream os;
    os << '[' << n << 'x' << c << 'x' << h << 'x' << w << ']';
    return os.str();
  }
};

/// 64-byte aligned storage. Eigen picks vectorised code paths by pointer
/// alignment, so a fixed alignment keeps float results identical from run
/// to run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <class T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.numel(), fill) {
    require(shape.n >= 0 && shape.c >= 0 && shape.h >= 0 && shape.w >= 0,
            "tensor extents must be non-negative, got " + shape.str());
  }
  Tensor(Shape shape, Buffer<T> values) : shape_(shape), data_(std::move(values)) {
    require(data_.size() == shape.numel(), "tensor value count does not match shape " + shape.str());
  }
  Tensor(Shape shape, const std::vector<T>& values) : Tensor(shape, Buffer<T>(values.begin(), values.end())) {}

  static Tensor scalar(T v) { return Tensor(Shape{1, 1, 1, 1}, v); }

  const Shape& shape() const noexcept { return shape_; }
  int n() const noexcept { return shape_.n; }
  int c() const noexcept { return shape_.c; }
  int h() const noexcept { return shape_.h; }
  int w() const noexcept { return shape_.w; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::size_t index(int n, int c, int y, int x) const noexcept {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& operator()(int n, int c, int y, int x) noexcept { return data_[index(n, c, y, x)]; }
  const T& operator()(int n, int c, int y, int x) const noexcept { return data_[index(n, c, y, x)]; }

  T* plane(int n, int c) noexcept { return data_.data() + index(n, c, 0, 0); }
  const T* plane(int n, int c) const noexcept { return data_.data() + index(n, c, 0, 0); }

  Tensor& fill(T v) {
    std::fill(data_.begin(), data_.end(), v);
    return *this;
  }

  /// Reinterprets the extent without touching data.
  Tensor reshaped(Shape shape) const {
    require(shape.numel() == data_.size(), "cannot reshape " + shape_.str() + " to " + shape.str());
    return Tensor(shape, data_);
  }

  template <class U>
  Tensor<U> cast() const {
    Buffer<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape_, std::move(out));
  }

  /// Copies sample `i` of a batch into a standalone 1xCxHxW tensor.
  Tensor sample(int i) const {
    require(i >= 0 && i < shape_.n, "sample index out of range");
    const std::size_t stride = static_cast<std::size_t>(shape_.c) * shape_.plane();
    Shape s = shape_;
    s.n = 1;
    return Tensor(s, Buffer<T>(data_.begin() + i * stride, data_.begin() + (i + 1) * stride));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  double sum() const {
    double acc = 0.0;
    for (T v : data_) acc += static_cast<double>(v);
    return acc;
  }
  double mean() const { return data_.empty() ? 0.0 : sum() / static_cast<double>(data_.size()); }

  double max_abs_diff(const Tensor& other) const {
    require(shape_ == other.shape_, "shape mismatch " + shape_.str() + " vs " + other.shape_.str());
    double m = 0.0;
    for (std::size_t i = 0; i < data_.size(); ++i)
      m = std::max(m, std::abs(static_cast<double>(data_[i]) - static_cast<double>(other.data_[i])));
    return m;
  }

  Tensor& operator+=(const Tensor& other) {
    require(shape_ == other.shape_, "shape mismatch in += " + shape_.str() + " vs " + other.shape_.str());
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

 private:
  Shape shape_{};
  Buffer<T> data_;
};

/// Stacks 1xCxHxW tensors into an NxCxHxW batch.
template <class T>
Tensor<T> stack(std::span<const Tensor<T>> items) {
  require(!items.empty(), "cannot stack an empty list");
  Shape s = items.front().shape();
  require(s.n == 1, "stack expects single-sample tensors");
  Buffer<T> out;
  out.reserve(s.numel() * items.size());
  for (const auto& t : items) {
    require(t.shape() == s, "stack shape mismatch " + t.shape().str() + " vs " + s.str());
    out.insert(out.end(), t.values().begin(), t.values().end());
  }
  s.n = static_cast<int>(items.size());
  return Tensor<T>(s, std::move(out));
}

}  // namespace ccl

#endif  // CCL_CORE_TENSOR_HPP
