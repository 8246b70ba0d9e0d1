#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "cdgan/error.hpp"

namespace cdgan {

// NCHW extents. Vectors are stored as (n, features, 1, 1).
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  [[nodiscard]] constexpr std::size_t size() const noexcept {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  [[nodiscard]] constexpr std::size_t sample_size() const noexcept {
    return static_cast<std::size_t>(c) * h * w;
  }
  [[nodiscard]] constexpr std::size_t plane() const noexcept {
    return static_cast<std::size_t>(h) * w;
  }
  [[nodiscard]] constexpr Shape with_batch(int batch) const noexcept {
    return {batch, c, h, w};
  }

  friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) + "," +
         std::to_string(s.w) + ")";
}

inline std::ostream& operator<<(std::ostream& os, const Shape& s) { return os << to_string(s); }

// Dense, owning, contiguous NCHW array.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(checked(shape)), data_(shape.size(), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(checked(shape)), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      throw InputError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                       to_string(shape_));
    }
  }

  [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  [[nodiscard]] T* data() noexcept { return data_.data(); }
  [[nodiscard]] const T* data() const noexcept { return data_.data(); }
  [[nodiscard]] std::span<T> span() noexcept { return data_; }
  [[nodiscard]] std::span<const T> span() const noexcept { return data_; }
  [[nodiscard]] std::vector<T>& storage() noexcept { return data_; }
  [[nodiscard]] const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at(int n, int c, int h, int w) noexcept { return data_[index(n, c, h, w)]; }
  const T& at(int n, int c, int h, int w) const noexcept { return data_[index(n, c, h, w)]; }

  [[nodiscard]] std::size_t index(int n, int c, int h, int w) const noexcept {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  // Pointer to the first element of sample n.
  T* sample(int n) noexcept { return data_.data() + static_cast<std::size_t>(n) * shape_.sample_size(); }
  const T* sample(int n) const noexcept {
    return data_.data() + static_cast<std::size_t>(n) * shape_.sample_size();
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  // Same data, new extents with equal element count.
  [[nodiscard]] Tensor reshaped(Shape s) const {
    if (s.size() != size()) {
      throw InputError("cannot reshape " + to_string(shape_) + " to " + to_string(s));
    }
    return Tensor(s, data_);
  }

  // Copy of samples [first, first + count).
  [[nodiscard]] Tensor slice_batch(int first, int count) const {
    if (first < 0 || count < 0 || first + count > shape_.n) {
      throw InputError("batch slice out of range");
    }
    const auto ss = shape_.sample_size();
    std::vector<T> out(data_.begin() + static_cast<std::ptrdiff_t>(first * ss),
                       data_.begin() + static_cast<std::ptrdiff_t>((first + count) * ss));
    return Tensor(shape_.with_batch(count), std::move(out));
  }

  template <typename U>
  [[nodiscard]] Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape_, std::move(out));
  }

  [[nodiscard]] bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  // Runs before the storage is sized, so a negative extent never reaches the allocator.
  static Shape checked(Shape s) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) throw InputError("negative tensor extent " + to_string(s));
    return s;
  }

  Shape shape_{0, 0, 0, 0};
  std::vector<T> data_;
};

// Concatenate along the batch axis. All parts must share per-sample extents.
template <typename T>
Tensor<T> stack_batch(std::span<const Tensor<T>> parts) {
  if (parts.empty()) {
    throw InputError("stack_batch needs at least one tensor");
  }
  Shape s = parts.front().shape();
  int total = 0;
  for (const auto& p : parts) {
    if (p.shape().with_batch(1) != s.with_batch(1)) {
      throw InputError("stack_batch shape mismatch: " + to_string(p.shape()) + " vs " + to_string(s));
    }
    total += p.shape().n;
  }
  std::vector<T> out;
  out.reserve(s.sample_size() * total);
  for (const auto& p : parts) {
    out.insert(out.end(), p.storage().begin(), p.storage().end());
  }
  return Tensor<T>(s.with_batch(total), std::move(out));
}

template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& parts) {
  return stack_batch(std::span<const Tensor<T>>(parts));
}

template <typename T>
double l2_norm(std::span<const T> v) {
  double acc = 0.0;
  for (T x : v) {
    acc += static_cast<double>(x) * static_cast<double>(x);
  }
  return std::sqrt(acc);
}

template <typename T>
double l2_norm(const Tensor<T>& t) {
  return l2_norm(t.span());
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw InputError("max_abs_diff shape mismatch");
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

}  // namespace cdgan
