#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "cellflow/error.hpp"

namespace cellflow {

// Dense row-major 2-D array. Row index is y (down), column index is x (right).
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Grid(std::size_t rows, std::size_t cols, std::vector<T> values)
      : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows * cols) {
      throw DimensionError("grid value count does not match rows*cols");
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  template <typename U>
  bool same_shape(const Grid<U>& other) const noexcept {
    return rows_ == other.rows() && cols_ == other.cols();
  }

  bool operator==(const Grid&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using RealGrid = Grid<double>;

inline bool all_finite(const RealGrid& g) {
  for (double v : g.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// A single grayscale frame with intensities in [0,1].
class GrayFrame {
 public:
  GrayFrame() = default;
  explicit GrayFrame(RealGrid pixels) : pixels_(std::move(pixels)) {
    if (pixels_.rows() == 0 || pixels_.cols() == 0) {
      throw DimensionError("frame must have positive height and width");
    }
    for (double v : pixels_.values()) {
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        throw NumericError("frame intensities must be finite and within [0,1]");
      }
    }
  }

  std::size_t height() const noexcept { return pixels_.rows(); }
  std::size_t width() const noexcept { return pixels_.cols(); }
  double operator()(std::size_t r, std::size_t c) const { return pixels_(r, c); }
  const RealGrid& pixels() const noexcept { return pixels_; }

  bool same_shape(const GrayFrame& other) const noexcept {
    return pixels_.same_shape(other.pixels_);
  }

 private:
  RealGrid pixels_;
};

}  // namespace cellflow
