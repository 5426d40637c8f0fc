#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "epf/errors.hpp"

namespace epf {

// Dense row-major matrix. Rows are observations, columns are features.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  void append_row(std::span<const double> values) {
    if (rows_ == 0 && cols_ == 0) cols_ = values.size();
    if (values.size() != cols_) {
      throw DimensionError("append_row: expected " + std::to_string(cols_) + " columns, got " +
                           std::to_string(values.size()));
    }
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
  }

  // Copy of rows [first, first + count).
  Matrix slice_rows(std::size_t first, std::size_t count) const {
    Matrix out;
    out.rows_ = count;
    out.cols_ = cols_;
    out.data_.assign(data_.begin() + static_cast<std::ptrdiff_t>(first * cols_),
                     data_.begin() + static_cast<std::ptrdiff_t>((first + count) * cols_));
    return out;
  }

  const std::vector<double>& data() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

}  // namespace epf
