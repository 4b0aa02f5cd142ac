#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace robustdyn {

// Dense row-major matrix. Rows are contiguous so a row can be handed to the
// kernels as a span.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) {
    assert(i < rows && j < cols);
    return a[i * cols + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    assert(i < rows && j < cols);
    return a[i * cols + j];
  }
  std::span<double> row(std::size_t i) { return {a.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {a.data() + i * cols, cols}; }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

}  // namespace robustdyn
