#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace setpose::nn {

/// Dense row-major matrix of doubles. Vectors are 1xN matrices.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  /// Row-major values; throws ShapeError when the count does not match.
  Matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  Matrix transposed() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// a (n x k) * b (k x m)
Matrix matmul(const Matrix& a, const Matrix& b);
/// a (n x k) * b^T, b is (m x k)
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// a^T * b, a is (k x n), b is (k x m)
Matrix matmul_tn(const Matrix& a, const Matrix& b);

/// Row-wise max-subtracted softmax.
Matrix softmax_rows(const Matrix& z);

}  // namespace setpose::nn
