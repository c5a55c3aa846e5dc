#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace rom {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  void fill(double v);
  bool all_finite() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);

/// y = W x (+ y when accumulate). W is out x in.
void gemv(const Matrix& w, std::span<const double> x, std::span<double> y,
          bool accumulate = false);

/// y += W^T g. W is out x in, g has `out` entries, y has `in`.
void gemv_transposed_add(const Matrix& w, std::span<const double> g,
                         std::span<double> y);

/// W += g x^T (rank-one update).
void outer_add(Matrix& w, std::span<const double> g, std::span<const double> x);

bool all_finite(std::span<const double> v);

}  // namespace rom
