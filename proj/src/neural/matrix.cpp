#include "recurrent_octomap/neural/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "recurrent_octomap/common/errors.hpp"

namespace rom {

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw ArgumentError("Matrix::from_rows: ragged rows");
    std::copy(row.begin(), row.end(), m.row(i++).begin());
  }
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const { return rom::all_finite(data_); }

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void gemv(const Matrix& w, std::span<const double> x, std::span<double> y,
          bool accumulate) {
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double v = dot(w.row(r), x);
    y[r] = accumulate ? y[r] + v : v;
  }
}

void gemv_transposed_add(const Matrix& w, std::span<const double> g,
                         std::span<double> y) {
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    const auto row = w.row(r);
    for (std::size_t c = 0; c < w.cols(); ++c) y[c] += gr * row[c];
  }
}

void outer_add(Matrix& w, std::span<const double> g, std::span<const double> x) {
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    auto row = w.row(r);
    for (std::size_t c = 0; c < w.cols(); ++c) row[c] += gr * x[c];
  }
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace rom
