#pragma once

// Dense row-major matrices and the handful of reductions everything else is
// built on. 64-bit floats throughout; matrices are plain values.

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "swav/errors.hpp"

namespace swav {

struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major, data.size() == rows * cols

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  Mat(std::size_t r, std::size_t c, std::vector<double> values)
      : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != rows * cols) {
      throw ShapeError("Mat: payload of " + std::to_string(data.size()) +
                       " values does not fill a " + shape_str() + " matrix");
    }
  }

  static Mat zeros(std::size_t r, std::size_t c) { return Mat(r, c); }

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
  }

  static Mat from_rows(std::initializer_list<std::initializer_list<double>> rs) {
    Mat m;
    m.rows = rs.size();
    m.cols = rs.size() ? rs.begin()->size() : 0;
    m.data.reserve(m.rows * m.cols);
    for (const auto& r : rs) {
      if (r.size() != m.cols) throw ShapeError("Mat::from_rows: ragged rows");
      m.data.insert(m.data.end(), r.begin(), r.end());
    }
    return m;
  }

  double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  double* row_ptr(std::size_t i) { return data.data() + i * cols; }
  const double* row_ptr(std::size_t i) const { return data.data() + i * cols; }

  std::vector<double> row(std::size_t i) const {
    return std::vector<double>(row_ptr(i), row_ptr(i) + cols);
  }

  void set_row(std::size_t i, const std::vector<double>& v) {
    if (v.size() != cols) throw ShapeError("Mat::set_row: length mismatch");
    std::copy(v.begin(), v.end(), row_ptr(i));
  }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  std::string shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
  }

  Mat& operator+=(const Mat& o) {
    if (!same_shape(o)) {
      throw ShapeError("Mat +=: shape " + shape_str() + " vs " + o.shape_str());
    }
    for (std::size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
    return *this;
  }

  Mat& operator*=(double s) {
    for (double& v : data) v *= s;
    return *this;
  }
};

inline void check_finite(const Mat& m, const std::string& what) {
  for (double v : m.data) {
    if (!std::isfinite(v)) {
      throw NumericError(what + ": non-finite value in " + m.shape_str() +
                         " matrix");
    }
  }
}

inline Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols != b.rows) {
    throw ShapeError("matmul: inner dimensions disagree, " + a.shape_str() +
                     " x " + b.shape_str());
  }
  Mat out(a.rows, b.cols);
  // ikj order keeps the inner loop streaming over contiguous rows of b.
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row_ptr(i);
    double* orow = out.row_ptr(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.row_ptr(k);
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

inline Mat transpose(const Mat& m) {
  Mat out(m.cols, m.rows);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) out.at(j, i) = m.at(i, j);
  return out;
}

inline double row_norm(const Mat& m, std::size_t i) {
  double s = 0.0;
  const double* r = m.row_ptr(i);
  for (std::size_t j = 0; j < m.cols; ++j) s += r[j] * r[j];
  return std::sqrt(s);
}

// Scales every row to unit Euclidean norm. Rows with norm below 1e-12 are
// rejected rather than silently blown up.
inline Mat l2_normalize_rows(const Mat& m) {
  Mat out = m;
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double n = row_norm(m, i);
    if (n < 1e-12) {
      throw DegenerateInputError("l2_normalize_rows: row " + std::to_string(i) +
                                 " has near-zero norm " + std::to_string(n));
    }
    double* r = out.row_ptr(i);
    for (std::size_t j = 0; j < m.cols; ++j) r[j] /= n;
  }
  return out;
}

// Row-wise softmax of m / tau with per-row max subtraction.
inline Mat softmax_rows(const Mat& m, double tau) {
  if (!(tau > 0.0)) {
    throw ConfigError("softmax_rows: temperature must be positive, got " +
                      std::to_string(tau));
  }
  Mat out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double* r = m.row_ptr(i);
    double mx = r[0];
    for (std::size_t j = 1; j < m.cols; ++j) mx = std::max(mx, r[j]);
    double sum = 0.0;
    double* o = out.row_ptr(i);
    for (std::size_t j = 0; j < m.cols; ++j) {
      o[j] = std::exp((r[j] - mx) / tau);
      sum += o[j];
    }
    for (std::size_t j = 0; j < m.cols; ++j) o[j] /= sum;
  }
  return out;
}

// Row-wise log-softmax of m / tau, same stabilization as softmax_rows.
inline Mat log_softmax_rows(const Mat& m, double tau) {
  if (!(tau > 0.0)) {
    throw ConfigError("log_softmax_rows: temperature must be positive, got " +
                      std::to_string(tau));
  }
  Mat out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double* r = m.row_ptr(i);
    double mx = r[0];
    for (std::size_t j = 1; j < m.cols; ++j) mx = std::max(mx, r[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) sum += std::exp((r[j] - mx) / tau);
    const double lse = std::log(sum);
    double* o = out.row_ptr(i);
    for (std::size_t j = 0; j < m.cols; ++j) o[j] = (r[j] - mx) / tau - lse;
  }
  return out;
}

}  // namespace swav
