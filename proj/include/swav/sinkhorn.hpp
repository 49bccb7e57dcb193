#pragma once

// Entropic balanced assignment of a batch of features to prototypes.
// sinkhorn_codes turns a BxK score matrix into soft codes whose rows are
// distributions over prototypes, with equal prototype usage enforced by
// alternating row/column rescaling.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "swav/errors.hpp"
#include "swav/matrix.hpp"

namespace swav {

// One code row per sample, entries in [0,1], each row summing to 1.
using CodeMatrix = Mat;

struct SinkhornConfig {
  double eps = 0.05;  // entropic regularization
  int niters = 3;     // normalization rounds
  // Run the iteration on log-scalings instead of raw exponentials. Needed
  // when |scores| / eps approaches the double exponent range.
  bool log_domain = false;

  void validate() const {
    if (!(eps > 0.0)) {
      throw ConfigError("sinkhorn: eps must be positive, got " +
                        std::to_string(eps));
    }
    if (niters < 1) {
      throw ConfigError("sinkhorn: niters must be >= 1, got " +
                        std::to_string(niters));
    }
  }
};

namespace detail {

inline double logsumexp(const double* v, std::size_t n, std::size_t stride) {
  double mx = v[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, v[i * stride]);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i * stride] - mx);
  return mx + std::log(s);
}

// The iteration as written in the reference recipe: q = exp(scores^T / eps),
// normalize by the global sum, then alternate rows -> 1/K, columns -> 1/B.
// The final per-column renormalization turns each sample column into a unit
// sum distribution before transposing back to BxK.
inline Mat sinkhorn_linear(const Mat& scores, const SinkhornConfig& cfg) {
  const std::size_t b = scores.rows;
  const std::size_t k = scores.cols;

  double max_abs = 0.0;
  for (double v : scores.data) max_abs = std::max(max_abs, std::abs(v));
  // exp must survive both the entries and their global sum.
  const double limit = 700.0 - std::log(static_cast<double>(b * k));
  if (max_abs / cfg.eps > limit) {
    throw NumericError(
        "sinkhorn_codes: |scores|/eps = " + std::to_string(max_abs / cfg.eps) +
        " would overflow exp; enable the log_domain config flag");
  }

  Mat q(k, b);  // prototypes x samples
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double v = std::exp(scores.at(i, j) / cfg.eps);
      q.at(j, i) = v;
      total += v;
    }
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw NumericError(
        "sinkhorn_codes: exp(scores/eps) vanished or overflowed; enable the "
        "log_domain config flag");
  }
  for (double& v : q.data) v /= total;

  const double r = 1.0 / static_cast<double>(k);
  const double c = 1.0 / static_cast<double>(b);
  std::vector<double> col_sum(b);
  for (int it = 0; it < cfg.niters; ++it) {
    for (std::size_t j = 0; j < k; ++j) {
      double u = 0.0;
      double* row = q.row_ptr(j);
      for (std::size_t i = 0; i < b; ++i) u += row[i];
      if (!(u > 0.0)) {
        throw NumericError("sinkhorn_codes: prototype row " +
                           std::to_string(j) +
                           " underflowed to zero; enable the log_domain flag");
      }
      const double scale = r / u;
      for (std::size_t i = 0; i < b; ++i) row[i] *= scale;
    }
    std::fill(col_sum.begin(), col_sum.end(), 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      const double* row = q.row_ptr(j);
      for (std::size_t i = 0; i < b; ++i) col_sum[i] += row[i];
    }
    for (std::size_t i = 0; i < b; ++i) {
      if (!(col_sum[i] > 0.0)) {
        throw NumericError("sinkhorn_codes: sample column " +
                           std::to_string(i) +
                           " underflowed to zero; enable the log_domain flag");
      }
      col_sum[i] = c / col_sum[i];
    }
    for (std::size_t j = 0; j < k; ++j) {
      double* row = q.row_ptr(j);
      for (std::size_t i = 0; i < b; ++i) row[i] *= col_sum[i];
    }
  }

  // Divide each sample column by its sum and transpose.
  std::fill(col_sum.begin(), col_sum.end(), 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    const double* row = q.row_ptr(j);
    for (std::size_t i = 0; i < b; ++i) col_sum[i] += row[i];
  }
  Mat codes(b, k);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < k; ++j) codes.at(i, j) = q.at(j, i) / col_sum[i];
  }
  return codes;
}

// Same pipeline in the log domain: q is represented as
// log q = scores^T/eps + alpha_j + beta_i with per-row / per-column shifts.
inline Mat sinkhorn_log(const Mat& scores, const SinkhornConfig& cfg) {
  const std::size_t b = scores.rows;
  const std::size_t k = scores.cols;

  Mat lq(k, b);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < k; ++j) lq.at(j, i) = scores.at(i, j) / cfg.eps;

  std::vector<double> alpha(k, 0.0), beta(b, 0.0);
  // Global-sum normalization: a constant shift, absorbed into alpha.
  {
    std::vector<double> shifted(k * b);
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t i = 0; i < b; ++i)
        shifted[j * b + i] = lq.at(j, i);
    const double lz = logsumexp(shifted.data(), k * b, 1);
    for (std::size_t j = 0; j < k; ++j) alpha[j] -= lz;
  }

  const double lr = -std::log(static_cast<double>(k));
  const double lc = -std::log(static_cast<double>(b));
  std::vector<double> tmp(std::max(b, k));
  for (int it = 0; it < cfg.niters; ++it) {
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t i = 0; i < b; ++i) tmp[i] = lq.at(j, i) + beta[i];
      const double lu = alpha[j] + logsumexp(tmp.data(), b, 1);
      alpha[j] += lr - lu;
    }
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < k; ++j) tmp[j] = lq.at(j, i) + alpha[j];
      const double lv = beta[i] + logsumexp(tmp.data(), k, 1);
      beta[i] += lc - lv;
    }
  }

  Mat codes(b, k);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < k; ++j) tmp[j] = lq.at(j, i) + alpha[j];
    const double lcol = logsumexp(tmp.data(), k, 1);
    for (std::size_t j = 0; j < k; ++j) codes.at(i, j) = std::exp(tmp[j] - lcol);
  }
  return codes;
}

}  // namespace detail

// Soft codes for a BxK score matrix. Each returned row sums to exactly 1; at
// high iteration counts the batch-mean code approaches the uniform vector.
inline CodeMatrix sinkhorn_codes(const Mat& scores, const SinkhornConfig& cfg) {
  cfg.validate();
  if (scores.rows == 0 || scores.cols == 0) {
    throw ShapeError("sinkhorn_codes: empty score matrix " + scores.shape_str());
  }
  check_finite(scores, "sinkhorn_codes scores");
  return cfg.log_domain ? detail::sinkhorn_log(scores, cfg)
                        : detail::sinkhorn_linear(scores, cfg);
}

// One-hot rows at each row's argmax; ties go to the lowest prototype index.
inline CodeMatrix round_to_hard(const CodeMatrix& codes) {
  Mat out(codes.rows, codes.cols);
  for (std::size_t i = 0; i < codes.rows; ++i) {
    const double* r = codes.row_ptr(i);
    std::size_t best = 0;
    for (std::size_t j = 1; j < codes.cols; ++j) {
      if (r[j] > r[best]) best = j;
    }
    out.at(i, best) = 1.0;
  }
  return out;
}

// -sum_ij q_ij log q_ij with 0 log 0 = 0.
inline double entropy(const Mat& q) {
  double h = 0.0;
  for (double v : q.data) {
    if (v < 0.0) {
      throw DegenerateInputError("entropy: negative entry " +
                                 std::to_string(v));
    }
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

inline double entropy(const std::vector<double>& q) {
  return entropy(Mat(1, q.size(), q));
}

// sum_ij q_ij scores_ij + eps * H(q); the quantity the codes maximize.
inline double transport_objective(const Mat& scores, const Mat& q, double eps) {
  if (!scores.same_shape(q)) {
    throw ShapeError("transport_objective: scores " + scores.shape_str() +
                     " vs q " + q.shape_str());
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < q.data.size(); ++i) dot += q.data[i] * scores.data[i];
  return dot + eps * entropy(q);
}

}  // namespace swav
