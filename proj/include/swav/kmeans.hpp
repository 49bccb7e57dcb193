#pragma once

// Spherical k-means over unit-norm rows: assignment by maximum dot product,
// centroid update by L2-normalized mean.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "swav/errors.hpp"
#include "swav/matrix.hpp"
#include "swav/rng.hpp"

namespace swav {

struct KMeansConfig {
  std::size_t k = 1;
  int iters = 10;
  std::uint64_t seed = 0;

  void validate() const {
    if (k < 1) throw ConfigError("kmeans: k must be >= 1");
    if (iters < 1) throw ConfigError("kmeans: iters must be >= 1");
  }
};

struct KMeansResult {
  Mat centroids;                          // k x D, unit rows
  std::vector<int> assignments;           // one label per input row
  std::vector<double> objective_history;  // sum_n z_n . c_{a(n)} per round
};

namespace detail {

inline int kmeans_nearest(const Mat& features, std::size_t n, const Mat& centroids) {
  const double* z = features.row_ptr(n);
  int best = 0;
  double best_dot = -1e300;
  for (std::size_t c = 0; c < centroids.rows; ++c) {
    const double* ctr = centroids.row_ptr(c);
    double d = 0.0;
    for (std::size_t j = 0; j < features.cols; ++j) d += z[j] * ctr[j];
    if (d > best_dot) {
      best_dot = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

inline double kmeans_objective(const Mat& features, const Mat& centroids,
                               const std::vector<int>& assignments) {
  double obj = 0.0;
  for (std::size_t n = 0; n < features.rows; ++n) {
    const double* z = features.row_ptr(n);
    const double* c = centroids.row_ptr(static_cast<std::size_t>(assignments[n]));
    for (std::size_t j = 0; j < features.cols; ++j) obj += z[j] * c[j];
  }
  return obj;
}

}  // namespace detail

inline KMeansResult spherical_kmeans(const Mat& features, const KMeansConfig& cfg,
                                     Rng& rng) {
  cfg.validate();
  const std::size_t n = features.rows;
  const std::size_t d = features.cols;
  if (n < cfg.k) {
    throw DegenerateInputError("spherical_kmeans: " + std::to_string(n) +
                               " rows < k = " + std::to_string(cfg.k));
  }
  check_finite(features, "spherical_kmeans features");

  Rng local = rng.split("kmeans", cfg.seed);

  // Seed centroids from k distinct data rows.
  Mat centroids(cfg.k, d);
  {
    std::vector<std::size_t> perm = local.permutation(n);
    for (std::size_t c = 0; c < cfg.k; ++c)
      centroids.set_row(c, features.row(perm[c]));
  }

  KMeansResult res;
  res.assignments.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    res.assignments[i] = detail::kmeans_nearest(features, i, centroids);

  std::vector<std::size_t> counts(cfg.k);
  for (int it = 0; it < cfg.iters; ++it) {
    // Centroid update: normalized mean of assigned rows. Empty clusters are
    // re-seeded from a random data row instead of failing.
    Mat sums(cfg.k, d);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = static_cast<std::size_t>(res.assignments[i]);
      const double* z = features.row_ptr(i);
      double* s = sums.row_ptr(c);
      for (std::size_t j = 0; j < d; ++j) s[j] += z[j];
      ++counts[c];
    }
    for (std::size_t c = 0; c < cfg.k; ++c) {
      if (counts[c] == 0) {
        centroids.set_row(c, features.row(local.uniform_index(n)));
        continue;
      }
      double norm = 0.0;
      const double* s = sums.row_ptr(c);
      for (std::size_t j = 0; j < d; ++j) norm += s[j] * s[j];
      norm = std::sqrt(norm);
      if (norm < 1e-12) {
        // Mean of opposing unit vectors can cancel; treat like an empty
        // cluster and re-seed.
        centroids.set_row(c, features.row(local.uniform_index(n)));
        continue;
      }
      double* ctr = centroids.row_ptr(c);
      for (std::size_t j = 0; j < d; ++j) ctr[j] = s[j] / norm;
    }

    for (std::size_t i = 0; i < n; ++i)
      res.assignments[i] = detail::kmeans_nearest(features, i, centroids);
    res.objective_history.push_back(
        detail::kmeans_objective(features, centroids, res.assignments));
  }

  res.centroids = std::move(centroids);
  return res;
}

}  // namespace swav
