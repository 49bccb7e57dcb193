#pragma once

// Feature-quality measurement: kNN classification on cosine similarity, a
// linear probe on frozen features, normalized mutual information, and
// collapse diagnostics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "swav/errors.hpp"
#include "swav/matrix.hpp"
#include "swav/sinkhorn.hpp"

namespace swav {

// Majority vote among the k most cosine-similar training rows; ties are
// broken by summed similarity, then by the lowest label.
inline std::vector<std::int32_t> knn_predict(
    const Mat& train_feats, const std::vector<std::int32_t>& train_labels,
    const Mat& test_feats, std::size_t k) {
  if (train_feats.rows == 0 || test_feats.rows == 0) {
    throw DegenerateInputError("knn: empty feature set");
  }
  if (train_feats.rows != train_labels.size()) {
    throw ShapeError("knn: labels do not match training rows");
  }
  if (k < 1 || k > train_feats.rows) {
    throw ConfigError("knn: k must be in [1, train size]");
  }
  if (train_feats.cols != test_feats.cols) {
    throw ShapeError("knn: train " + train_feats.shape_str() + " vs test " +
                     test_feats.shape_str());
  }

  std::int32_t max_label = 0;
  for (std::int32_t l : train_labels) max_label = std::max(max_label, l);
  const std::size_t n_classes = static_cast<std::size_t>(max_label) + 1;

  std::vector<std::int32_t> pred(test_feats.rows);
  std::vector<std::pair<double, std::size_t>> sims(train_feats.rows);
  for (std::size_t t = 0; t < test_feats.rows; ++t) {
    const double* q = test_feats.row_ptr(t);
    for (std::size_t i = 0; i < train_feats.rows; ++i) {
      const double* r = train_feats.row_ptr(i);
      double dot = 0.0;
      for (std::size_t j = 0; j < train_feats.cols; ++j) dot += q[j] * r[j];
      sims[i] = {dot, i};
    }
    std::partial_sort(sims.begin(), sims.begin() + static_cast<long>(k),
                      sims.end(), [](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first > b.first;
                        return a.second < b.second;
                      });
    std::vector<std::size_t> votes(n_classes, 0);
    std::vector<double> simsum(n_classes, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      const auto lbl = static_cast<std::size_t>(train_labels[sims[i].second]);
      ++votes[lbl];
      simsum[lbl] += sims[i].first;
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < n_classes; ++c) {
      if (votes[c] > votes[best] ||
          (votes[c] == votes[best] && simsum[c] > simsum[best])) {
        best = c;
      }
    }
    pred[t] = static_cast<std::int32_t>(best);
  }
  return pred;
}

inline double knn_classify(const Mat& train_feats,
                           const std::vector<std::int32_t>& train_labels,
                           const Mat& test_feats,
                           const std::vector<std::int32_t>& test_labels,
                           std::size_t k) {
  const std::vector<std::int32_t> pred =
      knn_predict(train_feats, train_labels, test_feats, k);
  if (pred.size() != test_labels.size()) {
    throw ShapeError("knn_classify: test labels do not match test rows");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == test_labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

// Multinomial logistic regression (bias-free) trained by full-batch gradient
// descent on frozen features; returns test accuracy.
inline double linear_probe(const Mat& train_feats,
                           const std::vector<std::int32_t>& train_labels,
                           const Mat& test_feats,
                           const std::vector<std::int32_t>& test_labels,
                           std::size_t epochs, double lr) {
  if (train_feats.rows != train_labels.size() ||
      test_feats.rows != test_labels.size()) {
    throw ShapeError("linear_probe: labels do not match feature rows");
  }
  std::int32_t max_label = 0;
  for (std::int32_t l : train_labels) max_label = std::max(max_label, l);
  for (std::int32_t l : test_labels) max_label = std::max(max_label, l);
  const std::size_t n_classes = static_cast<std::size_t>(max_label) + 1;
  const std::size_t n = train_feats.rows;
  const std::size_t d = train_feats.cols;

  Mat w(d, n_classes);
  Mat onehot(n, n_classes);
  for (std::size_t i = 0; i < n; ++i)
    onehot.at(i, static_cast<std::size_t>(train_labels[i])) = 1.0;

  for (std::size_t e = 0; e < epochs; ++e) {
    Mat p = softmax_rows(matmul(train_feats, w), 1.0);
    for (std::size_t i = 0; i < p.data.size(); ++i)
      p.data[i] = (p.data[i] - onehot.data[i]) / static_cast<double>(n);
    Mat grad = matmul(transpose(train_feats), p);
    check_finite(grad, "linear_probe gradient");
    for (std::size_t i = 0; i < w.data.size(); ++i)
      w.data[i] -= lr * grad.data[i];
  }

  Mat logits = matmul(test_feats, w);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < logits.rows; ++i) {
    const double* r = logits.row_ptr(i);
    std::size_t best = 0;
    for (std::size_t c = 1; c < n_classes; ++c) {
      if (r[c] > r[best]) best = c;
    }
    if (static_cast<std::int32_t>(best) == test_labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.rows);
}

// Mutual information normalized by the arithmetic mean of the entropies;
// two constant labelings agree perfectly by convention.
inline double nmi(const std::vector<std::int32_t>& a,
                  const std::vector<std::int32_t>& b) {
  if (a.size() != b.size()) {
    throw ShapeError("nmi: labelings have different lengths");
  }
  if (a.empty()) throw DegenerateInputError("nmi: empty labelings");
  const double n = static_cast<double>(a.size());

  std::map<std::int32_t, double> pa, pb;
  std::map<std::pair<std::int32_t, std::int32_t>, double> pab;
  for (std::size_t i = 0; i < a.size(); ++i) {
    pa[a[i]] += 1.0 / n;
    pb[b[i]] += 1.0 / n;
    pab[{a[i], b[i]}] += 1.0 / n;
  }
  double ha = 0.0, hb = 0.0, mi = 0.0;
  for (const auto& [l, p] : pa) ha -= p * std::log(p);
  for (const auto& [l, p] : pb) hb -= p * std::log(p);
  for (const auto& [lab, p] : pab) {
    mi += p * std::log(p / (pa[lab.first] * pb[lab.second]));
  }
  const double denom = 0.5 * (ha + hb);
  if (denom <= 0.0) return 1.0;  // both labelings constant
  return std::max(0.0, std::min(1.0, mi / denom));
}

struct CollapseDiag {
  double code_mean_entropy = 0.0;  // NaN when no codes were recorded
  double feature_std = 0.0;
  bool collapse_flag = false;
};

// Collapse is flagged when features have (mean per-dimension) standard
// deviation below 1e-4, or when the batch-mean code entropy stays below
// 0.1 log K for every batch of the epoch.
inline CollapseDiag collapse_diagnostics(
    const std::vector<std::vector<double>>& batch_mean_codes, const Mat& feats) {
  CollapseDiag diag;

  double std_sum = 0.0;
  if (feats.rows > 0 && feats.cols > 0) {
    for (std::size_t j = 0; j < feats.cols; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < feats.rows; ++i) mean += feats.at(i, j);
      mean /= static_cast<double>(feats.rows);
      double var = 0.0;
      for (std::size_t i = 0; i < feats.rows; ++i) {
        const double d = feats.at(i, j) - mean;
        var += d * d;
      }
      std_sum += std::sqrt(var / static_cast<double>(feats.rows));
    }
    diag.feature_std = std_sum / static_cast<double>(feats.cols);
  }

  bool feature_collapse = feats.rows > 0 && diag.feature_std < 1e-4;
  bool code_collapse = false;
  if (!batch_mean_codes.empty()) {
    const double log_k =
        std::log(static_cast<double>(batch_mean_codes.front().size()));
    double sum_entropy = 0.0;
    code_collapse = true;
    for (const auto& code : batch_mean_codes) {
      const double h = entropy(code);
      sum_entropy += h;
      if (h >= 0.1 * log_k) code_collapse = false;
    }
    diag.code_mean_entropy =
        sum_entropy / static_cast<double>(batch_mean_codes.size());
  } else {
    diag.code_mean_entropy = std::numeric_limits<double>::quiet_NaN();
  }

  diag.collapse_flag = feature_collapse || code_collapse;
  return diag;
}

struct EvalReport {
  std::map<std::size_t, double> knn_acc;  // k -> accuracy
  std::optional<double> linear_acc;
  double nmi_value = 0.0;
  double code_mean_entropy = 0.0;
  double feature_std = 0.0;
  bool collapse_flag = false;
};

}  // namespace swav
