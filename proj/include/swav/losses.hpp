#pragma once

// Training losses with analytic gradients: the swapped code-prediction loss
// over multi-crop views, the multi-crop contrastive (SimCLR-style) loss, and
// the pseudo-label classification loss used by the offline baselines.
//
// Each loss has a score-level core that produces per-score gradients; the
// public entry points compute scores from (features, prototypes) and map the
// gradients back onto both. Codes / pseudo-labels are constants throughout:
// nothing differentiates through them.

#include <cstddef>
#include <string>
#include <vector>

#include "swav/errors.hpp"
#include "swav/matrix.hpp"
#include "swav/prototypes.hpp"
#include "swav/sinkhorn.hpp"

namespace swav {

struct LossConfig {
  double tau = 0.1;  // softmax temperature

  void validate() const {
    if (!(tau > 0.0)) {
      throw ConfigError("loss: tau must be positive, got " +
                        std::to_string(tau));
    }
  }
};

// Ordered views of one batch. The first n_global views are the full views
// whose codes drive the swapped prediction; the rest are local views that
// only predict.
struct ViewBatch {
  std::vector<Mat> views;  // each B x D, unit-norm rows
  std::size_t n_global = 2;

  void validate() const {
    if (n_global < 1) throw ConfigError("ViewBatch: n_global must be >= 1");
    if (n_global > views.size()) {
      throw ConfigError("ViewBatch: n_global " + std::to_string(n_global) +
                        " exceeds view count " + std::to_string(views.size()));
    }
    for (std::size_t v = 1; v < views.size(); ++v) {
      if (!views[v].same_shape(views[0])) {
        throw ShapeError("ViewBatch: view " + std::to_string(v) + " is " +
                         views[v].shape_str() + ", expected " +
                         views[0].shape_str());
      }
    }
  }
};

struct LossOutput {
  double loss = 0.0;
  std::vector<Mat> d_views;  // gradient w.r.t. each view's features
  Mat d_prototypes;          // D x K; empty when no prototypes are involved
};

struct ScoreLoss {
  double loss = 0.0;
  std::vector<Mat> d_scores;
};

namespace detail {

inline void check_code_rows(const Mat& q, const std::string& what) {
  for (std::size_t i = 0; i < q.rows; ++i) {
    double s = 0.0;
    const double* r = q.row_ptr(i);
    for (std::size_t j = 0; j < q.cols; ++j) s += r[j];
    if (std::abs(s - 1.0) > 1e-8) {
      throw DegenerateInputError(what + ": code row " + std::to_string(i) +
                                 " sums to " + std::to_string(s) +
                                 ", expected 1");
    }
  }
}

// Batch-mean cross entropy -sum_k q log p with p = softmax(scores/tau).
// d_scores receives (p - q) / (tau * B) scaled by `weight`.
inline double cross_entropy_accumulate(const Mat& scores, const Mat& q,
                                       double tau, double weight,
                                       Mat& d_scores) {
  const std::size_t b = scores.rows;
  const Mat logp = log_softmax_rows(scores, tau);
  double ce = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double* qr = q.row_ptr(i);
    const double* lp = logp.row_ptr(i);
    for (std::size_t j = 0; j < scores.cols; ++j) ce -= qr[j] * lp[j];
  }
  ce /= static_cast<double>(b);
  const double g = weight / (tau * static_cast<double>(b));
  for (std::size_t i = 0; i < scores.data.size(); ++i) {
    d_scores.data[i] += g * (std::exp(logp.data[i]) - q.data[i]);
  }
  return ce;
}

}  // namespace detail

// Swapped prediction on precomputed scores: averages the cross-entropy of
// every (code view i, predicting view v != i) pair.
inline ScoreLoss swapped_loss_on_scores(const std::vector<Mat>& scores,
                                        const std::vector<Mat>& codes,
                                        std::size_t n_global, double tau) {
  if (codes.size() != n_global) {
    throw ShapeError("swapped_loss: " + std::to_string(codes.size()) +
                     " code matrices for " + std::to_string(n_global) +
                     " global views");
  }
  const std::size_t n_views = scores.size();
  if (n_global < 1 || n_global > n_views) {
    throw ConfigError("swapped_loss: invalid n_global");
  }
  for (std::size_t i = 0; i < n_global; ++i) {
    if (!codes[i].same_shape(scores[i])) {
      throw ShapeError("swapped_loss: codes " + codes[i].shape_str() +
                       " vs scores " + scores[i].shape_str());
    }
    detail::check_code_rows(codes[i], "swapped_loss");
  }

  const std::size_t n_terms = n_global * (n_views - 1);
  if (n_terms == 0) throw ConfigError("swapped_loss: no cross-view terms");
  const double w = 1.0 / static_cast<double>(n_terms);

  ScoreLoss out;
  out.d_scores.reserve(n_views);
  for (const Mat& s : scores) out.d_scores.emplace_back(s.rows, s.cols);

  double loss = 0.0;
  for (std::size_t i = 0; i < n_global; ++i) {
    for (std::size_t v = 0; v < n_views; ++v) {
      if (v == i) continue;
      loss += w * detail::cross_entropy_accumulate(scores[v], codes[i], tau, w,
                                                   out.d_scores[v]);
    }
  }
  out.loss = loss;
  return out;
}

inline ScoreLoss cluster_pred_loss_on_scores(const Mat& scores, const Mat& q,
                                             double tau) {
  if (!scores.same_shape(q)) {
    throw ShapeError("cluster_pred_loss: scores " + scores.shape_str() +
                     " vs labels " + q.shape_str());
  }
  detail::check_code_rows(q, "cluster_pred_loss");
  ScoreLoss out;
  out.d_scores.emplace_back(scores.rows, scores.cols);
  out.loss =
      detail::cross_entropy_accumulate(scores, q, tau, 1.0, out.d_scores[0]);
  return out;
}

namespace detail {

// Shared gradient mapping: d_z = d_scores C^T, d_C += z^T d_scores.
inline void map_score_grads(const Mat& z, const PrototypeBank& bank,
                            const Mat& d_scores, Mat& d_view, Mat& d_proto) {
  d_view = matmul(d_scores, transpose(bank.c));
  d_proto += matmul(transpose(z), d_scores);
}

}  // namespace detail

// The full swapped-prediction loss. `codes` holds one code matrix per global
// view, already assigned (soft or hard); they receive no gradient.
inline LossOutput swapped_loss(const ViewBatch& views, const PrototypeBank& bank,
                               const std::vector<CodeMatrix>& codes,
                               const LossConfig& cfg) {
  cfg.validate();
  views.validate();
  std::vector<Mat> scores;
  scores.reserve(views.views.size());
  for (const Mat& z : views.views) scores.push_back(prototype_scores(z, bank));

  ScoreLoss core =
      swapped_loss_on_scores(scores, codes, views.n_global, cfg.tau);

  LossOutput out;
  out.loss = core.loss;
  out.d_prototypes = Mat(bank.c.rows, bank.c.cols);
  out.d_views.resize(views.views.size());
  for (std::size_t v = 0; v < views.views.size(); ++v) {
    detail::map_score_grads(views.views[v], bank, core.d_scores[v],
                            out.d_views[v], out.d_prototypes);
  }
  return out;
}

// Pseudo-label classification loss for the offline baselines. Labels q are
// fixed (one-hot or soft); gradients flow to features and prototypes.
inline LossOutput cluster_pred_loss(const FeatureBatch& z,
                                    const PrototypeBank& bank, const Mat& q,
                                    const LossConfig& cfg) {
  cfg.validate();
  Mat scores = prototype_scores(z, bank);
  ScoreLoss core = cluster_pred_loss_on_scores(scores, q, cfg.tau);

  LossOutput out;
  out.loss = core.loss;
  out.d_prototypes = Mat(bank.c.rows, bank.c.cols);
  out.d_views.resize(1);
  detail::map_score_grads(z, bank, core.d_scores[0], out.d_views[0],
                          out.d_prototypes);
  return out;
}

// Multi-crop contrastive loss. views.views holds the M crops of B instances;
// row b of every view belongs to instance b. For an anchor crop, every other
// crop of the same instance is a positive; each positive is scored against
// the crops of all other instances as negatives.
inline LossOutput simclr_multicrop_loss(const ViewBatch& views,
                                        const LossConfig& cfg) {
  cfg.validate();
  views.validate();
  const std::size_t m = views.views.size();
  if (m < 2) {
    throw ConfigError(
        "simclr_multicrop_loss: need at least 2 crops per instance to form "
        "positive pairs");
  }
  const std::size_t b = views.views[0].rows;
  const std::size_t d = views.views[0].cols;
  const std::size_t n = b * m;

  // Stack crops: row index = view * B + instance.
  Mat z(n, d);
  for (std::size_t v = 0; v < m; ++v)
    for (std::size_t i = 0; i < b; ++i)
      z.set_row(v * b + i, views.views[v].row(i));

  Mat sim = matmul(z, transpose(z));
  for (double& s : sim.data) s /= cfg.tau;

  Mat dz(n, d);
  const double outer = -1.0 / (static_cast<double>(n) *
                               static_cast<double>(m - 1));
  double loss = 0.0;

  std::vector<std::size_t> negatives;
  negatives.reserve(n);
  std::vector<double> wneg(n);
  for (std::size_t a = 0; a < n; ++a) {
    const std::size_t inst = a % b;
    negatives.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j % b != inst) negatives.push_back(j);
    }
    const double* srow = sim.row_ptr(a);
    for (std::size_t v = 0; v < m; ++v) {
      const std::size_t pos = v * b + inst;
      if (pos == a) continue;
      // log softmax over {pos} + negatives, stabilized by the max.
      double mx = srow[pos];
      for (std::size_t j : negatives) mx = std::max(mx, srow[j]);
      double zsum = std::exp(srow[pos] - mx);
      for (std::size_t j = 0; j < negatives.size(); ++j) {
        wneg[j] = std::exp(srow[negatives[j]] - mx);
        zsum += wneg[j];
      }
      const double logterm = (srow[pos] - mx) - std::log(zsum);
      loss += outer * logterm;

      // d logterm / d s_pos = 1 - w_pos; d / d s_neg = -w_neg.
      const double wpos = std::exp(srow[pos] - mx) / zsum;
      const double cpos = outer * (1.0 - wpos) / cfg.tau;
      {
        const double* za = z.row_ptr(a);
        const double* zp = z.row_ptr(pos);
        double* da = dz.row_ptr(a);
        double* dp = dz.row_ptr(pos);
        for (std::size_t t = 0; t < d; ++t) {
          da[t] += cpos * zp[t];
          dp[t] += cpos * za[t];
        }
      }
      for (std::size_t j = 0; j < negatives.size(); ++j) {
        const double cneg = outer * (-wneg[j] / zsum) / cfg.tau;
        const std::size_t ng = negatives[j];
        const double* za = z.row_ptr(a);
        const double* zn = z.row_ptr(ng);
        double* da = dz.row_ptr(a);
        double* dn = dz.row_ptr(ng);
        for (std::size_t t = 0; t < d; ++t) {
          da[t] += cneg * zn[t];
          dn[t] += cneg * za[t];
        }
      }
    }
  }

  LossOutput out;
  out.loss = loss;
  out.d_views.resize(m);
  for (std::size_t v = 0; v < m; ++v) {
    Mat g(b, d);
    for (std::size_t i = 0; i < b; ++i) g.set_row(i, dz.row(v * b + i));
    out.d_views[v] = std::move(g);
  }
  return out;
}

}  // namespace swav
