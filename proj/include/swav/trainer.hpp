#pragma once

// Optimization loops: the online swapped-prediction method, the two offline
// clustering baselines (alternating assignment and training phases over a
// feature archive), and the contrastive baseline. Single-owner state; all
// randomness is derived from (seed, epoch, dataset index) so runs are
// reproducible and resumable.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include "swav/augment.hpp"
#include "swav/dataset.hpp"
#include "swav/encoder.hpp"
#include "swav/errors.hpp"
#include "swav/feature_queue.hpp"
#include "swav/kmeans.hpp"
#include "swav/losses.hpp"
#include "swav/matrix.hpp"
#include "swav/optimizer.hpp"
#include "swav/prototypes.hpp"
#include "swav/rng.hpp"
#include "swav/sinkhorn.hpp"

namespace swav {

enum class Method { swav, deepcluster_v2, sela_v2, simclr };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::swav: return "swav";
    case Method::deepcluster_v2: return "deepcluster_v2";
    case Method::sela_v2: return "sela_v2";
    case Method::simclr: return "simclr";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "swav") return Method::swav;
  if (s == "deepcluster_v2") return Method::deepcluster_v2;
  if (s == "sela_v2") return Method::sela_v2;
  if (s == "simclr") return Method::simclr;
  throw ConfigError("unknown method '" + s +
                    "' (expected swav|deepcluster_v2|sela_v2|simclr)");
}

struct TrainConfig {
  Method method = Method::swav;
  std::size_t epochs = 30;
  std::size_t batch_size = 128;
  std::size_t k_prototypes = 32;
  SinkhornConfig sinkhorn;
  double tau = 0.1;

  std::size_t n_global = 2;
  std::size_t n_local = 4;
  VectorAugConfig aug_global{0.1, 0.1, 0.1};
  VectorAugConfig aug_local{0.1, 0.5, 0.1};
  MultiCropSpec crops;  // image datasets; n_global/n_local above apply

  std::size_t queue_capacity = 0;  // 0 disables the feature queue
  // Unset means "5% of the run" (the long-run recipe starts at epoch 15 of
  // 800); short desk runs scale it down.
  std::optional<std::size_t> queue_start_epoch;
  bool queue_shared = false;  // one queue across views instead of per view

  std::size_t freeze_prototypes_epochs = 1;
  std::size_t n_heads = 1;
  bool hard_codes = false;
  bool learn_prototypes = true;
  std::uint64_t seed = 1;
  int kmeans_iters = 10;

  EncoderConfig encoder{0, {128}, 64, 128, 128};
  OptimConfig optim;
  std::size_t threads = 1;

  std::size_t resolved_queue_start() const {
    if (queue_start_epoch) return *queue_start_epoch;
    return std::max<std::size_t>(1, epochs / 20);
  }

  std::size_t n_views() const { return n_global + n_local; }

  void validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
    if (k_prototypes < 1) throw ConfigError("train: k_prototypes must be >= 1");
    if (n_global < 1) throw ConfigError("train: n_global must be >= 1");
    if (n_heads < 1) throw ConfigError("train: n_heads must be >= 1");
    if (!(tau > 0.0)) throw ConfigError("train: tau must be > 0");
    if (threads < 1) throw ConfigError("train: threads must be >= 1");
    if (kmeans_iters < 1) throw ConfigError("train: kmeans_iters must be >= 1");
    sinkhorn.validate();
    aug_global.validate();
    aug_local.validate();
    optim.validate();
  }
};

// One feature row per dataset instance, refreshed during each training epoch
// and consumed by the next assignment phase.
struct FeatureArchive {
  Mat rows;
  std::vector<unsigned char> seen;
  bool warm = false;

  void reset(std::size_t n, std::size_t dim) {
    rows = Mat(n, dim);
    seen.assign(n, 0);
    warm = false;
  }
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double code_mean_entropy = 0.0;  // NaN when the method produces no codes
  double wall_seconds = 0.0;
  std::vector<double> batch_losses;                 // not serialized
  std::vector<std::vector<double>> batch_mean_codes;  // not serialized
};

struct TrainState {
  TrainConfig cfg;
  EncoderParams encoder;
  std::vector<PrototypeBank> heads;
  std::vector<std::vector<Velocity>> enc_vel_w;  // [layer] -> buffer
  std::vector<std::vector<Velocity>> enc_vel_b;
  std::vector<Velocity> proto_vel;  // per head
  std::vector<FeatureQueue> queues;
  FeatureArchive archive;
  std::vector<CodeMatrix> pseudo_labels;  // per head; offline methods only
  std::size_t next_epoch = 0;
  std::uint64_t rng_key = 0;
  std::uint64_t rng_counter = 0;
};

inline TrainState init_train_state(TrainConfig cfg, const Dataset& data) {
  if (cfg.encoder.input_dim == 0) cfg.encoder.input_dim = data.dim();
  if (cfg.encoder.input_dim != data.dim()) {
    throw ConfigError("train: encoder input_dim " +
                      std::to_string(cfg.encoder.input_dim) +
                      " does not match dataset dim " +
                      std::to_string(data.dim()));
  }
  cfg.crops.n_global = cfg.n_global;
  cfg.crops.n_local = cfg.n_local;
  cfg.validate();
  cfg.encoder.validate();

  TrainState st;
  st.cfg = cfg;
  Rng root(cfg.seed);
  st.rng_key = root.key();
  st.rng_counter = root.counter();
  st.encoder = init_encoder(cfg.encoder, root);
  st.enc_vel_w.resize(st.encoder.weights.size());
  st.enc_vel_b.resize(st.encoder.weights.size());

  if (cfg.method != Method::simclr) {
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
      Rng head_rng = root.split("head", h);
      st.heads.push_back(
          init_prototypes(cfg.encoder.embed_dim, cfg.k_prototypes, head_rng));
    }
    st.proto_vel.resize(cfg.n_heads);
  }

  if (cfg.queue_capacity > 0 && cfg.method == Method::swav) {
    const std::size_t n_queues = cfg.queue_shared ? 1 : cfg.n_global;
    for (std::size_t i = 0; i < n_queues; ++i) {
      st.queues.emplace_back(cfg.queue_capacity, cfg.resolved_queue_start());
    }
  }

  if (cfg.method == Method::deepcluster_v2 || cfg.method == Method::sela_v2) {
    st.archive.reset(data.size(), cfg.encoder.embed_dim);
  }
  return st;
}

// ---- deterministic epoch plumbing -----------------------------------------

inline std::vector<std::vector<std::size_t>> epoch_batches(
    std::size_t n, const TrainConfig& cfg, std::size_t epoch) {
  Rng root(cfg.seed);
  std::vector<std::size_t> perm = root.split("shuffle", epoch).permutation(n);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += cfg.batch_size) {
    const std::size_t end = std::min(n, start + cfg.batch_size);
    batches.emplace_back(perm.begin() + static_cast<long>(start),
                         perm.begin() + static_cast<long>(end));
  }
  return batches;
}

// Raw augmented inputs for every view of a batch, one B x input_dim matrix
// per view. Randomness depends only on (seed, epoch, dataset index, view).
inline std::vector<Mat> make_view_inputs(const Dataset& data,
                                         const std::vector<std::size_t>& batch,
                                         const TrainConfig& cfg,
                                         std::size_t epoch) {
  Rng root(cfg.seed);
  Rng aug = root.split("aug", epoch);
  const std::size_t n_views = cfg.n_views();
  std::vector<Mat> views(n_views, Mat(batch.size(), data.dim()));

  if (data.kind == DatasetKind::vector) {
    for (std::size_t r = 0; r < batch.size(); ++r) {
      const std::vector<double> x = data.features.row(batch[r]);
      Rng item = aug.split("item", batch[r]);
      for (std::size_t v = 0; v < n_views; ++v) {
        Rng view_rng = item.split("view", v);
        const VectorAugConfig& acfg =
            v < cfg.n_global ? cfg.aug_global : cfg.aug_local;
        views[v].set_row(r, augment_vector(x, acfg, view_rng));
      }
    }
    return views;
  }

  // Image path: multi-crop, then flatten. Local views are zero-padded up to
  // the global flat size so every view batch matches the encoder input.
  ImageTensor img(data.channels, data.height, data.width);
  for (std::size_t v = 0; v < n_views; ++v) {
    const std::size_t side =
        v < cfg.n_global ? cfg.crops.global_size : cfg.crops.local_size;
    views[v] = Mat(batch.size(), data.channels * cfg.crops.global_size *
                                     cfg.crops.global_size);
    (void)side;
  }
  for (std::size_t r = 0; r < batch.size(); ++r) {
    img.values = data.features.row(batch[r]);
    Rng item = aug.split("item", batch[r]);
    MultiCropResult crops = multicrop_image(img, cfg.crops, item);
    for (std::size_t v = 0; v < crops.views.size(); ++v) {
      const ImageTensor& view = crops.views[v];
      double* row = views[v].row_ptr(r);
      std::copy(view.values.begin(), view.values.end(), row);
    }
  }
  return views;
}

namespace detail {

inline std::vector<ForwardResult> encode_views(const TrainState& st,
                                               const std::vector<Mat>& inputs) {
  std::vector<ForwardResult> fwd(inputs.size());
  if (st.cfg.threads > 1 && inputs.size() > 1) {
    std::vector<std::future<ForwardResult>> futs;
    futs.reserve(inputs.size());
    for (const Mat& x : inputs) {
      futs.push_back(std::async(std::launch::async, [&st, &x] {
        return encode_forward(st.encoder, x);
      }));
    }
    for (std::size_t v = 0; v < futs.size(); ++v) fwd[v] = futs[v].get();
  } else {
    for (std::size_t v = 0; v < inputs.size(); ++v)
      fwd[v] = encode_forward(st.encoder, inputs[v]);
  }
  return fwd;
}

// Gradients accumulated over views in fixed view order, so results do not
// depend on the thread count.
inline EncoderGrads backward_views(const TrainState& st,
                                   const std::vector<ForwardResult>& fwd,
                                   const std::vector<Mat>& d_views) {
  std::vector<EncoderGrads> per_view(fwd.size());
  if (st.cfg.threads > 1 && fwd.size() > 1) {
    std::vector<std::future<EncoderGrads>> futs;
    futs.reserve(fwd.size());
    for (std::size_t v = 0; v < fwd.size(); ++v) {
      futs.push_back(std::async(std::launch::async, [&st, &fwd, &d_views, v] {
        return encode_backward(st.encoder, fwd[v].cache, d_views[v]);
      }));
    }
    for (std::size_t v = 0; v < futs.size(); ++v) per_view[v] = futs[v].get();
  } else {
    for (std::size_t v = 0; v < fwd.size(); ++v)
      per_view[v] = encode_backward(st.encoder, fwd[v].cache, d_views[v]);
  }
  EncoderGrads total = std::move(per_view[0]);
  for (std::size_t v = 1; v < per_view.size(); ++v) total += per_view[v];
  return total;
}

inline void step_encoder(TrainState& st, const EncoderGrads& grads, double lr) {
  for (std::size_t l = 0; l < st.encoder.weights.size(); ++l) {
    if (st.enc_vel_w[l].empty()) st.enc_vel_w[l].resize(1);
    if (st.enc_vel_b[l].empty()) st.enc_vel_b[l].resize(1);
    optimizer_step(st.encoder.weights[l].data, grads.d_weights[l].data, lr,
                   st.enc_vel_w[l][0], st.cfg.optim, true);
    optimizer_step(st.encoder.biases[l], grads.d_biases[l], lr,
                   st.enc_vel_b[l][0], st.cfg.optim, true);
  }
}

inline bool prototypes_frozen(const TrainState& st, std::size_t epoch) {
  return epoch < st.cfg.freeze_prototypes_epochs;
}

inline void step_prototypes(TrainState& st, std::size_t head, const Mat& grad,
                            double lr, std::size_t epoch) {
  if (!st.cfg.learn_prototypes || prototypes_frozen(st, epoch)) return;
  // Prototypes are renormalized after every step; weight decay stays off.
  optimizer_step(st.heads[head].c.data, grad.data, lr, st.proto_vel[head],
                 st.cfg.optim, false);
}

inline std::vector<double> mean_code_row(const Mat& codes) {
  std::vector<double> mean(codes.cols, 0.0);
  for (std::size_t i = 0; i < codes.rows; ++i) {
    const double* r = codes.row_ptr(i);
    for (std::size_t j = 0; j < codes.cols; ++j) mean[j] += r[j];
  }
  for (double& v : mean) v /= static_cast<double>(codes.rows);
  return mean;
}

inline Mat slice_rows(const Mat& m, std::size_t count) {
  Mat out(count, m.cols);
  std::copy(m.data.begin(),
            m.data.begin() + static_cast<long>(count * m.cols),
            out.data.begin());
  return out;
}

inline void finish_metrics(EpochMetrics& m, std::size_t n_batches) {
  m.loss = 0.0;
  for (double l : m.batch_losses) m.loss += l;
  if (n_batches > 0) m.loss /= static_cast<double>(n_batches);
  if (m.batch_mean_codes.empty()) {
    m.code_mean_entropy = std::numeric_limits<double>::quiet_NaN();
  } else {
    double h = 0.0;
    for (const auto& code : m.batch_mean_codes) h += entropy(code);
    m.code_mean_entropy /= 1.0;  // overwritten below
    m.code_mean_entropy = h / static_cast<double>(m.batch_mean_codes.size());
  }
}

}  // namespace detail

// Codes for one global view of the current batch, optionally enlarging the
// assignment problem with queued features. Only the batch rows' codes are
// returned; queued rows influence the scaling but never the loss.
inline CodeMatrix compute_batch_codes(const Mat& z_batch,
                                      const FeatureQueue* queue,
                                      const PrototypeBank& bank,
                                      const SinkhornConfig& sinkhorn_cfg) {
  if (queue != nullptr && queue->size() > 0) {
    auto [augmented, batch_rows] = queue->assemble(z_batch);
    const Mat scores = prototype_scores(augmented, bank);
    const CodeMatrix full = sinkhorn_codes(scores, sinkhorn_cfg);
    return detail::slice_rows(full, batch_rows);
  }
  return sinkhorn_codes(prototype_scores(z_batch, bank), sinkhorn_cfg);
}

inline EpochMetrics train_epoch_swav(TrainState& st, const Dataset& data,
                                     std::size_t epoch) {
  const TrainConfig& cfg = st.cfg;
  const auto batches = epoch_batches(data.size(), cfg, epoch);
  const std::size_t steps_per_epoch = batches.size();
  const std::size_t total_steps = cfg.epochs * steps_per_epoch;
  std::size_t step = epoch * steps_per_epoch;

  EpochMetrics metrics;
  metrics.epoch = epoch;
  const double head_w = 1.0 / static_cast<double>(cfg.n_heads);

  for (std::size_t b = 0; b < batches.size(); ++b) {
    const std::vector<Mat> inputs = make_view_inputs(data, batches[b], cfg, epoch);
    const std::vector<ForwardResult> fwd = detail::encode_views(st, inputs);

    ViewBatch views;
    views.n_global = cfg.n_global;
    for (const ForwardResult& f : fwd) views.views.push_back(f.z);

    const bool use_queue =
        !st.queues.empty() && st.queues[0].enabled(epoch);

    double loss = 0.0;
    std::vector<Mat> d_views(fwd.size());
    for (std::size_t v = 0; v < fwd.size(); ++v) {
      d_views[v] = Mat(fwd[v].z.rows, fwd[v].z.cols);
    }
    std::vector<Mat> d_proto(cfg.n_heads);

    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
      std::vector<CodeMatrix> codes(cfg.n_global);
      for (std::size_t i = 0; i < cfg.n_global; ++i) {
        const FeatureQueue* q = nullptr;
        if (use_queue) q = &st.queues[cfg.queue_shared ? 0 : i];
        codes[i] = compute_batch_codes(fwd[i].z, q, st.heads[h], cfg.sinkhorn);
        if (cfg.hard_codes) codes[i] = round_to_hard(codes[i]);
        if (h == 0) {
          metrics.batch_mean_codes.push_back(detail::mean_code_row(codes[i]));
        }
      }
      LossOutput out = swapped_loss(views, st.heads[h], codes,
                                    LossConfig{cfg.tau});
      loss += head_w * out.loss;
      for (std::size_t v = 0; v < d_views.size(); ++v) {
        out.d_views[v] *= head_w;
        d_views[v] += out.d_views[v];
      }
      out.d_prototypes *= head_w;
      d_proto[h] = std::move(out.d_prototypes);
    }

    if (!std::isfinite(loss)) {
      throw NumericError("train_epoch_swav: non-finite loss at epoch " +
                         std::to_string(epoch) + " batch " + std::to_string(b));
    }

    const EncoderGrads grads = detail::backward_views(st, fwd, d_views);
    const double lr = cosine_lr(step, total_steps, cfg.optim, steps_per_epoch);
    detail::step_encoder(st, grads, lr);
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
      detail::step_prototypes(st, h, d_proto[h], lr, epoch);
    }
    for (PrototypeBank& head : st.heads) {
      head = renormalize_prototypes(std::move(head));
    }
    for (std::size_t i = 0; i < cfg.n_global && !st.queues.empty(); ++i) {
      st.queues[cfg.queue_shared ? 0 : i].push_batch(fwd[i].z);
      if (cfg.queue_shared) break;
    }

    metrics.batch_losses.push_back(loss);
    metrics.lr = lr;
    ++step;
  }

  detail::finish_metrics(metrics, batches.size());
  return metrics;
}

// Random balanced one-hot labels used to warm the archive before the first
// real assignment phase.
inline std::vector<CodeMatrix> random_balanced_labels(std::size_t n,
                                                      std::size_t k,
                                                      std::size_t n_heads,
                                                      std::uint64_t seed) {
  Rng root(seed);
  std::vector<CodeMatrix> labels;
  for (std::size_t h = 0; h < n_heads; ++h) {
    std::vector<std::int32_t> lab(n);
    for (std::size_t i = 0; i < n; ++i)
      lab[i] = static_cast<std::int32_t>(i % k);
    Rng stream = root.split("coldstart", h);
    stream.shuffle(lab);
    Mat q(n, k);
    for (std::size_t i = 0; i < n; ++i)
      q.at(i, static_cast<std::size_t>(lab[i])) = 1.0;
    labels.push_back(std::move(q));
  }
  return labels;
}

// Assignment phase over the previous epoch's archive. DeepCluster-v2 runs
// spherical k-means per head and installs the centroids as that head's
// prototypes; SeLa-v2 solves the balanced assignment over the full archive
// with each head's current prototypes.
inline std::vector<CodeMatrix> assignment_phase_offline(
    Method method, const FeatureArchive& archive,
    std::vector<PrototypeBank>& heads, const TrainConfig& cfg, Rng rng) {
  if (!archive.warm) {
    throw DegenerateInputError(
        "assignment_phase_offline: archive is cold; run a warm-up epoch "
        "before requesting assignments");
  }
  std::vector<CodeMatrix> labels;
  const Mat feats = l2_normalize_rows(archive.rows);
  for (std::size_t h = 0; h < heads.size(); ++h) {
    if (method == Method::deepcluster_v2) {
      KMeansConfig kcfg;
      kcfg.k = cfg.k_prototypes;
      kcfg.iters = cfg.kmeans_iters;
      kcfg.seed = h;
      const KMeansResult res = spherical_kmeans(feats, kcfg, rng);
      heads[h].c = transpose(res.centroids);
      Mat q(feats.rows, cfg.k_prototypes);
      for (std::size_t i = 0; i < feats.rows; ++i)
        q.at(i, static_cast<std::size_t>(res.assignments[i])) = 1.0;
      labels.push_back(std::move(q));
    } else if (method == Method::sela_v2) {
      const Mat scores = prototype_scores(feats, heads[h]);
      labels.push_back(sinkhorn_codes(scores, cfg.sinkhorn));
    } else {
      throw ConfigError("assignment_phase_offline: method must be "
                        "deepcluster_v2 or sela_v2");
    }
  }
  return labels;
}

inline EpochMetrics train_epoch_offline(TrainState& st, const Dataset& data,
                                        const std::vector<CodeMatrix>& labels,
                                        std::size_t epoch) {
  const TrainConfig& cfg = st.cfg;
  if (labels.size() != cfg.n_heads) {
    throw ConfigError("train_epoch_offline: need one pseudo-label matrix per head");
  }
  for (const Mat& q : labels) {
    if (q.rows != data.size() || q.cols != cfg.k_prototypes) {
      throw ShapeError("train_epoch_offline: labels " + q.shape_str() +
                       " do not cover the dataset");
    }
  }

  const auto batches = epoch_batches(data.size(), cfg, epoch);
  const std::size_t steps_per_epoch = batches.size();
  const std::size_t total_steps = cfg.epochs * steps_per_epoch;
  std::size_t step = epoch * steps_per_epoch;

  EpochMetrics metrics;
  metrics.epoch = epoch;
  const std::size_t n_views = cfg.n_views();
  const double w = 1.0 / static_cast<double>(cfg.n_heads * n_views);
  const bool grad_prototypes = cfg.method == Method::sela_v2;

  for (std::size_t b = 0; b < batches.size(); ++b) {
    const std::vector<Mat> inputs = make_view_inputs(data, batches[b], cfg, epoch);
    const std::vector<ForwardResult> fwd = detail::encode_views(st, inputs);

    std::vector<Mat> q_batch(cfg.n_heads);
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
      Mat q(batches[b].size(), cfg.k_prototypes);
      for (std::size_t r = 0; r < batches[b].size(); ++r)
        q.set_row(r, labels[h].row(batches[b][r]));
      q_batch[h] = std::move(q);
    }
    metrics.batch_mean_codes.push_back(detail::mean_code_row(q_batch[0]));

    double loss = 0.0;
    std::vector<Mat> d_views(fwd.size());
    for (std::size_t v = 0; v < fwd.size(); ++v)
      d_views[v] = Mat(fwd[v].z.rows, fwd[v].z.cols);
    std::vector<Mat> d_proto(cfg.n_heads);
    for (std::size_t h = 0; h < cfg.n_heads; ++h)
      d_proto[h] = Mat(cfg.encoder.embed_dim, cfg.k_prototypes);

    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
      for (std::size_t v = 0; v < n_views; ++v) {
        LossOutput out = cluster_pred_loss(fwd[v].z, st.heads[h], q_batch[h],
                                           LossConfig{cfg.tau});
        loss += w * out.loss;
        out.d_views[0] *= w;
        d_views[v] += out.d_views[0];
        out.d_prototypes *= w;
        d_proto[h] += out.d_prototypes;
      }
    }

    if (!std::isfinite(loss)) {
      throw NumericError("train_epoch_offline: non-finite loss at epoch " +
                         std::to_string(epoch) + " batch " + std::to_string(b));
    }

    const EncoderGrads grads = detail::backward_views(st, fwd, d_views);
    const double lr = cosine_lr(step, total_steps, cfg.optim, steps_per_epoch);
    detail::step_encoder(st, grads, lr);
    if (grad_prototypes) {
      for (std::size_t h = 0; h < cfg.n_heads; ++h)
        detail::step_prototypes(st, h, d_proto[h], lr, epoch);
    }
    for (PrototypeBank& head : st.heads) {
      head = renormalize_prototypes(std::move(head));
    }

    // Archive this epoch's first-view features for the next assignment.
    for (std::size_t r = 0; r < batches[b].size(); ++r) {
      st.archive.rows.set_row(batches[b][r], fwd[0].z.row(r));
      st.archive.seen[batches[b][r]] = 1;
    }

    metrics.batch_losses.push_back(loss);
    metrics.lr = lr;
    ++step;
  }

  bool all_seen = true;
  for (unsigned char s : st.archive.seen) all_seen &= (s != 0);
  if (all_seen) st.archive.warm = true;

  detail::finish_metrics(metrics, batches.size());
  return metrics;
}

inline EpochMetrics train_epoch_simclr(TrainState& st, const Dataset& data,
                                       std::size_t epoch) {
  const TrainConfig& cfg = st.cfg;
  const auto batches = epoch_batches(data.size(), cfg, epoch);
  const std::size_t steps_per_epoch = batches.size();
  const std::size_t total_steps = cfg.epochs * steps_per_epoch;
  std::size_t step = epoch * steps_per_epoch;

  EpochMetrics metrics;
  metrics.epoch = epoch;

  for (std::size_t b = 0; b < batches.size(); ++b) {
    const std::vector<Mat> inputs = make_view_inputs(data, batches[b], cfg, epoch);
    const std::vector<ForwardResult> fwd = detail::encode_views(st, inputs);

    ViewBatch views;
    views.n_global = cfg.n_global;
    for (const ForwardResult& f : fwd) views.views.push_back(f.z);

    LossOutput out = simclr_multicrop_loss(views, LossConfig{cfg.tau});
    if (!std::isfinite(out.loss)) {
      throw NumericError("train_epoch_simclr: non-finite loss at epoch " +
                         std::to_string(epoch) + " batch " + std::to_string(b));
    }

    const EncoderGrads grads = detail::backward_views(st, fwd, out.d_views);
    const double lr = cosine_lr(step, total_steps, cfg.optim, steps_per_epoch);
    detail::step_encoder(st, grads, lr);

    metrics.batch_losses.push_back(out.loss);
    metrics.lr = lr;
    ++step;
  }

  detail::finish_metrics(metrics, batches.size());
  return metrics;
}

// Runs epochs [state.next_epoch, cfg.epochs). The callback fires after each
// epoch with that epoch's metrics.
inline std::vector<EpochMetrics> fit(
    TrainState& st, const Dataset& data,
    const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
  std::vector<EpochMetrics> all;
  const TrainConfig& cfg = st.cfg;
  const bool offline = cfg.method == Method::deepcluster_v2 ||
                       cfg.method == Method::sela_v2;
  for (std::size_t epoch = st.next_epoch; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochMetrics m;
    if (offline) {
      if (epoch == 0) {
        st.pseudo_labels = random_balanced_labels(
            data.size(), cfg.k_prototypes, cfg.n_heads, cfg.seed);
      } else {
        Rng root(cfg.seed);
        st.pseudo_labels = assignment_phase_offline(
            cfg.method, st.archive, st.heads, cfg, root.split("assign", epoch));
      }
      m = train_epoch_offline(st, data, st.pseudo_labels, epoch);
    } else if (cfg.method == Method::swav) {
      m = train_epoch_swav(st, data, epoch);
    } else {
      m = train_epoch_simclr(st, data, epoch);
    }
    m.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    st.next_epoch = epoch + 1;
    if (on_epoch) on_epoch(m);
    all.push_back(std::move(m));
  }
  return all;
}

// Representation tap over a whole dataset (no augmentation), batched.
inline Mat encode_dataset_repr(const TrainState& st, const Dataset& data) {
  Mat out(data.size(), st.cfg.encoder.repr_dim);
  const std::size_t bs = std::max<std::size_t>(1, st.cfg.batch_size);
  for (std::size_t start = 0; start < data.size(); start += bs) {
    const std::size_t end = std::min(data.size(), start + bs);
    Mat x(end - start, data.dim());
    for (std::size_t i = start; i < end; ++i)
      x.set_row(i - start, data.features.row(i));
    const ForwardResult f = encode_forward(st.encoder, x);
    for (std::size_t i = start; i < end; ++i)
      out.set_row(i, f.repr.row(i - start));
  }
  return out;
}

// Projected unit-sphere embeddings over a whole dataset.
inline Mat encode_dataset_embed(const TrainState& st, const Dataset& data) {
  Mat out(data.size(), st.cfg.encoder.embed_dim);
  const std::size_t bs = std::max<std::size_t>(1, st.cfg.batch_size);
  for (std::size_t start = 0; start < data.size(); start += bs) {
    const std::size_t end = std::min(data.size(), start + bs);
    Mat x(end - start, data.dim());
    for (std::size_t i = start; i < end; ++i)
      x.set_row(i - start, data.features.row(i));
    const ForwardResult f = encode_forward(st.encoder, x);
    for (std::size_t i = start; i < end; ++i)
      out.set_row(i, f.z.row(i - start));
  }
  return out;
}

}  // namespace swav
