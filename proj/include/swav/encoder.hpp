#pragma once

// MLP backbone plus 2-layer projection head with hand-derived gradients.
// Backbone output ("repr") is the evaluation tap; the projection output is
// normalized to the unit sphere before it meets the prototypes.

#include <cstddef>
#include <string>
#include <vector>

#include "swav/errors.hpp"
#include "swav/matrix.hpp"
#include "swav/rng.hpp"

namespace swav {

struct EncoderConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t repr_dim = 0;         // backbone output, evaluation tap
  std::size_t proj_hidden_dim = 0;  // projection head hidden width
  std::size_t embed_dim = 128;      // projection output

  void validate() const {
    if (input_dim < 1 || repr_dim < 1 || proj_hidden_dim < 1 || embed_dim < 1) {
      throw ConfigError("encoder: all dimensions must be >= 1");
    }
    for (std::size_t h : hidden_dims) {
      if (h < 1) throw ConfigError("encoder: hidden dims must be >= 1");
    }
  }

  // Linear layer widths, input to output. Backbone hidden layers and the
  // first projection layer are followed by ReLU; the repr layer and the
  // final projection layer are linear.
  std::vector<std::size_t> layer_dims() const {
    std::vector<std::size_t> dims;
    dims.push_back(input_dim);
    for (std::size_t h : hidden_dims) dims.push_back(h);
    dims.push_back(repr_dim);
    dims.push_back(proj_hidden_dim);
    dims.push_back(embed_dim);
    return dims;
  }

  std::size_t n_layers() const { return hidden_dims.size() + 3; }
  // Index of the layer whose output is the repr tap.
  std::size_t repr_layer() const { return hidden_dims.size(); }

  bool relu_after(std::size_t layer) const {
    return layer < hidden_dims.size() || layer == n_layers() - 2;
  }
};

struct EncoderParams {
  EncoderConfig cfg;
  std::vector<Mat> weights;                // weights[l]: d_in x d_out
  std::vector<std::vector<double>> biases; // biases[l]: d_out
};

struct EncoderGrads {
  std::vector<Mat> d_weights;
  std::vector<std::vector<double>> d_biases;

  EncoderGrads& operator+=(const EncoderGrads& o) {
    for (std::size_t l = 0; l < d_weights.size(); ++l) {
      d_weights[l] += o.d_weights[l];
      for (std::size_t i = 0; i < d_biases[l].size(); ++i)
        d_biases[l][i] += o.d_biases[l][i];
    }
    return *this;
  }
};

struct ForwardCache {
  std::vector<Mat> inputs;   // input to each linear layer
  std::vector<Mat> preacts;  // pre-activation output of each linear layer
  Mat y;                     // projection output before normalization
  std::vector<double> y_norms;
  Mat z;                     // unit-norm rows
};

struct ForwardResult {
  Mat z;     // B x embed_dim, unit rows
  Mat repr;  // B x repr_dim, evaluation tap
  ForwardCache cache;
};

// Weights from a centered uniform scaled by 1/sqrt(fan_in); biases zero.
inline EncoderParams init_encoder(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  EncoderParams p;
  p.cfg = cfg;
  const std::vector<std::size_t> dims = cfg.layer_dims();
  Rng stream = rng.split("encoder_init");
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Mat w(dims[l], dims[l + 1]);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    for (double& v : w.data) v = stream.uniform(-scale, scale);
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(dims[l + 1], 0.0);
  }
  return p;
}

inline EncoderGrads zero_grads(const EncoderParams& p) {
  EncoderGrads g;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    g.d_weights.emplace_back(p.weights[l].rows, p.weights[l].cols);
    g.d_biases.emplace_back(p.biases[l].size(), 0.0);
  }
  return g;
}

inline ForwardResult encode_forward(const EncoderParams& params, const Mat& x) {
  const EncoderConfig& cfg = params.cfg;
  if (x.cols != cfg.input_dim) {
    throw ShapeError("encode_forward: input " + x.shape_str() +
                     " does not match input_dim " +
                     std::to_string(cfg.input_dim));
  }
  check_finite(x, "encode_forward input");

  ForwardResult res;
  ForwardCache& cache = res.cache;
  Mat act = x;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    cache.inputs.push_back(act);
    Mat pre = matmul(act, params.weights[l]);
    const std::vector<double>& b = params.biases[l];
    for (std::size_t i = 0; i < pre.rows; ++i) {
      double* r = pre.row_ptr(i);
      for (std::size_t j = 0; j < pre.cols; ++j) r[j] += b[j];
    }
    cache.preacts.push_back(pre);
    if (cfg.relu_after(l)) {
      for (double& v : pre.data) v = v > 0.0 ? v : 0.0;
    }
    if (l == cfg.repr_layer()) res.repr = pre;
    act = std::move(pre);
  }

  cache.y = act;
  cache.y_norms.resize(act.rows);
  for (std::size_t i = 0; i < act.rows; ++i) {
    const double n = row_norm(act, i);
    if (n < 1e-12) {
      throw DegenerateInputError(
          "encode_forward: projection output row " + std::to_string(i) +
          " has near-zero norm; cannot project to the unit sphere");
    }
    cache.y_norms[i] = n;
  }
  Mat z(act.rows, act.cols);
  for (std::size_t i = 0; i < act.rows; ++i) {
    const double* yr = act.row_ptr(i);
    double* zr = z.row_ptr(i);
    for (std::size_t j = 0; j < act.cols; ++j) zr[j] = yr[j] / cache.y_norms[i];
  }
  cache.z = z;
  res.z = std::move(z);
  return res;
}

// Gradients of a scalar loss with respect to every parameter, given dL/dz.
// The unit-sphere step contributes (I - z z^T)/|y| per sample before the
// layers are walked backwards.
inline EncoderGrads encode_backward(const EncoderParams& params,
                                    const ForwardCache& cache,
                                    const Mat& dL_dz) {
  const EncoderConfig& cfg = params.cfg;
  if (cache.inputs.size() != params.weights.size() ||
      !dL_dz.same_shape(cache.z)) {
    throw ShapeError("encode_backward: cache does not match params/gradient");
  }

  EncoderGrads grads = zero_grads(params);

  Mat delta(dL_dz.rows, dL_dz.cols);
  for (std::size_t i = 0; i < dL_dz.rows; ++i) {
    const double* dz = dL_dz.row_ptr(i);
    const double* z = cache.z.row_ptr(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < dL_dz.cols; ++j) dot += dz[j] * z[j];
    double* d = delta.row_ptr(i);
    for (std::size_t j = 0; j < dL_dz.cols; ++j)
      d[j] = (dz[j] - dot * z[j]) / cache.y_norms[i];
  }

  for (std::size_t li = params.weights.size(); li-- > 0;) {
    if (cfg.relu_after(li)) {
      const Mat& pre = cache.preacts[li];
      for (std::size_t i = 0; i < delta.data.size(); ++i) {
        if (pre.data[i] <= 0.0) delta.data[i] = 0.0;
      }
    }
    const Mat& in = cache.inputs[li];
    grads.d_weights[li] = matmul(transpose(in), delta);
    std::vector<double>& db = grads.d_biases[li];
    for (std::size_t i = 0; i < delta.rows; ++i) {
      const double* d = delta.row_ptr(i);
      for (std::size_t j = 0; j < delta.cols; ++j) db[j] += d[j];
    }
    if (li > 0) delta = matmul(delta, transpose(params.weights[li]));
  }
  return grads;
}

}  // namespace swav
