#pragma once

// Learning-rate schedule and SGD/LARS parameter updates.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "swav/errors.hpp"

namespace swav {

struct OptimConfig {
  double base_lr = 0.6;
  double final_lr = 0.0;
  std::size_t warmup_epochs = 0;
  double momentum = 0.9;
  double weight_decay = 1e-6;
  bool use_lars = false;
  double lars_eta = 0.001;  // trust coefficient

  void validate() const {
    if (!(base_lr > 0.0)) throw ConfigError("optim: base_lr must be > 0");
    if (final_lr < 0.0) throw ConfigError("optim: final_lr must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0) {
      throw ConfigError("optim: momentum must be in [0, 1)");
    }
    if (weight_decay < 0.0) throw ConfigError("optim: weight_decay must be >= 0");
  }
};

// Linear ramp 0 -> base_lr across the warmup steps, then cosine decay from
// base_lr to final_lr over the remaining steps. `step` counts completed
// optimizer steps, so step == warmup lands exactly on base_lr.
inline double cosine_lr(std::size_t step, std::size_t total_steps,
                        const OptimConfig& cfg, std::size_t steps_per_epoch = 1) {
  if (step > total_steps) {
    throw ConfigError("cosine_lr: step " + std::to_string(step) +
                      " beyond total_steps " + std::to_string(total_steps));
  }
  const std::size_t warmup = cfg.warmup_epochs * steps_per_epoch;
  if (warmup > 0 && step < warmup) {
    return cfg.base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  }
  const std::size_t span = total_steps > warmup ? total_steps - warmup : 1;
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(span);
  return cfg.final_lr + 0.5 * (cfg.base_lr - cfg.final_lr) *
                            (1.0 + std::cos(3.14159265358979323846 * progress));
}

// Momentum buffer for one parameter tensor.
using Velocity = std::vector<double>;

namespace detail {

inline double l2_norm(const double* v, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += v[i] * v[i];
  return std::sqrt(s);
}

}  // namespace detail

// In-place SGD with momentum: v <- momentum v + g + wd p; p <- p - lr v.
// With use_lars, the layer's lr is additionally scaled by the trust ratio
// eta |p| / (|g| + wd |p|) whenever both norms are positive.
inline void optimizer_step(std::vector<double>& param,
                           const std::vector<double>& grad, double lr,
                           Velocity& velocity, const OptimConfig& cfg,
                           bool apply_weight_decay = true) {
  if (param.size() != grad.size()) {
    throw ShapeError("optimizer_step: param size " +
                     std::to_string(param.size()) + " vs grad size " +
                     std::to_string(grad.size()));
  }
  if (velocity.size() != param.size()) velocity.assign(param.size(), 0.0);
  for (double g : grad) {
    if (!std::isfinite(g)) {
      throw NumericError("optimizer_step: non-finite gradient");
    }
  }
  const double wd = apply_weight_decay ? cfg.weight_decay : 0.0;

  double effective_lr = lr;
  if (cfg.use_lars) {
    const double pn = detail::l2_norm(param.data(), param.size());
    const double gn = detail::l2_norm(grad.data(), grad.size());
    if (pn > 0.0 && gn > 0.0) {
      effective_lr *= cfg.lars_eta * pn / (gn + wd * pn);
    }
  }

  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = cfg.momentum * velocity[i] + grad[i] + wd * param[i];
    param[i] -= effective_lr * velocity[i];
  }
}

}  // namespace swav
