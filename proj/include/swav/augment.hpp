#pragma once

// View generation. Images get multi-crop: full-resolution global crops plus
// smaller zoomed local crops, each independently flipped, color-jittered and
// blurred. Vector data gets a perturbation analogue: noise, coordinate
// dropout and scale jitter.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "swav/errors.hpp"
#include "swav/rng.hpp"

namespace swav {

struct ImageTensor {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;  // CHW, values in [0, 1]

  ImageTensor() = default;
  ImageTensor(std::size_t c, std::size_t h, std::size_t w)
      : channels(c), height(h), width(w), values(c * h * w, 0.0) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return values[(c * height + y) * width + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return values[(c * height + y) * width + x];
  }
};

struct MultiCropSpec {
  std::size_t n_global = 2;
  std::pair<double, double> global_scale{0.14, 1.0};  // crop area fraction
  std::size_t global_size = 32;
  std::size_t n_local = 4;
  std::pair<double, double> local_scale{0.05, 0.14};
  std::size_t local_size = 16;
  double flip_prob = 0.5;
  double color_jitter_strength = 0.4;
  std::pair<double, double> blur_sigma_range{0.0, 0.0};  // (0,0) disables blur

  void validate() const {
    auto check_range = [](std::pair<double, double> r, const std::string& name) {
      if (!(0.0 < r.first && r.first < r.second && r.second <= 1.0)) {
        throw ConfigError("multicrop: " + name +
                          " must satisfy 0 < lo < hi <= 1");
      }
    };
    check_range(global_scale, "global_scale");
    check_range(local_scale, "local_scale");
    if (global_size < 4 || local_size < 4) {
      throw ConfigError("multicrop: crop sizes must be >= 4 pixels");
    }
    if (n_global < 1) throw ConfigError("multicrop: n_global must be >= 1");
  }
};

struct CropRect {
  std::size_t top = 0, left = 0, height = 0, width = 0;
};

struct MultiCropResult {
  std::vector<ImageTensor> views;  // n_global + n_local, in order
  std::vector<CropRect> rects;     // sampled geometry per view
};

struct VectorAugConfig {
  double noise_sigma = 0.0;
  double dropout_prob = 0.0;  // per-coordinate zeroing probability
  double scale_jitter = 0.0;  // scale drawn from [1 - j, 1 + j]

  void validate() const {
    if (noise_sigma < 0.0 || dropout_prob < 0.0 || scale_jitter < 0.0) {
      throw ConfigError("vector aug: parameters must be nonnegative");
    }
    if (dropout_prob >= 1.0) {
      throw ConfigError("vector aug: dropout_prob must be < 1, got " +
                        std::to_string(dropout_prob));
    }
  }
};

namespace detail {

constexpr double kAspectLo = 3.0 / 4.0;
constexpr double kAspectHi = 4.0 / 3.0;

// Area/aspect rejection sampler, 10 attempts then a centered fallback crop
// whose aspect is clamped into range.
inline CropRect sample_crop(std::size_t img_h, std::size_t img_w,
                            std::pair<double, double> scale, Rng& rng) {
  const double area = static_cast<double>(img_h) * static_cast<double>(img_w);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target_area = area * rng.uniform(scale.first, scale.second);
    const double aspect = rng.uniform(kAspectLo, kAspectHi);
    const auto w = static_cast<std::size_t>(
        std::lround(std::sqrt(target_area * aspect)));
    const auto h = static_cast<std::size_t>(
        std::lround(std::sqrt(target_area / aspect)));
    if (w >= 1 && h >= 1 && w <= img_w && h <= img_h) {
      CropRect r;
      r.width = w;
      r.height = h;
      r.top = static_cast<std::size_t>(rng.uniform_index(img_h - h + 1));
      r.left = static_cast<std::size_t>(rng.uniform_index(img_w - w + 1));
      return r;
    }
  }
  CropRect r;
  const double in_ratio = static_cast<double>(img_w) / static_cast<double>(img_h);
  if (in_ratio < kAspectLo) {
    r.width = img_w;
    r.height = static_cast<std::size_t>(
        std::lround(static_cast<double>(img_w) / kAspectLo));
  } else if (in_ratio > kAspectHi) {
    r.height = img_h;
    r.width = static_cast<std::size_t>(
        std::lround(static_cast<double>(img_h) * kAspectHi));
  } else {
    r.width = img_w;
    r.height = img_h;
  }
  r.top = (img_h - r.height) / 2;
  r.left = (img_w - r.width) / 2;
  return r;
}

// Bilinear resize of a crop region, half-pixel centers.
inline ImageTensor crop_resize(const ImageTensor& img, const CropRect& rect,
                               std::size_t out_size) {
  if (rect.height == 0 || rect.width == 0) {
    throw DegenerateInputError("multicrop: degenerate crop window");
  }
  ImageTensor out(img.channels, out_size, out_size);
  const double sy = static_cast<double>(rect.height) / static_cast<double>(out_size);
  const double sx = static_cast<double>(rect.width) / static_cast<double>(out_size);
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (std::size_t y = 0; y < out_size; ++y) {
      double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
      fy = std::clamp(fy, 0.0, static_cast<double>(rect.height) - 1.0);
      const auto y0 = static_cast<std::size_t>(fy);
      const std::size_t y1 = std::min(y0 + 1, rect.height - 1);
      const double wy = fy - static_cast<double>(y0);
      for (std::size_t x = 0; x < out_size; ++x) {
        double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
        fx = std::clamp(fx, 0.0, static_cast<double>(rect.width) - 1.0);
        const auto x0 = static_cast<std::size_t>(fx);
        const std::size_t x1 = std::min(x0 + 1, rect.width - 1);
        const double wx = fx - static_cast<double>(x0);
        const double v00 = img.at(c, rect.top + y0, rect.left + x0);
        const double v01 = img.at(c, rect.top + y0, rect.left + x1);
        const double v10 = img.at(c, rect.top + y1, rect.left + x0);
        const double v11 = img.at(c, rect.top + y1, rect.left + x1);
        out.at(c, y, x) = (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) +
                          wy * ((1.0 - wx) * v10 + wx * v11);
      }
    }
  }
  return out;
}

inline void flip_horizontal(ImageTensor& img) {
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width / 2; ++x)
        std::swap(img.at(c, y, x), img.at(c, y, img.width - 1 - x));
}

// Per-channel affine brightness/contrast, clamped back into [0, 1].
inline void color_jitter(ImageTensor& img, double strength, Rng& rng) {
  for (std::size_t c = 0; c < img.channels; ++c) {
    const double contrast = rng.uniform(1.0 - strength, 1.0 + strength);
    const double brightness = rng.uniform(-strength, strength);
    for (std::size_t y = 0; y < img.height; ++y) {
      for (std::size_t x = 0; x < img.width; ++x) {
        img.at(c, y, x) =
            std::clamp(contrast * img.at(c, y, x) + brightness, 0.0, 1.0);
      }
    }
  }
}

inline void gaussian_blur(ImageTensor& img, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double ksum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    ksum += kernel[i + radius];
  }
  for (double& k : kernel) k /= ksum;

  const auto h = static_cast<int>(img.height);
  const auto w = static_cast<int>(img.width);
  // Separable passes with clamp-to-edge sampling.
  ImageTensor tmp = img;
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int xs = std::clamp(x + i, 0, w - 1);
          acc += kernel[i + radius] * img.at(c, y, xs);
        }
        tmp.at(c, y, x) = acc;
      }
    }
  }
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int ys = std::clamp(y + i, 0, h - 1);
          acc += kernel[i + radius] * tmp.at(c, ys, x);
        }
        img.at(c, y, x) = acc;
      }
    }
  }
}

}  // namespace detail

// Multi-crop views of an image: n_global crops at global_size from the wide
// scale range, then n_local crops at local_size from the narrow range. Crop
// geometry, flips, jitter and blur each draw from their own rng stream, so
// changing one stage's parameters never shifts another stage's draws.
inline MultiCropResult multicrop_image(const ImageTensor& img,
                                       const MultiCropSpec& spec, Rng& rng) {
  spec.validate();
  if (img.height < 4 || img.width < 4 || img.channels < 1) {
    throw DegenerateInputError("multicrop_image: image too small");
  }

  const std::size_t n_views = spec.n_global + spec.n_local;
  MultiCropResult res;
  res.views.reserve(n_views);
  res.rects.reserve(n_views);

  for (std::size_t v = 0; v < n_views; ++v) {
    const bool global = v < spec.n_global;
    Rng crop_rng = rng.split("crop", v);
    Rng flip_rng = rng.split("flip", v);
    Rng jitter_rng = rng.split("jitter", v);
    Rng blur_rng = rng.split("blur", v);

    const CropRect rect = detail::sample_crop(
        img.height, img.width, global ? spec.global_scale : spec.local_scale,
        crop_rng);
    ImageTensor view = detail::crop_resize(
        img, rect, global ? spec.global_size : spec.local_size);

    if (spec.flip_prob > 0.0 && flip_rng.uniform() < spec.flip_prob) {
      detail::flip_horizontal(view);
    }
    if (spec.color_jitter_strength > 0.0) {
      detail::color_jitter(view, spec.color_jitter_strength, jitter_rng);
    }
    if (spec.blur_sigma_range.second > 0.0) {
      const double sigma = blur_rng.uniform(spec.blur_sigma_range.first,
                                            spec.blur_sigma_range.second);
      detail::gaussian_blur(view, sigma);
    }
    res.views.push_back(std::move(view));
    res.rects.push_back(rect);
  }
  return res;
}

// x' = scale * (x + noise), with coordinates zeroed independently.
inline std::vector<double> augment_vector(const std::vector<double>& x,
                                          const VectorAugConfig& cfg, Rng& rng) {
  cfg.validate();
  Rng noise_rng = rng.split("noise");
  Rng dropout_rng = rng.split("dropout");
  Rng scale_rng = rng.split("scale");

  std::vector<double> out = x;
  if (cfg.noise_sigma > 0.0) {
    for (double& v : out) v += noise_rng.normal(0.0, cfg.noise_sigma);
  }
  if (cfg.dropout_prob > 0.0) {
    for (double& v : out) {
      if (dropout_rng.uniform() < cfg.dropout_prob) v = 0.0;
    }
  }
  if (cfg.scale_jitter > 0.0) {
    const double s =
        scale_rng.uniform(1.0 - cfg.scale_jitter, 1.0 + cfg.scale_jitter);
    for (double& v : out) v *= s;
  }
  return out;
}

}  // namespace swav
