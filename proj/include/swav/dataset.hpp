#pragma once

// Synthetic labeled mixtures, a small binary dataset container ("SSLD"
// files), and deterministic stratified splits.

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "swav/errors.hpp"
#include "swav/matrix.hpp"
#include "swav/rng.hpp"

namespace swav {

struct SyntheticConfig {
  std::size_t n_classes = 8;
  std::size_t raw_dim = 64;
  std::size_t latent_dim = 16;
  std::size_t n_samples = 4096;
  double class_separation = 4.0;
  double noise_sigma = 0.5;
  std::uint64_t nonlinearity_seed = 7;

  void validate() const {
    if (n_classes < 1 || raw_dim < 1 || latent_dim < 1) {
      throw ConfigError("synthetic: dims and class count must be >= 1");
    }
    if (n_samples < n_classes) {
      throw ConfigError("synthetic: need at least one sample per class");
    }
  }
};

enum class DatasetKind : std::uint8_t { vector = 0, image = 1 };

struct Dataset {
  DatasetKind kind = DatasetKind::vector;
  Mat features;  // N x D (vector) or N x (C*H*W) (image, flattened CHW)
  std::size_t channels = 0, height = 0, width = 0;  // image kind only
  bool has_labels = false;
  std::vector<std::int32_t> labels;

  std::size_t size() const { return features.rows; }
  std::size_t dim() const { return features.cols; }
};

// Class means drawn on a latent sphere scaled by class_separation; samples
// are mean + isotropic noise pushed through a fixed random two-layer ReLU map
// into raw space. Classes are balanced within one sample.
inline Dataset generate_synthetic(const SyntheticConfig& cfg, Rng& rng) {
  cfg.validate();
  Rng mean_rng = rng.split("class_means");
  Rng noise_rng = rng.split("sample_noise");
  Rng order_rng = rng.split("sample_order");

  Mat means(cfg.n_classes, cfg.latent_dim);
  for (std::size_t c = 0; c < cfg.n_classes; ++c) {
    for (std::size_t j = 0; j < cfg.latent_dim; ++j)
      means.at(c, j) = mean_rng.normal();
  }
  means = l2_normalize_rows(means);
  means *= cfg.class_separation;

  // Fixed random nonlinearity, independent of the sampling streams.
  const std::size_t hidden = 2 * cfg.raw_dim;
  Rng nl_rng(cfg.nonlinearity_seed, "nonlinearity");
  Mat w1(cfg.latent_dim, hidden), w2(hidden, cfg.raw_dim);
  std::vector<double> b1(hidden);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (double& v : w1.data) v = nl_rng.normal(0.0, s1);
  for (double& v : b1) v = nl_rng.normal(0.0, 0.1);
  for (double& v : w2.data) v = nl_rng.normal(0.0, s2);

  // Balanced labels in a shuffled order.
  std::vector<std::int32_t> labels(cfg.n_samples);
  for (std::size_t i = 0; i < cfg.n_samples; ++i)
    labels[i] = static_cast<std::int32_t>(i % cfg.n_classes);
  order_rng.shuffle(labels);

  Mat latent(cfg.n_samples, cfg.latent_dim);
  for (std::size_t i = 0; i < cfg.n_samples; ++i) {
    const double* mu = means.row_ptr(static_cast<std::size_t>(labels[i]));
    double* row = latent.row_ptr(i);
    for (std::size_t j = 0; j < cfg.latent_dim; ++j)
      row[j] = mu[j] + noise_rng.normal(0.0, cfg.noise_sigma);
  }

  Mat h = matmul(latent, w1);
  for (std::size_t i = 0; i < h.rows; ++i) {
    double* row = h.row_ptr(i);
    for (std::size_t j = 0; j < h.cols; ++j) {
      row[j] += b1[j];
      if (row[j] < 0.0) row[j] = 0.0;
    }
  }

  Dataset ds;
  ds.kind = DatasetKind::vector;
  ds.features = matmul(h, w2);
  ds.has_labels = true;
  ds.labels = std::move(labels);
  return ds;
}

// Tiny procedural image classes: each class is a (stripe frequency,
// orientation, color emphasis) triple rendered with per-sample phase and
// intensity noise. Exercises the multi-crop path without external data.
inline Dataset generate_synthetic_images(std::size_t n_classes,
                                         std::size_t n_samples,
                                         std::size_t size, Rng& rng) {
  if (size < 8) throw ConfigError("synthetic images: size must be >= 8");
  Rng order_rng = rng.split("sample_order");
  Rng draw_rng = rng.split("draw");

  std::vector<std::int32_t> labels(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i)
    labels[i] = static_cast<std::int32_t>(i % n_classes);
  order_rng.shuffle(labels);

  const std::size_t channels = 3;
  Dataset ds;
  ds.kind = DatasetKind::image;
  ds.channels = channels;
  ds.height = size;
  ds.width = size;
  ds.features = Mat(n_samples, channels * size * size);
  ds.has_labels = true;

  for (std::size_t i = 0; i < n_samples; ++i) {
    Rng item = draw_rng.split("item", i);
    const auto cls = static_cast<std::size_t>(labels[i]);
    const double freq = 1.0 + static_cast<double>(cls % 4);
    const bool vertical = (cls / 4) % 2 == 0;
    const std::size_t hot_channel = cls % channels;
    const double phase = item.uniform(0.0, 6.283185307179586);
    const double gain = item.uniform(0.7, 1.0);
    double* row = ds.features.row_ptr(i);
    for (std::size_t c = 0; c < channels; ++c) {
      const double emphasis = c == hot_channel ? 1.0 : 0.35;
      for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
          const double t = static_cast<double>(vertical ? x : y) /
                           static_cast<double>(size);
          double v = 0.5 + 0.5 * std::sin(6.283185307179586 * freq * t + phase);
          v = emphasis * gain * v + item.uniform(0.0, 0.05);
          row[(c * size + y) * size + x] = std::clamp(v, 0.0, 1.0);
        }
      }
    }
  }
  ds.labels = std::move(labels);
  return ds;
}

namespace detail {

inline void put_u16(std::vector<unsigned char>& b, std::uint16_t v) {
  b.push_back(static_cast<unsigned char>(v & 0xff));
  b.push_back(static_cast<unsigned char>(v >> 8));
}
inline void put_u32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
inline void put_u64(std::vector<unsigned char>& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
inline void put_f64(std::vector<unsigned char>& b, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u64(b, bits);
}

struct ByteReader {
  const std::vector<unsigned char>& buf;
  std::size_t pos = 0;
  std::string what;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) {
      throw IoError(what + ": truncated, expected " + std::to_string(pos + n) +
                    " bytes but file has " + std::to_string(buf.size()));
    }
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(buf[pos]) |
                      static_cast<std::uint16_t>(buf[pos + 1]) << 8;
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return buf[pos++];
  }
};

inline std::vector<unsigned char> read_file(const std::filesystem::path& path,
                                            const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(what + ": cannot open " + path.string());
  std::vector<unsigned char> buf(
      (std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return buf;
}

inline void write_file(const std::filesystem::path& path,
                       const std::vector<unsigned char>& buf,
                       const std::string& what) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(what + ": cannot open " + path.string() +
                          " for writing");
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError(what + ": short write to " + path.string());
}

}  // namespace detail

constexpr std::uint16_t kDatasetVersion = 1;

// "SSLD" container: magic, version u16, kind u8, label flag u8, counts, f64
// little-endian payload, then i32 labels when present.
inline void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::vector<unsigned char> buf;
  buf.insert(buf.end(), {'S', 'S', 'L', 'D'});
  detail::put_u16(buf, kDatasetVersion);
  buf.push_back(static_cast<unsigned char>(ds.kind));
  buf.push_back(ds.has_labels ? 1 : 0);
  detail::put_u32(buf, static_cast<std::uint32_t>(ds.size()));
  if (ds.kind == DatasetKind::vector) {
    detail::put_u32(buf, static_cast<std::uint32_t>(ds.dim()));
  } else {
    detail::put_u32(buf, static_cast<std::uint32_t>(ds.channels));
    detail::put_u32(buf, static_cast<std::uint32_t>(ds.height));
    detail::put_u32(buf, static_cast<std::uint32_t>(ds.width));
  }
  for (double v : ds.features.data) detail::put_f64(buf, v);
  if (ds.has_labels) {
    for (std::int32_t l : ds.labels)
      detail::put_u32(buf, static_cast<std::uint32_t>(l));
  }
  detail::write_file(path, buf, "save_dataset");
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  const std::vector<unsigned char> buf =
      detail::read_file(path, "load_dataset");
  detail::ByteReader r{buf, 0, "load_dataset"};
  r.need(4);
  if (!(buf[0] == 'S' && buf[1] == 'S' && buf[2] == 'L' && buf[3] == 'D')) {
    throw IoError("load_dataset: bad magic in " + path.string());
  }
  r.pos = 4;
  const std::uint16_t version = r.u16();
  if (version != kDatasetVersion) {
    throw IoError("load_dataset: unsupported version " +
                  std::to_string(version));
  }
  Dataset ds;
  const std::uint8_t kind = r.u8();
  if (kind > 1) throw IoError("load_dataset: unknown kind byte");
  ds.kind = static_cast<DatasetKind>(kind);
  const bool has_labels = r.u8() != 0;
  const std::uint32_t n = r.u32();
  std::size_t dim = 0;
  if (ds.kind == DatasetKind::vector) {
    dim = r.u32();
  } else {
    ds.channels = r.u32();
    ds.height = r.u32();
    ds.width = r.u32();
    dim = ds.channels * ds.height * ds.width;
  }
  ds.features = Mat(n, dim);
  for (double& v : ds.features.data) v = r.f64();
  ds.has_labels = has_labels;
  if (has_labels) {
    ds.labels.resize(n);
    for (auto& l : ds.labels) l = static_cast<std::int32_t>(r.u32());
  }
  if (r.pos != buf.size()) {
    throw IoError("load_dataset: " + std::to_string(buf.size() - r.pos) +
                  " trailing bytes");
  }
  return ds;
}

// Disjoint covering partitions of the dataset's indices; per-class
// stratified when labels are present. Fractions must sum to 1.
inline std::vector<std::vector<std::size_t>> split(
    const Dataset& ds, const std::vector<double>& fractions, Rng& rng) {
  double sum = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw ConfigError("split: negative fraction");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("split: fractions sum to " + std::to_string(sum) +
                      ", expected 1");
  }

  std::vector<std::vector<std::size_t>> groups;
  if (ds.has_labels) {
    std::int32_t max_label = 0;
    for (std::int32_t l : ds.labels) max_label = std::max(max_label, l);
    groups.resize(static_cast<std::size_t>(max_label) + 1);
    for (std::size_t i = 0; i < ds.size(); ++i)
      groups[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  } else {
    groups.resize(1);
    for (std::size_t i = 0; i < ds.size(); ++i) groups[0].push_back(i);
  }

  Rng stream = rng.split("split");
  std::vector<std::vector<std::size_t>> parts(fractions.size());
  for (auto& g : groups) {
    stream.shuffle(g);
    std::size_t taken = 0;
    for (std::size_t p = 0; p < fractions.size(); ++p) {
      std::size_t count;
      if (p + 1 == fractions.size()) {
        count = g.size() - taken;  // remainder keeps the union covering
      } else {
        double cum = 0.0;
        for (std::size_t q = 0; q <= p; ++q) cum += fractions[q];
        const auto upto = static_cast<std::size_t>(
            std::lround(cum * static_cast<double>(g.size())));
        count = upto - taken;
      }
      for (std::size_t i = 0; i < count; ++i) parts[p].push_back(g[taken + i]);
      taken += count;
    }
  }
  return parts;
}

inline Mat gather_rows(const Mat& m, const std::vector<std::size_t>& idx) {
  Mat out(idx.size(), m.cols);
  for (std::size_t i = 0; i < idx.size(); ++i) out.set_row(i, m.row(idx[i]));
  return out;
}

inline std::vector<std::int32_t> gather_labels(
    const std::vector<std::int32_t>& labels, const std::vector<std::size_t>& idx) {
  std::vector<std::int32_t> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = labels[idx[i]];
  return out;
}

}  // namespace swav
