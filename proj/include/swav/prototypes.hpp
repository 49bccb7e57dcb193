#pragma once

// Trainable prototype bank: a D x K matrix with unit-norm columns. Features
// are scored against it by plain dot products.

#include <cstddef>
#include <string>

#include "swav/errors.hpp"
#include "swav/matrix.hpp"
#include "swav/rng.hpp"

namespace swav {

using FeatureBatch = Mat;  // B x D, unit-norm rows

struct PrototypeBank {
  Mat c;  // D x K, unit-norm columns
  // Blocks gradient updates only; renormalization still applies.
  bool frozen = false;

  std::size_t dim() const { return c.rows; }
  std::size_t k() const { return c.cols; }
};

// Columns rescaled to unit norm, directions preserved.
inline PrototypeBank renormalize_prototypes(PrototypeBank bank) {
  for (std::size_t j = 0; j < bank.c.cols; ++j) {
    double norm = 0.0;
    for (std::size_t i = 0; i < bank.c.rows; ++i) {
      const double v = bank.c.at(i, j);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
      throw DegenerateInputError("renormalize_prototypes: column " +
                                 std::to_string(j) + " has near-zero norm");
    }
    for (std::size_t i = 0; i < bank.c.rows; ++i) bank.c.at(i, j) /= norm;
  }
  return bank;
}

inline PrototypeBank init_prototypes(std::size_t embed_dim, std::size_t k,
                                     Rng& rng) {
  if (embed_dim < 1 || k < 1) {
    throw ConfigError("init_prototypes: dimensions must be >= 1");
  }
  PrototypeBank bank;
  bank.c = Mat(embed_dim, k);
  Rng stream = rng.split("prototype_init");
  for (double& v : bank.c.data) v = stream.normal();
  return renormalize_prototypes(std::move(bank));
}

// scores[i][k] = z_i . c_k
inline Mat prototype_scores(const FeatureBatch& z, const PrototypeBank& bank) {
  if (z.cols != bank.c.rows) {
    throw ShapeError("prototype_scores: features " + z.shape_str() +
                     " vs prototypes " + bank.c.shape_str());
  }
  return matmul(z, bank.c);
}

}  // namespace swav
