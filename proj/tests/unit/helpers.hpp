#pragma once

#include <cstdint>
#include <vector>

#include "eatta/model.hpp"
#include "eatta/rng.hpp"
#include "eatta/stream.hpp"

namespace testutil {

inline eatta::Matrix random_matrix(int rows, int cols, std::uint64_t seed, double scale = 1.0) {
  eatta::Rng rng(seed);
  eatta::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

/// Random init with norm scale/shift moved off their defaults.
inline eatta::Model random_model(const eatta::ArchSpec& arch, std::uint64_t seed) {
  eatta::Model m = eatta::Model::init(arch, seed);
  eatta::Rng rng(seed ^ 0x5eedULL);
  std::vector<double> t = m.trainable_params();
  for (double& v : t) v += 0.3 * rng.normal();
  m.set_trainable_params(t);
  return m;
}

inline eatta::Batch make_batch(const eatta::Matrix& x, std::vector<int> labels, std::uint64_t domain_key = 7,
                               int batch_in_domain = 0) {
  eatta::Batch b;
  b.x = x;
  b.labels = std::move(labels);
  for (int i = 0; i < b.size(); ++i) b.stream_index.push_back(i);
  b.domain_key = domain_key;
  b.batch_in_domain = batch_in_domain;
  b.batch_index = batch_in_domain;
  return b;
}

}  // namespace testutil
