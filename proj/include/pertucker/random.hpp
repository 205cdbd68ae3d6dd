#pragma once

#include <cstdint>
#include <random>

#include "pertucker/tensor.hpp"

namespace pertucker {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent seed streams.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Seed for sub-stream `stream` of `base` (e.g. one per source index).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix_seed(mix_seed(base) ^ mix_seed(stream + 0x632BE59BD9B4E019ull));
}

inline Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double stddev = 1.0) {
  std::normal_distribution<double> nd(0.0, stddev);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  // Column-major fill so the draw order matches the storage order.
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = nd(rng);
  return m;
}

inline DenseTensor gaussian_tensor(Rng& rng, Dims dims, double stddev = 1.0) {
  std::normal_distribution<double> nd(0.0, stddev);
  return DenseTensor::generate(std::move(dims), [&](std::size_t) { return nd(rng); });
}

}  // namespace pertucker
