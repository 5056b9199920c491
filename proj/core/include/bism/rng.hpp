// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

#include "bism/tensor.hpp"

namespace bism {

/// Seeded random stream. Every stochastic routine takes one explicitly;
/// nothing in the library touches global random state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Uniform on [0, 1).
  double uniform();
  /// Uniform on (0, 1) clamped to [1e-12, 1 - 1e-12].
  double uniform_open();
  double normal();
  /// Standard logistic draw log U - log(1 - U).
  double logistic();
  /// +1 or -1 with equal probability.
  double rademacher();
  std::uint64_t next_u64() { return engine_(); }
  std::size_t index(std::size_t n);

  Tensor normal_tensor(Tensor::Shape shape);
  Tensor uniform_tensor(Tensor::Shape shape);
  Tensor logistic_tensor(Tensor::Shape shape);
  Tensor rademacher_tensor(Tensor::Shape shape);

  /// Independent stream derived from this one's seed and `stream`.
  Rng split(std::uint64_t stream) const;

  std::mt19937_64& engine() noexcept { return engine_; }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace bism
