// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "bism/models.hpp"
#include "bism/rng.hpp"
#include "bism/tensor.hpp"

namespace bism::data {

struct Dataset {
  Tensor points;  // [n x d]
  std::string name;
  std::string generator;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return points.rows(); }
  std::size_t dim() const noexcept { return points.cols(); }
  /// ShapeError unless [n x d] with n >= 1; DomainError on non-finite values.
  void validate() const;
  /// Rows [begin, end) as a new dataset.
  Dataset slice(std::size_t begin, std::size_t end) const;
};

/// Uniform on the 8 filled unit cells of a centred 4x4 board over [-2, 2)^2,
/// by rejection from the full square.
Dataset checkerboard(std::size_t n, Rng& rng);

/// Exact draws from a GRBM: h from its enumerated marginal, then v | h.
/// SizeError for d_h > 10.
Dataset grbm_synthetic(const models::GrbmParams& theta, std::size_t n, Rng& rng);

/// Equal-weight isotropic Gaussian mixture with `components` random centres
/// drawn uniformly in [-spread, spread]^d and per-component scale `scale`.
Dataset gaussian_mixture(std::size_t n, std::size_t d, std::size_t components, double spread,
                         double scale, Rng& rng);

/// Per-epoch shuffled minibatches; the trailing short batch of an epoch is dropped.
class BatchIterator {
 public:
  BatchIterator(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed);

  /// [batch_size x d]
  Tensor next_batch();
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch_size() const noexcept { return batch_size_; }

 private:
  void reshuffle();

  const Dataset* dataset_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

/// Text format: `# dataset v1 <n> <d>` then one row per line, 17 significant digits.
void write_dataset(std::ostream& out, const Dataset& dataset);
/// ParseError naming the offending line.
Dataset read_dataset(std::istream& in, const std::string& source = "<stream>");
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace bism::data
