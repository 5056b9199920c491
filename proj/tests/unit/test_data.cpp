// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <set>
#include <sstream>

#include "bism/data.hpp"
#include "bism/error.hpp"
#include "oracles.hpp"

namespace {

using namespace bism;
using namespace bism::data;

std::size_t cell_of(double x, double y) {
  return static_cast<std::size_t>(std::floor(y + 2)) * 4 + static_cast<std::size_t>(std::floor(x + 2));
}

// ---------------------------------------------------------------------------
// Checkerboard

TEST(Checkerboard, PointsLieOnFilledCellsInsideTheBoard) {
  Rng rng(1);
  const auto ds = checkerboard(20000, rng);
  ASSERT_EQ(ds.size(), 20000U);
  ASSERT_EQ(ds.dim(), 2U);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double x = ds.points(i, 0);
    const double y = ds.points(i, 1);
    ASSERT_TRUE(x >= -2 && x < 2 && y >= -2 && y < 2) << x << ", " << y;
    const auto parity = static_cast<long>(std::floor(x + 2)) + static_cast<long>(std::floor(y + 2));
    ASSERT_EQ(parity % 2, 0) << x << ", " << y;
  }
}

TEST(Checkerboard, FilledCellOccupancyIsUniform) {
  Rng rng(2);
  const auto ds = checkerboard(100000, rng);
  std::array<double, 16> count{};
  for (std::size_t i = 0; i < ds.size(); ++i) count[cell_of(ds.points(i, 0), ds.points(i, 1))] += 1;
  for (std::size_t cell = 0; cell < 16; ++cell) {
    if ((cell / 4 + cell % 4) % 2 == 0) {
      EXPECT_NEAR(count[cell] / 12500.0, 1.0, 0.02) << "cell " << cell;
    } else {
      EXPECT_EQ(count[cell], 0.0) << "cell " << cell;
    }
  }
}

TEST(Checkerboard, AcceptsHalfOfTheProposals) {
  // Replays the proposal stream of the same seed: every accepted point must
  // be the next even-parity proposal, and the proposal count gives the rate.
  constexpr std::size_t kProposals = 1000000;
  Rng replay(3);
  std::vector<std::array<double, 2>> accepted;
  for (std::size_t k = 0; k < kProposals; ++k) {
    const double x = 4 * replay.uniform();
    const double y = 4 * replay.uniform();
    if ((static_cast<long>(std::floor(x)) + static_cast<long>(std::floor(y))) % 2 == 0) {
      accepted.push_back({x - 2, y - 2});
    }
  }
  const double rate = static_cast<double>(accepted.size()) / kProposals;
  EXPECT_GE(rate, 0.49);
  EXPECT_LE(rate, 0.51);

  Rng rng(3);
  const auto ds = checkerboard(accepted.size(), rng);
  for (std::size_t i = 0; i < ds.size(); i += 997) {
    EXPECT_EQ(ds.points(i, 0), accepted[i][0]);
    EXPECT_EQ(ds.points(i, 1), accepted[i][1]);
  }
}

// ---------------------------------------------------------------------------
// GRBM samples

TEST(GrbmSynthetic, DecoupledModelIsGaussian) {
  Rng rng(4);
  const Tensor b = Tensor::vector({1.0, -0.5, 0.25});
  const auto theta = models::GrbmParams::make(0.6, Tensor({3, 4}), b, Tensor::full({4}, 0.4));
  const auto ds = grbm_synthetic(theta, 100000, rng);
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0;
    double s2 = 0;
    for (std::size_t r = 0; r < ds.size(); ++r) {
      s += ds.points(r, i);
      s2 += ds.points(r, i) * ds.points(r, i);
    }
    const double n = static_cast<double>(ds.size());
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    EXPECT_LT(std::abs(mean - b[i]), 3 * std::sqrt(0.36 / n)) << "mean " << i;
    // Var of the sample variance of a Gaussian is 2 sigma^4 / n.
    EXPECT_LT(std::abs(var - 0.36), 3 * std::sqrt(2 * 0.36 * 0.36 / n)) << "variance " << i;
  }
}

TEST(GrbmSynthetic, HistogramMatchesBruteForceDensity) {
  Rng rng(5);
  const auto theta = oracle::random_grbm(2, 3, rng);
  const auto g = oracle::Grbm::from(theta);
  const auto ds = grbm_synthetic(theta, 1000000, rng);

  // 20 x 20 coarse cells over a box holding nearly all the mass, plus one
  // outside bin; cell masses by 10 x 10 midpoint sub-quadrature.
  double lo[2] = {1e300, 1e300};
  double hi[2] = {-1e300, -1e300};
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (std::size_t i = 0; i < 2; ++i) {
      lo[i] = std::min(lo[i], ds.points(r, i));
      hi[i] = std::max(hi[i], ds.points(r, i));
    }
  }
  constexpr std::size_t kCells = 20;
  constexpr std::size_t kSub = 10;
  const double wx = (hi[0] - lo[0]) / kCells;
  const double wy = (hi[1] - lo[1]) / kCells;
  const double log_z = g.log_partition();
  std::vector<double> exact(kCells * kCells + 1, 0.0);
  double inside = 0;
  for (std::size_t cy = 0; cy < kCells; ++cy) {
    for (std::size_t cx = 0; cx < kCells; ++cx) {
      double m = 0;
      for (std::size_t sy = 0; sy < kSub; ++sy) {
        for (std::size_t sx = 0; sx < kSub; ++sx) {
          const double v[2] = {lo[0] + wx * (cx + (sx + 0.5) / kSub), lo[1] + wy * (cy + (sy + 0.5) / kSub)};
          m += std::exp(-g.free_energy(v) - log_z) * wx * wy / (kSub * kSub);
        }
      }
      exact[cy * kCells + cx] = m;
      inside += m;
    }
  }
  exact.back() = std::max(0.0, 1.0 - inside);

  std::vector<double> hist(kCells * kCells + 1, 0.0);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    const auto cx = std::min(kCells - 1, static_cast<std::size_t>((ds.points(r, 0) - lo[0]) / wx));
    const auto cy = std::min(kCells - 1, static_cast<std::size_t>((ds.points(r, 1) - lo[1]) / wy));
    hist[cy * kCells + cx] += 1.0 / static_cast<double>(ds.size());
  }
  double tv = 0;
  for (std::size_t k = 0; k < hist.size(); ++k) tv += std::abs(hist[k] - exact[k]);
  EXPECT_LT(0.5 * tv, 0.02);
}

TEST(GrbmSynthetic, FixedSeedIsDeterministic) {
  Rng setup(6);
  const auto theta = oracle::random_grbm(3, 4, setup);
  Rng a(11);
  Rng b(11);
  EXPECT_EQ(grbm_synthetic(theta, 500, a).points, grbm_synthetic(theta, 500, b).points);
}

TEST(GrbmSynthetic, RejectsTooManyLatents) {
  Rng rng(7);
  const auto theta = models::GrbmParams::make(1.0, Tensor({2, 11}), Tensor({2}), Tensor({11}));
  EXPECT_THROW(grbm_synthetic(theta, 10, rng), SizeError);
}

TEST(GaussianMixture, ShapeAndValidation) {
  Rng rng(8);
  const auto ds = gaussian_mixture(300, 3, 4, 2.0, 0.1, rng);
  EXPECT_EQ(ds.points.shape(), (Tensor::Shape{300, 3}));
  EXPECT_TRUE(ds.points.all_finite());
  EXPECT_THROW(gaussian_mixture(10, 2, 0, 1.0, 0.1, rng), ShapeError);
  EXPECT_THROW(gaussian_mixture(10, 2, 3, 1.0, 0.0, rng), DomainError);
}

// ---------------------------------------------------------------------------
// Minibatching

Dataset indexed(std::size_t n) {
  Tensor pts({n, 1});
  for (std::size_t i = 0; i < n; ++i) pts(i, 0) = static_cast<double>(i);
  return Dataset{pts, "idx", "test", 0};
}

std::vector<std::size_t> epoch_ids(BatchIterator& it, std::size_t batches) {
  std::vector<std::size_t> ids;
  for (std::size_t k = 0; k < batches; ++k) {
    const Tensor b = it.next_batch();
    for (double x : b.data()) ids.push_back(static_cast<std::size_t>(x));
  }
  return ids;
}

TEST(BatchIterator, EpochCoversDatasetMinusRemainder) {
  const auto ds = indexed(103);
  BatchIterator it(ds, 10, 42);
  const auto ids = epoch_ids(it, 10);
  EXPECT_EQ(it.epoch(), 0U);
  const std::set<std::size_t> unique(ids.begin(), ids.end());
  EXPECT_EQ(unique.size(), 100U);
  // The eleventh batch starts a new epoch instead of using the 3 leftovers.
  it.next_batch();
  EXPECT_EQ(it.epoch(), 1U);
}

TEST(BatchIterator, EqualSeedsGiveEqualSequences) {
  const auto ds = indexed(50);
  BatchIterator a(ds, 7, 9);
  BatchIterator b(ds, 7, 9);
  for (int k = 0; k < 30; ++k) EXPECT_EQ(a.next_batch(), b.next_batch());
}

TEST(BatchIterator, ConsecutiveEpochsArePermutedDifferently) {
  const auto ds = indexed(1000);
  BatchIterator it(ds, 100, 5);
  const auto first = epoch_ids(it, 10);
  const auto second = epoch_ids(it, 10);
  EXPECT_EQ(it.epoch(), 1U);
  EXPECT_NE(first, second);
  EXPECT_EQ(std::set<std::size_t>(second.begin(), second.end()).size(), 1000U);
}

TEST(BatchIterator, RejectsBadBatchSizes) {
  const auto ds = indexed(5);
  EXPECT_THROW(BatchIterator(ds, 0, 1), ShapeError);
  EXPECT_THROW(BatchIterator(ds, 6, 1), ShapeError);
}

// ---------------------------------------------------------------------------
// Persistence

TEST(DatasetIo, TextRoundTripIsBitExact) {
  Rng rng(9);
  Tensor pts = rng.normal_tensor({50, 3});
  pts(0, 0) = 0.1;
  pts(0, 1) = std::numeric_limits<double>::min();
  pts(0, 2) = -1e300;
  pts(1, 0) = std::nextafter(1.0, 2.0);
  const Dataset ds{pts, "rt", "test", 9};
  std::stringstream ss;
  write_dataset(ss, ds);
  EXPECT_EQ(ss.str().rfind("# dataset v1 50 3\n", 0), 0U);
  const auto back = read_dataset(ss);
  EXPECT_EQ(back.points, ds.points);
}

TEST(DatasetIo, FileRoundTrip) {
  Rng rng(10);
  const auto ds = checkerboard(64, rng);
  const auto path = std::filesystem::temp_directory_path() / "bism_dataset_roundtrip.txt";
  save_dataset(path, ds);
  const auto back = load_dataset(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.points, ds.points);
  EXPECT_EQ(back.name, "bism_dataset_roundtrip");
}

std::string parse_message(const std::string& text) {
  std::istringstream in(text);
  try {
    read_dataset(in, "pts.txt");
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

TEST(DatasetIo, ParseErrorsNameTheLine) {
  EXPECT_NE(parse_message("# dataset v2 2 2\n1 2\n3 4\n").find("pts.txt:1:"), std::string::npos);
  EXPECT_NE(parse_message("# dataset v1 3 2\n1 2\n3 4\n5 x\n").find("pts.txt:4:"), std::string::npos);
  EXPECT_NE(parse_message("# dataset v1 2 2\n1 2 3\n3 4\n").find("pts.txt:2:"), std::string::npos);
  EXPECT_NE(parse_message("# dataset v1 3 2\n1 2\n3 4\n").find("pts.txt:4:"), std::string::npos);
  EXPECT_NE(parse_message("").find("pts.txt:1:"), std::string::npos);
}

TEST(DatasetIo, MissingFileIsAResourceError) {
  EXPECT_THROW(load_dataset("/nonexistent/bism/data.txt"), ResourceError);
}

TEST(Dataset, ValidateAndSlice) {
  Dataset ds{Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6}), "s", "test", 0};
  EXPECT_NO_THROW(ds.validate());
  const auto mid = ds.slice(1, 3);
  EXPECT_EQ(mid.points, Tensor::matrix(2, 2, {3, 4, 5, 6}));
  EXPECT_THROW(ds.slice(2, 2), ShapeError);
  EXPECT_THROW(ds.slice(0, 4), ShapeError);
  ds.points(0, 0) = std::nan("");
  EXPECT_THROW(ds.validate(), DomainError);
}

}  // namespace
