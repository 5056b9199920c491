// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "bism/data.hpp"
#include "bism/error.hpp"
#include "bism/eval.hpp"
#include "oracles.hpp"

namespace {

using namespace bism;
using namespace bism::eval;

const double kLog2Pi = std::log(2 * std::numbers::pi);

models::GrbmParams gaussian_model(double sigma, Tensor b, std::size_t dh) {
  const std::size_t dv = b.numel();
  return models::GrbmParams::make(sigma, Tensor({dv, dh}), std::move(b), Tensor({dh}));
}

// Box covering every mixture component by 8 conditional scales.
std::array<double, 4> covering_box(const oracle::Grbm& g) {
  std::array<double, 4> box{1e300, -1e300, 1e300, -1e300};
  for (std::size_t m = 0; m < (std::size_t{1} << g.dh); ++m) {
    const auto h = g.config(m);
    for (std::size_t i = 0; i < 2; ++i) {
      double mu = g.b[i];
      for (std::size_t j = 0; j < g.dh; ++j) mu += g.sigma * g.W[i * g.dh + j] * h[j];
      box[2 * i] = std::min(box[2 * i], mu - 8 * g.sigma);
      box[2 * i + 1] = std::max(box[2 * i + 1], mu + 8 * g.sigma);
    }
  }
  return box;
}

// ---------------------------------------------------------------------------
// Partition function

TEST(LogPartition, FactorisedModel) {
  const auto theta = gaussian_model(1.0, Tensor({2}), 4);
  EXPECT_NEAR(grbm_log_partition(theta), 4 * std::log(2.0) + kLog2Pi, 1e-12);
  EXPECT_NEAR(grbm_log_partition(theta), 4.61047, 1e-5);
}

TEST(LogPartition, MatchesFineQuadratureOnTheReferenceBox) {
  Rng rng(1);
  const auto theta = oracle::random_grbm(2, 4, rng, 0.6);
  const auto g = oracle::Grbm::from(theta);
  const double quad = g.log_partition_quadrature(-10, 10, -10, 10, 2000);
  EXPECT_LT(oracle::rel_err(grbm_log_partition(theta), quad), 1e-3);
}

TEST(LogPartition, MatchesQuadratureAcrossRandomModels) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto theta = oracle::random_grbm(2, 4, rng);
    const auto g = oracle::Grbm::from(theta);
    const auto box = covering_box(g);
    const double quad = g.log_partition_quadrature(box[0], box[1], box[2], box[3], 400);
    EXPECT_LT(oracle::rel_err(grbm_log_partition(theta), quad), 1e-3) << "trial " << trial;
    EXPECT_NEAR(grbm_log_partition(theta), g.log_partition(), 1e-10);
  }
}

TEST(LogPartition, IncreasesInEveryHiddenBias) {
  Rng rng(3);
  const auto theta = oracle::random_grbm(3, 5, rng);
  const double base = grbm_log_partition(theta);
  for (std::size_t j = 0; j < 5; ++j) {
    auto up = theta;
    up.c[j] += 1e-4;
    EXPECT_GT(grbm_log_partition(up), base) << "c_" << j;
  }
}

TEST(LogPartition, RejectsTooManyLatents) {
  const auto theta = gaussian_model(1.0, Tensor({2}), 21);
  EXPECT_THROW(grbm_log_partition(theta), SizeError);
}

// ---------------------------------------------------------------------------
// Test log-likelihood

TEST(TestLogLikelihood, GaussianAtItsMode) {
  const double sigma = 0.7;
  const Tensor b = Tensor::vector({0.3, -1.1, 2.0});
  const auto theta = gaussian_model(sigma, b, 4);
  const double ll = test_log_likelihood(b.reshaped({1, 3}), theta);
  EXPECT_NEAR(ll, -1.5 * std::log(2 * std::numbers::pi * sigma * sigma), 1e-12);
}

TEST(TestLogLikelihood, MatchesPerPointEnumeration) {
  Rng rng(4);
  const auto theta = oracle::random_grbm(3, 4, rng);
  const auto g = oracle::Grbm::from(theta);
  const Tensor data = rng.normal_tensor({25, 3});
  const double log_z = g.log_partition();
  double expect = 0;
  for (std::size_t r = 0; r < 25; ++r) expect += -g.free_energy(&data.data()[r * 3]) - log_z;
  EXPECT_NEAR(test_log_likelihood(data, theta), expect / 25, 1e-10);
}

TEST(TestLogLikelihood, InvariantUnderPermutation) {
  Rng rng(5);
  const auto theta = oracle::random_grbm(2, 3, rng);
  const Tensor data = rng.normal_tensor({3000, 2});
  Tensor shuffled({3000, 2});
  for (std::size_t r = 0; r < 3000; ++r) {
    shuffled(r, 0) = data(2999 - r, 0);
    shuffled(r, 1) = data(2999 - r, 1);
  }
  EXPECT_NEAR(test_log_likelihood(data, theta), test_log_likelihood(shuffled, theta), 1e-12);
}

TEST(TestLogLikelihood, TrueModelBeatsPerturbations) {
  Rng rng(6);
  const auto truth = oracle::random_grbm(2, 4, rng);
  const auto data = data::grbm_synthetic(truth, 10000, rng);
  const double best = test_log_likelihood(data.points, truth);
  const ParamSet params = truth.to_params();
  const auto flat = flatten(params.values);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> dir(flat.size());
    double norm = 0;
    for (double& x : dir) {
      x = rng.normal();
      norm += x * x;
    }
    std::vector<double> moved = flat;
    for (std::size_t k = 0; k < flat.size(); ++k) moved[k] += 0.5 * dir[k] / std::sqrt(norm);
    ParamSet p = params;
    p.values = unflatten(params, moved);
    const auto other = models::GrbmParams::from_params(p);
    EXPECT_GT(best, test_log_likelihood(data.points, other)) << "trial " << trial;
  }
}

// ---------------------------------------------------------------------------
// Test Fisher loss

TEST(TestFisher, StandardNormalAtOrigin) {
  const auto theta = gaussian_model(1.0, Tensor({2}), 3);
  EXPECT_NEAR(test_fisher_loss(Tensor({1, 2}), theta, true), -2.0, 1e-12);
}

TEST(TestFisher, SlicedEstimateConvergesToExactTrace) {
  Rng rng(7);
  const auto theta = oracle::random_grbm(3, 4, rng);
  const Tensor data = rng.normal_tensor({4, 3});
  const double exact = test_fisher_loss(data, theta, true);
  const double sliced = test_fisher_loss(data, theta, false, &rng, 100000);
  EXPECT_LT(oracle::rel_err(exact, sliced), 0.01) << exact << " vs " << sliced;
}

TEST(TestFisher, ExactModeMatchesClosedFormScore) {
  Rng rng(8);
  const auto theta = oracle::random_grbm(2, 3, rng);
  const auto g = oracle::Grbm::from(theta);
  const Tensor data = rng.normal_tensor({10, 2});
  // Fisher term by FD of the oracle free energy: score and Laplacian.
  double expect = 0;
  const double h = 1e-4;
  for (std::size_t r = 0; r < 10; ++r) {
    double v[2] = {data(r, 0), data(r, 1)};
    const double f0 = g.free_energy(v);
    for (std::size_t i = 0; i < 2; ++i) {
      const double keep = v[i];
      v[i] = keep + h;
      const double fp = g.free_energy(v);
      v[i] = keep - h;
      const double fm = g.free_energy(v);
      v[i] = keep;
      const double s = -(fp - fm) / (2 * h);
      expect += 0.5 * s * s - (fp - 2 * f0 + fm) / (h * h);
    }
  }
  EXPECT_NEAR(test_fisher_loss(data, theta, true), expect / 10, 1e-5);
}

TEST(TestFisher, ConstantEnergyShiftLeavesItUnchanged) {
  // With W = 0 the hidden bias only adds a v-independent constant to F.
  Rng rng(9);
  const auto a = gaussian_model(0.9, Tensor::vector({0.2, -0.4}), 3);
  auto b = a;
  b.c = Tensor::vector({1.5, -2.0, 0.7});
  const Tensor data = rng.normal_tensor({50, 2});
  EXPECT_NEAR(test_fisher_loss(data, a, true), test_fisher_loss(data, b, true), 1e-12);
}

TEST(TestFisher, DifferencesMatchTrueFisherDivergences) {
  // Data N(mu, s^2 I). For a model N(b, sigma^2 I) the Fisher divergence is
  // 1/2 [d s^2 (1/sigma^2 - 1/s^2)^2 + ||mu - b||^2 / sigma^4]; the test loss
  // differs from it by a data-only constant.
  const double s = 0.8;
  const Tensor mu = Tensor::vector({0.5, -0.5});
  const auto divergence = [&](double sigma, const Tensor& b) {
    double gap = 0;
    for (std::size_t i = 0; i < 2; ++i) gap += (mu[i] - b[i]) * (mu[i] - b[i]);
    const double k = 1 / (sigma * sigma) - 1 / (s * s);
    return 0.5 * (2 * s * s * k * k + gap / std::pow(sigma, 4));
  };
  // Antithetic pairs cancel the odd moments of the sample exactly.
  Rng rng(10);
  constexpr std::size_t kPairs = 200000;
  Tensor data({2 * kPairs, 2});
  for (std::size_t r = 0; r < kPairs; ++r) {
    for (std::size_t i = 0; i < 2; ++i) {
      const double e = s * rng.normal();
      data(2 * r, i) = mu[i] + e;
      data(2 * r + 1, i) = mu[i] - e;
    }
  }
  const Tensor b1 = Tensor::vector({0.0, 0.0});
  const Tensor b2 = Tensor::vector({1.0, -0.2});
  const auto m1 = gaussian_model(1.0, b1, 2);
  const auto m2 = gaussian_model(1.05, b2, 2);
  const double loss_gap = test_fisher_loss(data, m1, true) - test_fisher_loss(data, m2, true);
  EXPECT_NEAR(loss_gap, divergence(1.0, b1) - divergence(1.05, b2), 1e-3);
}

TEST(TestFisher, SizeAndContractErrors) {
  Rng rng(11);
  const auto big = gaussian_model(1.0, Tensor({9}), 2);
  EXPECT_THROW(test_fisher_loss(Tensor({1, 9}), big, true), SizeError);
  const auto small = gaussian_model(1.0, Tensor({2}), 2);
  EXPECT_THROW(test_fisher_loss(Tensor({1, 2}), small, false), ContractError);
  EXPECT_THROW(test_fisher_loss(Tensor({1, 3}), small, true), ShapeError);
}

// ---------------------------------------------------------------------------
// Posterior Fisher divergence

// E(v, h) = 1/2 ||v||^2 + 1/2 ||h - m||^2, so p(h | v) = N(m, I).
class ShiftedGaussianEnergy final : public models::EnergyModel {
 public:
  explicit ShiftedGaussianEnergy(std::size_t d) : d_(d) {}
  std::string kind() const override { return "toy"; }
  std::size_t visible_dim() const override { return d_; }
  std::size_t latent_dim() const override { return d_; }
  ad::Var energy(const ad::Var& v, const ad::Var& h, models::ParamVars theta) const override {
    return ad::scale(ad::add(ad::sum_rows(ad::square(v)), ad::sum_rows(ad::square(ad::sub(h, theta[0])))), 0.5);
  }
  ParamSet init_params(Rng&) const override {
    ParamSet p;
    p.add("m", Tensor({d_}));
    return p;
  }

 private:
  std::size_t d_;
};

ParamSet constant_posterior(const posteriors::GaussianPosterior& q, double mean, Rng& rng) {
  ParamSet phi = q.init_params(rng);
  for (const char* name : {"mean.0.weight", "log_std.0.weight", "log_std.0.bias"}) {
    for (double& x : phi.at(name).data()) x = 0;
  }
  for (double& x : phi.at("mean.0.bias").data()) x = mean;
  return phi;
}

TEST(PosteriorFisher, ZeroForTheExactConditional) {
  Rng rng(12);
  const ShiftedGaussianEnergy model(2);
  const posteriors::GaussianPosterior q(2, 2, {4});
  ParamSet theta = model.init_params(rng);
  theta.values[0] = Tensor::vector({-0.3, -0.3});
  const ParamSet phi = constant_posterior(q, -0.3, rng);
  EXPECT_LT(posterior_fisher_eval(model, q, theta, phi, rng.normal_tensor({40, 2}), rng), 1e-8);
}

TEST(PosteriorFisher, OneDimensionalMeanShift) {
  Rng rng(13);
  const ShiftedGaussianEnergy model(1);
  const posteriors::GaussianPosterior q(1, 1, {3});
  ParamSet theta = model.init_params(rng);
  theta.values[0] = Tensor::vector({0.25});
  const ParamSet phi = constant_posterior(q, 1.0, rng);
  const double value = posterior_fisher_eval(model, q, theta, phi, rng.normal_tensor({30, 1}), rng);
  EXPECT_NEAR(value, 0.5 * 0.75 * 0.75, 1e-10);
}

TEST(PosteriorFisher, DiscretePosteriorIsUnsupported) {
  Rng rng(14);
  const models::GrbmModel model(2, 2);
  const posteriors::BernoulliPosterior q(2, 2, 0.1);
  EXPECT_THROW(posterior_fisher_eval(model, q, model.init_params(rng), q.init_params(rng),
                                     Tensor({3, 2}), rng),
               UnsupportedError);
}

// ---------------------------------------------------------------------------
// Density grids

TEST(DensityGrid, NormalisedMassSumsToOne) {
  const auto theta = gaussian_model(0.5, Tensor::vector({0.3, -0.2}), 3);
  const auto grid = density_grid(theta, 0.3 - 4, 0.3 + 4, -0.2 - 4, -0.2 + 4, 200, 200);
  double total = 0;
  for (double p : grid.probability) total += p;
  EXPECT_NEAR(total, 1.0, 1e-3);
  EXPECT_EQ(grid.log_density.size(), 200U * 200U);
}

TEST(DensityGrid, StandardNormalIsSymmetric) {
  const auto theta = gaussian_model(1.0, Tensor({2}), 2);
  const auto grid = density_grid(theta, -3, 3, -3, 3, 30, 30);
  const std::size_t n = grid.log_density.size();
  for (std::size_t k = 0; k < n; ++k) {
    EXPECT_NEAR(grid.log_density[k], grid.log_density[n - 1 - k], 1e-12);
  }
}

TEST(DensityGrid, ArgmaxCellContainsTheMean) {
  const Tensor b = Tensor::vector({0.83, -1.37});
  const auto theta = gaussian_model(0.6, b, 2);
  const auto grid = density_grid(theta, -3, 3, -3, 3, 60, 60);
  const auto best = static_cast<std::size_t>(
      std::max_element(grid.log_density.begin(), grid.log_density.end()) - grid.log_density.begin());
  const double half_x = 0.5 * (grid.xmax - grid.xmin) / static_cast<double>(grid.nx);
  const double half_y = 0.5 * (grid.ymax - grid.ymin) / static_cast<double>(grid.ny);
  EXPECT_LE(std::abs(grid.x_centre(best % grid.nx) - b[0]), half_x);
  EXPECT_LE(std::abs(grid.y_centre(best / grid.nx) - b[1]), half_y);
}

TEST(DensityGrid, RowMajorWithXFastest) {
  Rng rng(15);
  const auto theta = oracle::random_grbm(2, 3, rng);
  const auto g = oracle::Grbm::from(theta);
  const auto grid = density_grid(theta, -1, 2, -3, 1, 4, 5);
  for (std::size_t iy = 0; iy < 5; ++iy) {
    for (std::size_t ix = 0; ix < 4; ++ix) {
      const double v[2] = {grid.x_centre(ix), grid.y_centre(iy)};
      EXPECT_NEAR(grid.log_density[iy * 4 + ix], -g.free_energy(v), 1e-10);
    }
  }
}

TEST(DensityGrid, NeedsTwoVisibleDimensions) {
  const auto theta = gaussian_model(1.0, Tensor({3}), 2);
  EXPECT_THROW(density_grid(theta, -1, 1, -1, 1, 4, 4), UnsupportedError);
}

TEST(DensityGrid, TextRoundTripIsExact) {
  Rng rng(16);
  const auto theta = oracle::random_grbm(2, 3, rng);
  const auto grid = density_grid(theta, -2.5, 3.1, -1.7, 0.3, 7, 9);
  std::stringstream ss;
  write_grid(ss, grid);
  EXPECT_EQ(ss.str().rfind("# density_grid v1 -2.5 3.1000000000000001 -1.7 0.29999999999999999 7 9\n", 0), 0U);
  const auto back = read_grid(ss);
  EXPECT_EQ(back.xmin, grid.xmin);
  EXPECT_EQ(back.xmax, grid.xmax);
  EXPECT_EQ(back.ymin, grid.ymin);
  EXPECT_EQ(back.ymax, grid.ymax);
  EXPECT_EQ(back.nx, grid.nx);
  EXPECT_EQ(back.ny, grid.ny);
  EXPECT_EQ(back.log_density, grid.log_density);
}

TEST(DensityGrid, MalformedInputIsAParseError) {
  std::istringstream bad_header("# grid v1 0 1 0 1 2 2\n1 2 3 4\n");
  EXPECT_THROW(read_grid(bad_header), ParseError);
  std::istringstream short_body("# density_grid v1 0 1 0 1 2 2\n1 2 3\n");
  EXPECT_THROW(read_grid(short_body), ParseError);
  std::istringstream bad_value("# density_grid v1 0 1 0 1 2 2\n1 2 x 4\n");
  EXPECT_THROW(read_grid(bad_value), ParseError);
}

// ---------------------------------------------------------------------------
// Checkerboard cell masses

TEST(CheckerboardMass, SplitsCellsByParity) {
  DensityGrid grid{-2, 2, -2, 2, 8, 8, std::vector<double>(64, 0.0), std::vector<double>(64, 0.0)};
  for (std::size_t iy = 0; iy < 8; ++iy) {
    for (std::size_t ix = 0; ix < 8; ++ix) {
      const bool filled = (ix / 2 + iy / 2) % 2 == 0;
      grid.probability[iy * 8 + ix] = filled ? 1.0 / 32 : 0.0;
    }
  }
  const auto mass = checkerboard_mass(grid);
  for (double m : mass.filled) EXPECT_NEAR(m, 1.0 / 8, 1e-15);
  for (double m : mass.empty) EXPECT_EQ(m, 0.0);
  EXPECT_NEAR(mass.filled_mean(), 1.0 / 8, 1e-15);
  EXPECT_EQ(mass.empty_mean(), 0.0);
}

TEST(CheckerboardMass, IgnoresCellsOutsideTheBoard) {
  DensityGrid grid{-4, 4, -4, 4, 8, 8, std::vector<double>(64, 0.0), std::vector<double>(64, 1.0 / 64)};
  const auto mass = checkerboard_mass(grid);
  EXPECT_NEAR(mass.filled_mean() * 8 + mass.empty_mean() * 8, 16.0 / 64, 1e-15);
}

TEST(CheckerboardMass, NeedsNormalisedGrid) {
  DensityGrid grid{-2, 2, -2, 2, 4, 4, std::vector<double>(16, 0.0), {}};
  EXPECT_THROW(checkerboard_mass(grid), ContractError);
}

}  // namespace
