// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "bism/autodiff.hpp"
#include "bism/bilevel.hpp"
#include "bism/data.hpp"
#include "bism/error.hpp"
#include "oracles.hpp"

namespace {

using namespace bism;
using namespace bism::bilevel;

// ---------------------------------------------------------------------------
// Small dense helpers for closed-form oracles.

std::vector<double> matvec(const Tensor& A, const std::vector<double>& x) {
  std::vector<double> y(A.rows(), 0.0);
  for (std::size_t i = 0; i < A.rows(); ++i) {
    for (std::size_t j = 0; j < A.cols(); ++j) y[i] += A(i, j) * x[j];
  }
  return y;
}

// A random SPD A with eigenvalues in [0.5, 3], plus B, c, t.
QuadraticProblem random_quadratic(std::size_t p, std::size_t m, Rng& rng, double lambda = 0.1) {
  const Tensor Q = rng.normal_tensor({p, p});
  Tensor A({p, p});
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t k = 0; k < p; ++k) A(i, j) += Q(k, i) * Q(k, j);
    }
  }
  // Normalise by the Frobenius norm to bound the spectrum, then shift.
  double fro = 0;
  for (double x : A.data()) fro += x * x;
  fro = std::sqrt(fro);
  for (double& x : A.data()) x *= 2.5 / fro;
  for (std::size_t i = 0; i < p; ++i) A(i, i) += 0.5;
  return QuadraticProblem(A, rng.normal_tensor({p, m}), rng.normal_tensor({p, 1}),
                          rng.normal_tensor({p, 1}), lambda);
}

struct GrbmProblem {
  models::GrbmModel model;
  posteriors::BernoulliPosterior posterior;
  ParamSet theta;
  ParamSet phi;
  std::unique_ptr<ScoreMatchingProblem> problem;

  GrbmProblem(std::size_t dv, std::size_t dh, std::size_t n, const objectives::ScoreObjective& obj,
              Rng& rng)
      : model(dv, dh), posterior(dv, dh) {
    theta = oracle::random_grbm(dv, dh, rng, 0.5).to_params();
    phi = posterior.init_params(rng);
    const Tensor batch = rng.normal_tensor({n, dv});
    auto noise = objectives::draw_iteration_noise(obj, posterior, n, rng);
    problem = std::make_unique<ScoreMatchingProblem>(model, posterior, batch, obj,
                                                     objectives::LatentMode::Sample, LowerKind::KL,
                                                     std::move(noise));
  }
};

std::vector<Var> constants(std::span<const Tensor> ts) {
  std::vector<Var> out;
  for (const auto& t : ts) out.push_back(ad::constant(t));
  return out;
}

// ---------------------------------------------------------------------------
// Adam

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<Tensor> p{Tensor::vector({1.5, -2})};
  const std::vector<Tensor> g{Tensor({2})};
  AdamState state;
  adam_step(p, g, state, 0.1);
  EXPECT_NEAR(p[0][0], 1.5, 1e-12);
  EXPECT_NEAR(p[0][1], -2, 1e-12);
}

TEST(Adam, FirstStepHasLearningRateMagnitude) {
  std::vector<Tensor> p{Tensor::vector({0, 0, 0})};
  const std::vector<Tensor> g{Tensor::vector({3, -0.01, 1e3})};
  AdamState state;
  adam_step(p, g, state, 0.05);
  EXPECT_NEAR(p[0][0], -0.05, 1e-6);
  EXPECT_NEAR(p[0][1], 0.05, 1e-6);
  EXPECT_NEAR(p[0][2], -0.05, 1e-6);
}

TEST(Adam, MinimisesQuadratic) {
  std::vector<Tensor> x{Tensor::vector({1.0})};
  AdamState state;
  for (int k = 0; k < 100; ++k) {
    const std::vector<Tensor> g{Tensor::vector({2 * x[0][0]})};
    adam_step(x, g, state, 0.1);
  }
  EXPECT_LT(std::abs(x[0][0]), 0.5);
}

TEST(Adam, ShapeMismatchThrows) {
  std::vector<Tensor> p{Tensor({2})};
  AdamState state;
  const std::vector<Tensor> bad{Tensor({3})};
  EXPECT_THROW(adam_step(p, bad, state, 0.1), ShapeError);
  const std::vector<Tensor> two{Tensor({2}), Tensor({2})};
  EXPECT_THROW(adam_step(p, two, state, 0.1), ShapeError);
}

// ---------------------------------------------------------------------------
// Inner updates

TEST(InnerUpdate, ZeroStepsLeavesPhiBitwise) {
  Rng rng(1);
  GrbmProblem g(2, 3, 5, objectives::ScoreObjective::dsm(0.1), rng);
  const auto r = inner_update(*g.problem, g.theta.values, g.phi.values, {0, 1e-2, InnerOptimizer::Adam});
  EXPECT_EQ(r.phi, g.phi.values);
  EXPECT_TRUE(std::isnan(r.last_loss));
}

TEST(InnerUpdate, FirstGradientStepMatchesFiniteDifferences) {
  Rng rng(2);
  GrbmProblem g(2, 3, 5, objectives::ScoreObjective::dsm(0.1), rng);
  const double alpha = 0.05;
  const auto r = inner_update(*g.problem, g.theta.values, g.phi.values, {1, alpha, InnerOptimizer::GD});
  const auto tc = constants(g.theta.values);
  const auto fd = oracle::fd_gradient(
      [&](const std::vector<double>& x) {
        return g.problem->lower(tc, constants(unflatten(g.phi, x))).item();
      },
      flatten(g.phi.values));
  const auto before = flatten(g.phi.values);
  const auto after = flatten(r.phi);
  std::vector<double> step(before.size());
  for (std::size_t i = 0; i < step.size(); ++i) step[i] = (before[i] - after[i]) / alpha;
  EXPECT_LT(oracle::rel_err(step, fd), 1e-4);
}

TEST(InnerUpdate, QuadraticMatchesClosedFormRecursion) {
  Rng rng(3);
  const auto q = random_quadratic(3, 2, rng);
  const Tensor theta = rng.normal_tensor({2, 1});
  const Tensor star = q.best_response(theta);
  std::vector<double> phi = rng.normal_tensor({3, 1}).storage();
  const double alpha = 0.2;
  const std::vector<Tensor> th{theta};
  const auto r = inner_update(q, th, {Tensor({3, 1}, phi)}, {7, alpha, InnerOptimizer::GD});
  for (int k = 0; k < 7; ++k) {
    std::vector<double> diff(3);
    for (std::size_t i = 0; i < 3; ++i) diff[i] = phi[i] - star[i];
    const auto Ad = matvec(q.hessian(), diff);
    for (std::size_t i = 0; i < 3; ++i) phi[i] -= alpha * Ad[i];
  }
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(r.phi[0][i], phi[i], 1e-10);
}

// Lower loss sum(log phi): gradient descent walks phi through zero.
class LogBarrierProblem final : public BilevelProblem {
 public:
  Var upper(ParamVars, ParamVars phi) const override { return ad::sum(phi[0]); }
  Var lower(ParamVars, ParamVars phi) const override { return ad::sum(ad::log(phi[0])); }
};

TEST(InnerUpdate, NonFiniteStepIsNamed) {
  const LogBarrierProblem p;
  const std::vector<Tensor> theta;
  try {
    inner_update(p, theta, {Tensor::vector({0.5})}, {3, 1.0, InnerOptimizer::GD});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("inner step 1"), std::string::npos) << e.what();
  }
}

// ---------------------------------------------------------------------------
// Unrolling and the surrogate gradient

TEST(Unroll, ZeroStepsHasNoThetaDependence) {
  Rng rng(4);
  const auto q = random_quadratic(3, 2, rng);
  const Tensor theta = rng.normal_tensor({2, 1});
  const std::vector<Tensor> phi0{rng.normal_tensor({3, 1})};
  const Var tv = ad::variable(theta);
  const auto phi = unroll(q, std::span(&tv, 1), phi0, {0, 0.1});
  EXPECT_EQ(phi[0].value(), phi0[0]);
  const Tensor g = ad::grad(ad::sum(phi[0]), tv).value();
  for (double x : g.data()) EXPECT_EQ(x, 0.0);
}

TEST(Unroll, StationaryStartIsAFixedPoint) {
  Rng rng(5);
  const auto q = random_quadratic(3, 2, rng);
  const Tensor theta = rng.normal_tensor({2, 1});
  const std::vector<Tensor> star{q.best_response(theta)};
  const Var tv = ad::variable(theta);
  const auto phi = unroll(q, std::span(&tv, 1), star, {6, 0.2});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(phi[0].value()[i], star[0][i], 1e-14);
}

TEST(Unroll, QuadraticMatchesMatrixPower) {
  Rng rng(6);
  const auto q = random_quadratic(4, 2, rng);
  const Tensor theta = rng.normal_tensor({2, 1});
  const Tensor star = q.best_response(theta);
  const Tensor phi0 = rng.normal_tensor({4, 1});
  const double alpha = 0.15;
  for (std::size_t N : {1U, 3U, 8U}) {
    std::vector<double> diff(4);
    for (std::size_t i = 0; i < 4; ++i) diff[i] = phi0[i] - star[i];
    for (std::size_t k = 0; k < N; ++k) {
      const auto Ad = matvec(q.hessian(), diff);
      for (std::size_t i = 0; i < 4; ++i) diff[i] -= alpha * Ad[i];
    }
    const Var tv = ad::variable(theta);
    const auto phi = unroll(q, std::span(&tv, 1), std::vector<Tensor>{phi0}, {N, alpha});
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(phi[0].value()[i] - star[i], diff[i], 1e-10);
  }
}

TEST(Unroll, NodeCapRaisesResourceError) {
  Rng rng(7);
  GrbmProblem g(2, 3, 10, objectives::ScoreObjective::ssm(1), rng);
  UnrollOptions opts{20, 1e-3, 500};
  EXPECT_THROW(surrogate_grad(*g.problem, g.theta.values, g.phi.values, opts), ResourceError);
}

TEST(SurrogateGrad, ZeroStepsEqualsPartialGradient) {
  Rng rng(8);
  GrbmProblem g(2, 3, 6, objectives::ScoreObjective::dsm(0.2), rng);
  const auto s = surrogate_grad(*g.problem, g.theta.values, g.phi.values, {0, 1e-2});
  const auto tv = to_vars(g.theta, true);
  const auto grads = ad::grad(g.problem->upper(tv, constants(g.phi.values)), tv);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    for (std::size_t j = 0; j < grads[i].numel(); ++j) {
      EXPECT_NEAR(s.grad[i][j], grads[i].value()[j], 1e-12);
    }
  }
}

TEST(SurrogateGrad, MatchesFiniteDifferencesOfUnrolledObjective) {
  Rng rng(9);
  GrbmProblem g(2, 3, 6, objectives::ScoreObjective::dsm(0.2), rng);
  const double alpha = 0.05;
  for (std::size_t N : {0U, 1U, 5U}) {
    SCOPED_TRACE("N=" + std::to_string(N));
    const auto s = surrogate_grad(*g.problem, g.theta.values, g.phi.values, {N, alpha});
    const auto fd = oracle::fd_gradient(
        [&](const std::vector<double>& x) {
          const auto th = constants(unflatten(g.theta, x));
          const auto phi = unroll(*g.problem, th, g.phi.values, {N, alpha});
          return g.problem->upper(th, phi).item();
        },
        flatten(g.theta.values));
    EXPECT_LT(oracle::rel_err(flatten(s.grad), fd), 1e-3);
  }
}

TEST(SurrogateGrad, QuadraticErrorDecaysGeometrically) {
  Rng rng(10);
  const auto q = random_quadratic(3, 2, rng);
  const Tensor theta = rng.normal_tensor({2, 1});
  const Tensor exact = q.exact_gradient(theta);
  const std::vector<Tensor> th{theta};
  const std::vector<Tensor> phi0{rng.normal_tensor({3, 1})};
  // The error bound carries an N * kappa^N factor, so only the tail is monotone.
  std::vector<double> errs;
  for (std::size_t N : {20U, 40U, 80U, 160U}) {
    const auto s = surrogate_grad(q, th, phi0, {N, 0.3});
    double err = 0;
    for (std::size_t i = 0; i < 2; ++i) err += (s.grad[0][i] - exact[i]) * (s.grad[0][i] - exact[i]);
    errs.push_back(std::sqrt(err));
  }
  for (std::size_t i = 1; i < errs.size(); ++i) EXPECT_LT(errs[i], errs[i - 1]);
  EXPECT_LT(errs.back(), 1e-6);
}

// ---------------------------------------------------------------------------
// Bias probe

double correlation(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

TEST(BiasProbe, QuadraticReferenceIsExactAndBiasDecaysLogLinearly) {
  Rng rng(11);
  const auto q = random_quadratic(3, 2, rng);
  const Tensor theta = rng.normal_tensor({2, 1});
  const std::vector<Tensor> th{theta};
  const std::vector<Tensor> phi0{rng.normal_tensor({3, 1})};
  const std::vector<std::size_t> ns{0, 2, 4, 6, 8, 10, 12};
  const auto r = gradient_bias_probe(q, th, phi0, ns, 0.1, 2000);
  EXPECT_TRUE(r.converged);
  const Tensor exact = q.exact_gradient(theta);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(r.reference_grad[0][i], exact[i], 1e-8);
  std::vector<double> x, y;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    x.push_back(static_cast<double>(ns[i]));
    y.push_back(std::log(r.bias[i]));
  }
  EXPECT_GT(std::pow(correlation(x, y), 2), 0.99);
  EXPECT_LT(y.back(), y.front());
}

TEST(BiasProbe, StartingAtOptimumLeavesOnlyTheJacobianTerm) {
  // From phi* the unrolled value stays at phi*, but its theta-Jacobian is
  // (I - (I - aA)^N) B, so the bias is ||((I - aA)^N B)^T (phi* - t)||.
  Rng rng(12);
  const auto q = random_quadratic(3, 2, rng);
  const Tensor theta = rng.normal_tensor({2, 1});
  const std::vector<Tensor> th{theta};
  const Tensor star = q.best_response(theta);
  const std::vector<Tensor> start{star};
  const double alpha = 0.3;
  const std::vector<std::size_t> ns{0, 1, 5, 150};
  const auto r = gradient_bias_probe(q, th, start, ns, alpha, 50);
  // Residual r = phi* - t = B theta + c - t; recover B column by column from best_response.
  const Tensor base = q.best_response(Tensor({2, 1}));
  std::vector<std::vector<double>> B(2);
  for (std::size_t j = 0; j < 2; ++j) {
    Tensor e({2, 1});
    e[j] = 1;
    const Tensor col = q.best_response(e);
    for (std::size_t i = 0; i < 3; ++i) B[j].push_back(col[i] - base[i]);
  }
  // dJ/dphi at phi* is phi* - t.
  std::vector<double> resid;
  {
    const auto tv = to_vars(ParamSet{{"t"}, {theta}}, false);
    const Var pv = ad::variable(star);
    resid = ad::grad(q.upper(tv, std::span(&pv, 1)), pv).value().storage();
  }
  for (std::size_t k = 0; k < ns.size(); ++k) {
    std::vector<std::vector<double>> cols = B;
    for (auto& col : cols) {
      for (std::size_t step = 0; step < ns[k]; ++step) {
        const auto Ac = matvec(q.hessian(), col);
        for (std::size_t i = 0; i < 3; ++i) col[i] -= alpha * Ac[i];
      }
    }
    double norm2 = 0;
    for (const auto& col : cols) {
      double dot = 0;
      for (std::size_t i = 0; i < 3; ++i) dot += col[i] * resid[i];
      norm2 += dot * dot;
    }
    EXPECT_NEAR(r.bias[k], std::sqrt(norm2), 1e-9 * std::max(1.0, std::sqrt(norm2)));
  }
  EXPECT_LT(r.bias.back(), 1e-6);
}

TEST(BiasProbe, ZeroWhenUpperIsStationaryInPhi) {
  // With t = phi*(theta) the chain term vanishes and the fixed-point lemma makes
  // every N exact.
  Rng rng(20);
  const auto base = random_quadratic(3, 2, rng);
  const Tensor theta = rng.normal_tensor({2, 1});
  const Tensor B = rng.normal_tensor({3, 2});
  const Tensor c = rng.normal_tensor({3, 1});
  Tensor star = c;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) star[i] += B(i, j) * theta[j];
  }
  const QuadraticProblem q(base.hessian(), B, c, star, 0.1);
  const std::vector<Tensor> th{theta};
  const std::vector<Tensor> start{star};
  const std::vector<std::size_t> ns{0, 1, 5};
  const auto r = gradient_bias_probe(q, th, start, ns, 0.3, 20);
  for (double b : r.bias) EXPECT_LT(b, 1e-12);
}

TEST(BiasProbe, DivergentRefinementAttachesWarning) {
  Rng rng(13);
  const auto q = random_quadratic(3, 2, rng);
  const std::vector<Tensor> th{rng.normal_tensor({2, 1})};
  const std::vector<Tensor> phi0{rng.normal_tensor({3, 1})};
  const std::vector<std::size_t> ns{0};
  // A step above 2 / lambda_max makes gradient descent diverge.
  const auto r = gradient_bias_probe(q, th, phi0, ns, 1.5, 20);
  EXPECT_FALSE(r.converged);
  EXPECT_FALSE(r.warning.empty());
}

// ---------------------------------------------------------------------------
// Training loop

data::Dataset small_dataset(std::size_t n, Rng& rng) {
  const auto truth = oracle::random_grbm(2, 2, rng);
  return data::grbm_synthetic(truth, n, rng);
}

TrainConfig quick_config(Method method) {
  TrainConfig c;
  c.method = method;
  c.objective = objectives::ScoreObjective::dsm(0.3);
  c.batch_size = 20;
  c.max_iters = 30;
  c.eval_every = 10;
  c.beta = 1e-2;
  c.alpha = 1e-2;
  c.seed = 42;
  return c;
}

TEST(Train, ZeroOuterRateFreezesTheta) {
  Rng rng(14);
  const auto data = small_dataset(200, rng);
  const models::GrbmModel model(2, 2);
  const posteriors::BernoulliPosterior q(2, 2);
  const ParamSet theta = model.init_params(rng);
  auto cfg = quick_config(Method::BiSM);
  cfg.beta = 0;
  const auto r = train(model, &q, data, cfg, theta, q.init_params(rng));
  EXPECT_FALSE(r.failed) << r.error;
  EXPECT_EQ(r.theta, theta);
}

TEST(Train, SameSeedGivesIdenticalResults) {
  Rng rng(15);
  const auto data = small_dataset(200, rng);
  const models::GrbmModel model(2, 2);
  const posteriors::BernoulliPosterior q(2, 2);
  const ParamSet theta = model.init_params(rng);
  const ParamSet phi = q.init_params(rng);
  for (Method m : {Method::BiSM, Method::Marginal, Method::CD, Method::PCD}) {
    SCOPED_TRACE(to_string(m));
    const auto a = train(model, &q, data, quick_config(m), theta, phi);
    const auto b = train(model, &q, data, quick_config(m), theta, phi);
    ASSERT_FALSE(a.failed) << a.error;
    EXPECT_EQ(a.theta, b.theta);
    EXPECT_EQ(a.phi, b.phi);
    ASSERT_EQ(a.metrics.size(), b.metrics.size());
    for (std::size_t i = 0; i < a.metrics.size(); ++i) {
      EXPECT_EQ(a.metrics[i].iter, b.metrics[i].iter);
      EXPECT_EQ(a.metrics[i].upper_loss, b.metrics[i].upper_loss);
      EXPECT_EQ(std::isnan(a.metrics[i].lower_loss), std::isnan(b.metrics[i].lower_loss));
    }
  }
}

TEST(Train, RowsAtZeroEveryIntervalAndEnd) {
  Rng rng(16);
  const auto data = small_dataset(200, rng);
  const models::GrbmModel model(2, 2);
  const posteriors::BernoulliPosterior q(2, 2);
  auto cfg = quick_config(Method::BiSM);
  cfg.max_iters = 25;
  std::size_t calls = 0;
  TrainHooks hooks;
  hooks.evaluate = [](MetricsRow& row, const ParamSet&, const ParamSet&) { row.test_ll = 1.0; };
  hooks.on_row = [&](const MetricsRow&, const ParamSet&, const ParamSet&) { ++calls; };
  const auto r = train(model, &q, data, cfg, model.init_params(rng), q.init_params(rng), hooks);
  std::vector<std::size_t> iters;
  for (const auto& row : r.metrics) {
    iters.push_back(row.iter);
    EXPECT_TRUE(row.test_ll.has_value());
  }
  EXPECT_EQ(iters, (std::vector<std::size_t>{0, 10, 20, 25}));
  EXPECT_EQ(calls, 4U);
  EXPECT_EQ(r.iterations, 25U);
}

TEST(Train, BilevelDsmReducesUpperLoss) {
  Rng rng(17);
  const auto data = small_dataset(1000, rng);
  const models::GrbmModel model(2, 2);
  const posteriors::BernoulliPosterior q(2, 2);
  auto cfg = quick_config(Method::BiSM);
  cfg.max_iters = 400;
  cfg.eval_every = 400;
  cfg.batch_size = 100;
  cfg.K = 2;
  cfg.N = 2;
  // Average the logged upper loss over the first and last 50 iterations.
  std::vector<double> per_iter;
  TrainHooks hooks;
  cfg.eval_every = 1;
  const auto r = train(model, &q, data, cfg, model.init_params(rng), q.init_params(rng), hooks);
  ASSERT_FALSE(r.failed) << r.error;
  for (const auto& row : r.metrics) per_iter.push_back(row.upper_loss);
  double first = 0, last = 0;
  for (std::size_t i = 1; i <= 50; ++i) {
    first += per_iter[i];
    last += per_iter[per_iter.size() - i];
  }
  EXPECT_LT(last, first);
}

TEST(Train, NumericFailureKeepsLastValidParameters) {
  Rng rng(18);
  auto data = small_dataset(200, rng);
  for (double& x : data.points.data()) x *= 1e200;  // squared distances overflow
  const models::GrbmModel model(2, 2);
  const posteriors::BernoulliPosterior q(2, 2);
  const auto cfg = quick_config(Method::BiSM);
  const auto r = train(model, &q, data, cfg, model.init_params(rng), q.init_params(rng));
  EXPECT_TRUE(r.failed);
  EXPECT_FALSE(r.error.empty());
  EXPECT_TRUE(r.theta.all_finite());
  EXPECT_TRUE(r.phi.all_finite());
}

TEST(Train, ConfigValidation) {
  TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.alpha = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(parse_method("BiSM"), Method::BiSM);
  EXPECT_EQ(parse_method("pcd"), Method::PCD);
  EXPECT_THROW(parse_method("vnce"), ConfigError);
  EXPECT_EQ(parse_lower_kind("fisher"), LowerKind::Fisher);
  EXPECT_THROW(parse_lower_kind("js"), ConfigError);
}

TEST(Train, BilevelWithoutPosteriorIsConfigError) {
  Rng rng(19);
  const auto data = small_dataset(50, rng);
  const models::GrbmModel model(2, 2);
  EXPECT_THROW(train(model, nullptr, data, quick_config(Method::BiSM), model.init_params(rng), {}),
               ConfigError);
}

}  // namespace
