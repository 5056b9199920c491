// SPDX-License-Identifier: Apache-2.0
#include "bism/posteriors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bism/error.hpp"
#include "bism/nn.hpp"

namespace bism::posteriors {

using ad::Var;

namespace {

Tensor as_rows(const Tensor& v) { return v.rank() == 1 ? v.reshaped({1, v.numel()}) : v; }

void check_rows(const Var& x, std::size_t cols, const char* what) {
  if (x.value().rank() != 2 || x.shape()[1] != cols) {
    throw ShapeError(std::string(what) + ": expected [n x " + std::to_string(cols) + "], got " +
                     shape_string(x.shape()));
  }
}

void check_open_unit(const Tensor& probs) {
  for (double p : probs.data()) {
    if (!(p > 0.0 && p < 1.0)) {
      throw DomainError("Bernoulli probability " + std::to_string(p) + " is not inside (0, 1)");
    }
  }
}

// A sigmoid of a large tempered logit rounds to exactly 0 or 1; the affine
// squeeze keeps relaxed samples strictly inside (0, 1) and differentiable.
constexpr double kOpenMargin = 1e-12;

Var squeeze_open(const Var& x) { return ad::affine(x, 1.0 - 2.0 * kOpenMargin, kOpenMargin); }

}  // namespace

const char* to_string(PosteriorKind kind) noexcept {
  return kind == PosteriorKind::Bernoulli ? "bernoulli" : "gaussian";
}

// ---------------------------------------------------------------------------
// Bernoulli

ParamSet BernoulliPosteriorParams::to_params() const {
  ParamSet out;
  out.add("A", A);
  out.add("a", a);
  return out;
}

BernoulliPosteriorParams BernoulliPosteriorParams::from_params(const ParamSet& phi,
                                                               double temperature) {
  BernoulliPosteriorParams p{phi.at("A"), phi.at("a"), temperature};
  p.validate();
  return p;
}

void BernoulliPosteriorParams::validate() const {
  if (A.rank() != 2 || a.shape() != Tensor::Shape{A.shape()[0]}) {
    throw ShapeError("Bernoulli posterior: A must be [d_h x d_v] and a [d_h]");
  }
  if (!(temperature > 0)) throw DomainError("Bernoulli posterior temperature must be positive");
  if (!A.all_finite() || !a.all_finite()) throw DomainError("Bernoulli posterior parameters must be finite");
}

BernoulliPosterior::BernoulliPosterior(std::size_t visible_dim, std::size_t latent_dim,
                                       double temperature)
    : d_v_(visible_dim), d_h_(latent_dim), tau_(temperature) {
  if (!(tau_ > 0)) throw DomainError("temperature must be positive");
  if (d_v_ == 0 || d_h_ == 0) throw ShapeError("posterior dimensions must be positive");
}

ParamSet BernoulliPosterior::init_params(Rng& rng) const {
  Tensor A = rng.normal_tensor({d_h_, d_v_});
  for (double& x : A.data()) x *= 0.1;
  return BernoulliPosteriorParams{std::move(A), Tensor({d_h_}), tau_}.to_params();
}

Tensor BernoulliPosterior::draw_base_noise(std::size_t n, Rng& rng) const {
  return rng.logistic_tensor({n, d_h_});
}

Var BernoulliPosterior::logits(const Var& v, ParamVars phi) const {
  check_rows(v, d_v_, "bernoulli posterior v");
  return ad::add(ad::matmul(v, ad::transpose(phi[0])), phi[1]);
}

Var BernoulliPosterior::probs(const Var& v, ParamVars phi) const { return ad::sigmoid(logits(v, phi)); }

Var BernoulliPosterior::sample(const Var& v, ParamVars phi, const Tensor& base_noise) const {
  const Var z = logits(v, phi);
  if (base_noise.shape() != z.shape()) {
    throw ShapeError("bernoulli sample: noise shape " + shape_string(base_noise.shape()));
  }
  return squeeze_open(ad::sigmoid(ad::scale(ad::add(z, ad::constant(base_noise)), 1.0 / tau_)));
}

Var BernoulliPosterior::log_density(const Var& h, const Var& v, ParamVars phi) const {
  check_rows(h, d_h_, "bernoulli log density h");
  const Var z = logits(v, phi);
  // Logit space stays finite where sigmoid(z) rounds to 0 or 1.
  // log p = -softplus(-z), log(1 - p) = -softplus(z)
  const Var log_p = ad::neg(ad::softplus(ad::neg(z)));
  const Var log_q = ad::neg(ad::softplus(z));
  return ad::sum_rows(ad::add(ad::mul(h, log_p), ad::mul(ad::affine(h, -1.0, 1.0), log_q)));
}

Tensor bernoulli_probs(const Tensor& v, const BernoulliPosteriorParams& phi) {
  phi.validate();
  ad::NoGradGuard guard;
  BernoulliPosterior q(phi.A.shape()[1], phi.A.shape()[0], phi.temperature);
  const auto vars = to_vars(phi.to_params(), false);
  Tensor p = q.probs(ad::constant(as_rows(v)), vars).value();
  return v.rank() == 1 ? p.reshaped({phi.A.shape()[0]}) : p;
}

Var sample_concrete(const Var& probs, double tau, const Tensor& logistic_noise) {
  if (!(tau > 0)) throw DomainError("concrete temperature must be positive");
  if (logistic_noise.shape() != probs.shape()) throw ShapeError("sample_concrete: noise shape mismatch");
  check_open_unit(probs.value());
  const Var logit = ad::sub(ad::log(probs), ad::log(ad::affine(probs, -1.0, 1.0)));
  return squeeze_open(ad::sigmoid(ad::scale(ad::add(logit, ad::constant(logistic_noise)), 1.0 / tau)));
}

Tensor sample_concrete(const Tensor& probs, double tau, Rng& rng) {
  ad::NoGradGuard guard;
  return sample_concrete(ad::constant(probs), tau, rng.logistic_tensor(probs.shape())).value();
}

double bernoulli_log_density(const Tensor& h, const Tensor& v, const BernoulliPosteriorParams& phi) {
  phi.validate();
  ad::NoGradGuard guard;
  BernoulliPosterior q(phi.A.shape()[1], phi.A.shape()[0], phi.temperature);
  const auto vars = to_vars(phi.to_params(), false);
  check_open_unit(q.probs(ad::constant(as_rows(v)), vars).value());
  return ad::sum(q.log_density(ad::constant(as_rows(h)), ad::constant(as_rows(v)), vars)).item();
}

// ---------------------------------------------------------------------------
// Gaussian

GaussianPosterior::GaussianPosterior(std::size_t visible_dim, std::size_t latent_dim,
                                     std::vector<std::size_t> hidden)
    : d_v_(visible_dim), d_h_(latent_dim), hidden_(std::move(hidden)) {
  if (d_v_ == 0 || d_h_ == 0 || hidden_.empty()) {
    throw ShapeError("Gaussian posterior needs positive dimensions and at least one hidden layer");
  }
}

ParamSet GaussianPosterior::init_params(Rng& rng) const {
  ParamSet p;
  std::vector<std::size_t> trunk{d_v_};
  trunk.insert(trunk.end(), hidden_.begin(), hidden_.end());
  nn::add_mlp_params(p, "net", trunk, rng);
  nn::add_mlp_params(p, "mean", {hidden_.back(), d_h_}, rng);
  nn::add_mlp_params(p, "log_std", {hidden_.back(), d_h_}, rng);
  return p;
}

Tensor GaussianPosterior::draw_base_noise(std::size_t n, Rng& rng) const {
  return rng.normal_tensor({n, d_h_});
}

std::pair<Var, Var> GaussianPosterior::mean_and_log_std(const Var& v, ParamVars phi) const {
  check_rows(v, d_v_, "gaussian posterior v");
  const std::size_t trunk = 2 * hidden_.size();
  if (phi.size() != trunk + 4) throw ShapeError("gaussian posterior: bad parameter count");
  const Var features = ad::tanh(nn::mlp(v, phi.subspan(0, trunk), nn::Activation::Tanh));
  return {nn::linear(features, phi[trunk], phi[trunk + 1]),
          nn::linear(features, phi[trunk + 2], phi[trunk + 3])};
}

Var GaussianPosterior::sample(const Var& v, ParamVars phi, const Tensor& base_noise) const {
  auto [mu, rho] = mean_and_log_std(v, phi);
  if (base_noise.shape() != mu.shape()) {
    throw ShapeError("gaussian sample: noise shape " + shape_string(base_noise.shape()));
  }
  return ad::add(mu, ad::mul(ad::exp(rho), ad::constant(base_noise)));
}

Var GaussianPosterior::log_density(const Var& h, const Var& v, ParamVars phi) const {
  check_rows(h, d_h_, "gaussian log density h");
  auto [mu, rho] = mean_and_log_std(v, phi);
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const Var z2 = ad::mul(ad::square(ad::sub(h, mu)), ad::exp(ad::scale(rho, -2.0)));
  return ad::affine(ad::sum_rows(ad::add(ad::scale(z2, 0.5), rho)), -1.0,
                    -half_log_2pi * static_cast<double>(d_h_));
}

Var GaussianPosterior::score_h(const Var& h, const Var& v, ParamVars phi) const {
  check_rows(h, d_h_, "gaussian score h");
  auto [mu, rho] = mean_and_log_std(v, phi);
  return ad::neg(ad::mul(ad::sub(h, mu), ad::exp(ad::scale(rho, -2.0))));
}

GaussianPosterior GaussianPosterior::infer(const ParamSet& phi) {
  std::vector<std::size_t> hidden;
  for (std::size_t i = 0;; ++i) {
    const std::string name = "net." + std::to_string(i) + ".weight";
    if (std::find(phi.names.begin(), phi.names.end(), name) == phi.names.end()) break;
    hidden.push_back(phi.at(name).shape()[1]);
  }
  if (hidden.empty()) throw ShapeError("Gaussian posterior parameters lack a trunk");
  return GaussianPosterior(phi.at("net.0.weight").shape()[0], phi.at("mean.0.weight").shape()[1],
                           std::move(hidden));
}

Tensor gaussian_sample(const Tensor& v, const GaussianPosterior& posterior, const ParamSet& phi,
                       Rng& rng) {
  ad::NoGradGuard guard;
  const Tensor rows = as_rows(v);
  const auto vars = to_vars(phi, false);
  return posterior.sample(ad::constant(rows), vars, posterior.draw_base_noise(rows.rows(), rng))
      .value();
}

Tensor gaussian_score_h(const Tensor& h, const Tensor& v, const GaussianPosterior& posterior,
                        const ParamSet& phi) {
  ad::NoGradGuard guard;
  const auto vars = to_vars(phi, false);
  return posterior.score_h(ad::constant(as_rows(h)), ad::constant(as_rows(v)), vars).value();
}

}  // namespace bism::posteriors
