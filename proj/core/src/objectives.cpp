// SPDX-License-Identifier: Apache-2.0
#include "bism/objectives.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "bism/error.hpp"

namespace bism::objectives {

namespace {

constexpr std::size_t kMaxEnumeratedDirections = 16;

Tensor tile_rows(const Tensor& block, std::size_t times) {
  const std::size_t r = block.rows();
  const std::size_t c = block.cols();
  std::vector<double> out;
  out.reserve(r * c * times);
  for (std::size_t t = 0; t < times; ++t) {
    out.insert(out.end(), block.storage().begin(), block.storage().end());
  }
  return Tensor({r * times, c}, std::move(out));
}

ObjectiveNoise repeat_noise(const ObjectiveNoise& noise, std::size_t times) {
  ObjectiveNoise out;
  if (noise.eps.rank() == 2) out.eps = repeat_rows(noise.eps, times);
  if (noise.levels.rank() == 2) out.levels = repeat_rows(noise.levels, times);
  for (const Tensor& u : noise.directions) out.directions.push_back(repeat_rows(u, times));
  return out;
}

const posteriors::BernoulliPosterior& require_enumerable(const posteriors::Posterior& posterior) {
  const auto* q = dynamic_cast<const posteriors::BernoulliPosterior*>(&posterior);
  if (q == nullptr) throw UnsupportedError("enumerate mode requires a Bernoulli posterior");
  if (q->latent_dim() > kMaxEnumerateLatent) {
    throw SizeError("enumerate mode supports at most " + std::to_string(kMaxEnumerateLatent) +
                    " latents, got " + std::to_string(q->latent_dim()));
  }
  return *q;
}

void check_batch(const Tensor& batch, std::size_t d, const char* what) {
  if (batch.rank() != 2 || batch.cols() != d || batch.rows() == 0) {
    throw ShapeError(std::string(what) + ": batch must be [n x " + std::to_string(d) + "], got " +
                     shape_string(batch.shape()));
  }
}

}  // namespace

const char* to_string(ScoreKind kind) noexcept {
  switch (kind) {
    case ScoreKind::SM: return "sm";
    case ScoreKind::SSM: return "ssm";
    case ScoreKind::DSM: return "dsm";
    case ScoreKind::MDSM: return "mdsm";
  }
  return "?";
}

ScoreKind parse_score_kind(const std::string& text) {
  std::string s = text;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "sm") return ScoreKind::SM;
  if (s == "ssm") return ScoreKind::SSM;
  if (s == "dsm") return ScoreKind::DSM;
  if (s == "mdsm") return ScoreKind::MDSM;
  throw ConfigError("unknown score objective '" + text + "'");
}

// ---------------------------------------------------------------------------
// Noise prior and objective settings

NoisePrior NoisePrior::geometric(double lo, double hi, std::size_t count) {
  if (!(lo > 0) || !(hi >= lo) || count == 0) {
    throw DomainError("geometric noise prior needs 0 < lo <= hi and at least one level");
  }
  NoisePrior p;
  for (std::size_t i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
    p.levels.push_back(lo * std::pow(hi / lo, t));
  }
  p.weights.assign(count, 1.0 / static_cast<double>(count));
  return p;
}

NoisePrior NoisePrior::point(double level) { return NoisePrior{{level}, {1.0}}; }

void NoisePrior::validate() const {
  if (levels.empty()) throw ConfigError("noise prior has no levels");
  if (weights.size() != levels.size()) throw ConfigError("noise prior weights and levels differ in length");
  for (double l : levels) {
    if (!(l > 0)) throw DomainError("noise levels must be positive");
  }
  double total = 0;
  for (double w : weights) {
    if (!(w >= 0)) throw DomainError("noise prior weights must be non-negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DomainError("noise prior weights must sum to 1");
}

double NoisePrior::sample(Rng& rng) const {
  if (levels.size() == 1) return levels.front();
  double u = rng.uniform();
  for (std::size_t i = 0; i + 1 < levels.size(); ++i) {
    if (u < weights[i]) return levels[i];
    u -= weights[i];
  }
  return levels.back();
}

ScoreObjective ScoreObjective::sm() {
  ScoreObjective o;
  o.kind = ScoreKind::SM;
  return o;
}

ScoreObjective ScoreObjective::ssm(std::size_t n_directions) {
  ScoreObjective o;
  o.kind = ScoreKind::SSM;
  o.n_directions = n_directions;
  return o;
}

ScoreObjective ScoreObjective::dsm(double sigma) {
  ScoreObjective o;
  o.kind = ScoreKind::DSM;
  o.sigma = sigma;
  return o;
}

ScoreObjective ScoreObjective::mdsm(NoisePrior prior, double sigma0) {
  ScoreObjective o;
  o.kind = ScoreKind::MDSM;
  o.prior = std::move(prior);
  o.sigma0 = sigma0;
  return o;
}

void ScoreObjective::validate() const {
  switch (kind) {
    case ScoreKind::SM: break;
    case ScoreKind::SSM:
      if (n_directions == 0) throw DomainError("SSM needs at least one direction");
      break;
    case ScoreKind::DSM:
      if (!(sigma > 0)) throw DomainError("DSM noise level must be positive");
      break;
    case ScoreKind::MDSM:
      prior.validate();
      if (!(sigma0 > 0)) throw DomainError("MDSM anchor noise level must be positive");
      break;
  }
}

// ---------------------------------------------------------------------------
// Noise and evaluation points

ObjectiveNoise draw_noise(const ScoreObjective& objective, std::size_t n, std::size_t d, Rng& rng) {
  objective.validate();
  ObjectiveNoise noise;
  switch (objective.kind) {
    case ScoreKind::SM: break;
    case ScoreKind::SSM:
      for (std::size_t k = 0; k < objective.n_directions; ++k) {
        noise.directions.push_back(rng.rademacher_tensor({n, d}));
      }
      break;
    case ScoreKind::DSM:
      noise.eps = rng.normal_tensor({n, d});
      noise.levels = Tensor::full({n, 1}, objective.sigma);
      break;
    case ScoreKind::MDSM:
      noise.eps = rng.normal_tensor({n, d});
      noise.levels = Tensor({n, 1});
      for (std::size_t i = 0; i < n; ++i) noise.levels[i] = objective.prior.sample(rng);
      break;
  }
  return noise;
}

std::vector<Tensor> rademacher_enumeration(std::size_t n, std::size_t d) {
  if (d > kMaxEnumeratedDirections) {
    throw SizeError("cannot enumerate Rademacher directions in " + std::to_string(d) + " dimensions");
  }
  std::vector<Tensor> out;
  const std::size_t count = std::size_t{1} << d;
  for (std::size_t m = 0; m < count; ++m) {
    Tensor u({n, d});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) u(i, j) = ((m >> j) & 1U) ? 1.0 : -1.0;
    }
    out.push_back(std::move(u));
  }
  return out;
}

Tensor evaluation_points(const ScoreObjective& objective, const Tensor& batch,
                         const ObjectiveNoise& noise) {
  if (!objective.denoising()) return batch;
  if (noise.eps.shape() != batch.shape() || noise.levels.shape() != Tensor::Shape{batch.rows(), 1}) {
    throw ShapeError("denoising noise does not match batch " + shape_string(batch.shape()));
  }
  Tensor out = batch;
  const std::size_t d = batch.cols();
  for (std::size_t i = 0; i < batch.rows(); ++i) {
    for (std::size_t j = 0; j < d; ++j) out(i, j) += noise.levels[i] * noise.eps(i, j);
  }
  return out;
}

Tensor repeat_rows(const Tensor& x, std::size_t times) {
  const std::size_t r = x.rows();
  const std::size_t c = x.cols();
  std::vector<double> out;
  out.reserve(r * c * times);
  for (std::size_t i = 0; i < r; ++i) {
    const auto row = x.data().subspan(i * c, c);
    for (std::size_t t = 0; t < times; ++t) out.insert(out.end(), row.begin(), row.end());
  }
  return Tensor({r * times, c}, std::move(out));
}

// ---------------------------------------------------------------------------
// Objective functional

Var objective_rows(const ScoreObjective& objective, const ScoreFn& score_fn, const Var& x,
                   const Tensor& batch, const ObjectiveNoise& noise) {
  objective.validate();
  const Var s = score_fn(x);
  if (s.shape() != x.shape()) {
    throw ShapeError("score shape " + shape_string(s.shape()) + " differs from input " +
                     shape_string(x.shape()));
  }
  const std::size_t d = x.shape()[1];

  switch (objective.kind) {
    case ScoreKind::SM: {
      if (d > ad::kMaxHessianDim) {
        throw SizeError("exact Hessian trace limited to " + std::to_string(ad::kMaxHessianDim) +
                        " dimensions; use SSM for d = " + std::to_string(d));
      }
      Var rows = ad::scale(ad::sum_rows(ad::square(s)), 0.5);
      // Rows are independent, so one backward pass per coordinate yields every row's diagonal.
      for (std::size_t j = 0; j < d; ++j) {
        const Var g = ad::grad(ad::sum(ad::slice(s, 1, j, j + 1)), x, true);
        rows = ad::add(rows, ad::slice(g, 1, j, j + 1));
      }
      return rows;
    }
    case ScoreKind::SSM: {
      if (noise.directions.empty()) throw ContractError("SSM evaluation needs at least one direction");
      Var slicing;
      for (const Tensor& u : noise.directions) {
        if (u.shape() != x.shape()) throw ShapeError("SSM direction shape mismatch");
        const Var uc = ad::constant(u);
        const Var g = ad::grad(ad::sum(ad::mul(s, uc)), x, true);
        const Var term = ad::sum_rows(ad::mul(g, uc));
        slicing = slicing.defined() ? ad::add(slicing, term) : term;
      }
      slicing = ad::scale(slicing, 1.0 / static_cast<double>(noise.directions.size()));
      return ad::add(ad::scale(ad::sum_rows(ad::square(s)), 0.5), slicing);
    }
    case ScoreKind::DSM:
    case ScoreKind::MDSM: {
      if (batch.shape() != x.shape()) throw ShapeError("denoising batch does not match evaluation points");
      Tensor target({batch.rows(), d});
      for (std::size_t i = 0; i < batch.rows(); ++i) {
        const double anchor = objective.kind == ScoreKind::DSM ? noise.levels[i] : objective.sigma0;
        for (std::size_t j = 0; j < d; ++j) {
          // (v - ṽ) / anchor^2 with ṽ = v + level * eps
          target(i, j) = -noise.levels[i] * noise.eps(i, j) / (anchor * anchor);
        }
      }
      return ad::sum_rows(ad::square(ad::sub(s, ad::constant(std::move(target)))));
    }
  }
  throw ContractError("unknown score objective");
}

Var score_loss(const ScoreObjective& objective, const ScoreFn& score_fn, const Tensor& batch,
               const ObjectiveNoise& noise) {
  if (batch.rank() != 2 || batch.rows() == 0) throw ShapeError("score loss needs a non-empty [n x d] batch");
  const Var x = ad::variable(evaluation_points(objective, batch, noise));
  return ad::mean(objective_rows(objective, score_fn, x, batch, noise));
}

Var sm_loss(const ScoreFn& score_fn, const Tensor& batch) {
  return score_loss(ScoreObjective::sm(), score_fn, batch, {});
}

Var ssm_loss(const ScoreFn& score_fn, const Tensor& batch, std::size_t n_directions, Rng& rng) {
  const auto objective = ScoreObjective::ssm(n_directions);
  return score_loss(objective, score_fn, batch,
                    draw_noise(objective, batch.rows(), batch.cols(), rng));
}

Var dsm_loss(const ScoreFn& score_fn, const Tensor& batch, double sigma, Rng& rng) {
  const auto objective = ScoreObjective::dsm(sigma);
  return score_loss(objective, score_fn, batch,
                    draw_noise(objective, batch.rows(), batch.cols(), rng));
}

Var mdsm_loss(const ScoreFn& score_fn, const Tensor& batch, const NoisePrior& prior, double sigma0,
              Rng& rng) {
  const auto objective = ScoreObjective::mdsm(prior, sigma0);
  return score_loss(objective, score_fn, batch,
                    draw_noise(objective, batch.rows(), batch.cols(), rng));
}

ScoreFn marginal_score_fn(const models::EnergyModel& model, ParamVars theta) {
  return [&model, theta](const Var& x) {
    return ad::grad(ad::neg(ad::sum(model.free_energy(x, theta))), x, true);
  };
}

// ---------------------------------------------------------------------------
// Latent-variable objectives

IterationNoise draw_iteration_noise(const ScoreObjective& objective,
                                    const posteriors::Posterior& posterior, std::size_t n,
                                    Rng& rng) {
  IterationNoise noise;
  noise.objective = draw_noise(objective, n, posterior.visible_dim(), rng);
  noise.latent = posterior.draw_base_noise(n, rng);
  return noise;
}

Var bi_upper_loss(const models::EnergyModel& model, const posteriors::Posterior& posterior,
                  ParamVars theta, ParamVars phi, const Tensor& batch,
                  const ScoreObjective& objective, LatentMode mode, const IterationNoise& noise) {
  check_batch(batch, model.visible_dim(), "bi_upper_loss");
  const Tensor points = evaluation_points(objective, batch, noise.objective);

  if (mode == LatentMode::Sample) {
    const Var h = posterior.sample(ad::constant(points), phi, noise.latent);
    const ScoreFn score_fn = [&](const Var& x) {
      const Var log_ratio =
          ad::add(model.energy(x, h, theta), posterior.log_density(h, x, phi));
      return ad::grad(ad::neg(ad::sum(log_ratio)), x, true);
    };
    return ad::mean(objective_rows(objective, score_fn, ad::variable(points), batch, noise.objective));
  }

  const auto& q = require_enumerable(posterior);
  const Tensor configs = models::binary_configurations(q.latent_dim());
  const std::size_t m = configs.rows();
  const std::size_t n = batch.rows();
  const Tensor rep_points = repeat_rows(points, m);
  const Var h = ad::constant(tile_rows(configs, n));
  const Var weights = ad::exp(q.log_density(h, ad::constant(rep_points), phi));
  const ScoreFn score_fn = [&](const Var& x) {
    const Var log_ratio = ad::add(model.energy(x, h, theta), q.log_density(h, x, phi));
    return ad::grad(ad::neg(ad::sum(log_ratio)), x, true);
  };
  const Var rows = objective_rows(objective, score_fn, ad::variable(rep_points),
                                  repeat_rows(batch, m), repeat_noise(noise.objective, m));
  return ad::scale(ad::sum(ad::mul(weights, rows)), 1.0 / static_cast<double>(n));
}

Var bi_upper_loss(const models::EnergyModel& model, const posteriors::Posterior& posterior,
                  ParamVars theta, ParamVars phi, const Tensor& batch,
                  const ScoreObjective& objective, LatentMode mode, Rng& rng) {
  const auto noise = draw_iteration_noise(objective, posterior, batch.rows(), rng);
  return bi_upper_loss(model, posterior, theta, phi, batch, objective, mode, noise);
}

Var lower_kl_loss(const models::EnergyModel& model, const posteriors::Posterior& posterior,
                  ParamVars theta, ParamVars phi, const Tensor& points, LatentMode mode,
                  const Tensor& latent_noise) {
  check_batch(points, model.visible_dim(), "lower_kl_loss");
  const Var v = ad::constant(points);
  if (mode == LatentMode::Sample) {
    const Var h = posterior.sample(v, phi, latent_noise);
    return ad::mean(ad::add(posterior.log_density(h, v, phi), model.energy(v, h, theta)));
  }
  const auto& q = require_enumerable(posterior);
  const Tensor configs = models::binary_configurations(q.latent_dim());
  const std::size_t m = configs.rows();
  const Var rep_v = ad::constant(repeat_rows(points, m));
  const Var h = ad::constant(tile_rows(configs, points.rows()));
  const Var log_q = q.log_density(h, rep_v, phi);
  const Var terms = ad::mul(ad::exp(log_q), ad::add(log_q, model.energy(rep_v, h, theta)));
  return ad::scale(ad::sum(terms), 1.0 / static_cast<double>(points.rows()));
}

Var lower_kl_loss(const models::EnergyModel& model, const posteriors::Posterior& posterior,
                  ParamVars theta, ParamVars phi, const Tensor& points, LatentMode mode, Rng& rng) {
  const Tensor noise = mode == LatentMode::Sample ? posterior.draw_base_noise(points.rows(), rng)
                                                  : Tensor();
  return lower_kl_loss(model, posterior, theta, phi, points, mode, noise);
}

Var lower_fisher_loss(const models::EnergyModel& model, const posteriors::Posterior& posterior,
                      ParamVars theta, ParamVars phi, const Tensor& points,
                      const Tensor& latent_noise) {
  const auto* q = dynamic_cast<const posteriors::GaussianPosterior*>(&posterior);
  if (q == nullptr) {
    throw UnsupportedError("the Fisher lower divergence needs a continuous-latent posterior");
  }
  check_batch(points, model.visible_dim(), "lower_fisher_loss");
  const Var v = ad::constant(points);
  Var h = q->sample(v, phi, latent_noise);
  // With constant φ the draw carries no graph; the h-gradient still needs an input node.
  if (!h.requires_grad()) h = ad::variable(h.value());
  const Var score_q = q->score_h(h, v, phi);
  const Var score_p = ad::neg(ad::grad(ad::sum(model.energy(v, h, theta)), h, true));
  return ad::scale(ad::mean(ad::sum_rows(ad::square(ad::sub(score_q, score_p)))), 0.5);
}

Var lower_fisher_loss(const models::EnergyModel& model, const posteriors::Posterior& posterior,
                      ParamVars theta, ParamVars phi, const Tensor& points, Rng& rng) {
  return lower_fisher_loss(model, posterior, theta, phi, points,
                           posterior.draw_base_noise(points.rows(), rng));
}

}  // namespace bism::objectives
