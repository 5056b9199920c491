// SPDX-License-Identifier: Apache-2.0
#include "bism/samplers.hpp"

#include <cmath>

#include "bism/autodiff.hpp"
#include "bism/error.hpp"
#include "bism/params.hpp"

namespace bism::samplers {

using ad::Var;

namespace {

void guard_divergence(const Tensor& v, const char* where) {
  const std::size_t d = v.cols();
  for (std::size_t i = 0; i < v.rows(); ++i) {
    double norm2 = 0;
    for (std::size_t j = 0; j < d; ++j) norm2 += v(i, j) * v(i, j);
    if (!std::isfinite(norm2) || norm2 > kDivergenceNorm * kDivergenceNorm) {
      throw NumericError(where, std::string(where) + ": chain " + std::to_string(i) +
                                    " diverged (state norm above 1e6)");
    }
  }
}

void langevin_steps(const TensorScoreFn& score, Tensor& v, double step, double inv_temp,
                    std::size_t steps, Rng& rng, const char* where) {
  const double noise = std::sqrt(step);
  for (std::size_t t = 0; t < steps; ++t) {
    const Tensor s = score(v);
    if (s.shape() != v.shape()) throw ShapeError("score shape differs from state shape");
    auto vd = v.data();
    const auto sd = s.data();
    for (std::size_t k = 0; k < vd.size(); ++k) {
      vd[k] += 0.5 * step * inv_temp * sd[k] + noise * rng.normal();
    }
    guard_divergence(v, where);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Gibbs

Tensor sample_hidden(const models::GrbmConditionals& cond, const Tensor& v, Rng& rng) {
  Tensor h = cond.hidden_probs(v);
  for (double& p : h.data()) p = rng.uniform() < p ? 1.0 : 0.0;
  return h;
}

Tensor sample_visible(const models::GrbmConditionals& cond, const Tensor& h, Rng& rng) {
  Tensor v = cond.visible_mean(h);
  const double sigma = std::sqrt(cond.visible_variance());
  for (double& x : v.data()) x += sigma * rng.normal();
  return v;
}

GibbsResult gibbs_grbm(const models::GrbmParams& theta, const Tensor& v0, std::size_t steps,
                       Rng& rng, bool keep_chain, std::size_t thin) {
  if (steps == 0) throw DomainError("Gibbs sampling needs at least one sweep");
  if (thin == 0) throw DomainError("thinning interval must be positive");
  const models::GrbmConditionals cond(theta);
  GibbsResult out;
  out.v = v0;
  for (std::size_t t = 1; t <= steps; ++t) {
    out.h = sample_hidden(cond, out.v, rng);
    out.v = sample_visible(cond, out.h, rng);
    if (keep_chain && t % thin == 0) out.chain.push_back(out.v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Contrastive divergence

std::vector<Tensor> free_energy_grad_difference(const models::GrbmParams& theta,
                                                const Tensor& positive, const Tensor& negative) {
  const models::GrbmModel model(theta.visible_dim(), theta.latent_dim());
  const auto vars = to_vars(theta.to_params(), true);
  const Var diff = ad::sub(ad::mean(model.free_energy(ad::constant(positive), vars)),
                           ad::mean(model.free_energy(ad::constant(negative), vars)));
  std::vector<Tensor> out;
  for (const Var& g : ad::grad(diff, vars)) out.push_back(g.value());
  return out;
}

CdResult cd_k_grad(const models::GrbmParams& theta, const Tensor& batch, std::size_t k, Rng& rng,
                   Tensor* persistent) {
  CdResult out;
  const Tensor& start = persistent != nullptr ? *persistent : batch;
  out.negatives = k == 0 ? start : gibbs_grbm(theta, start, k, rng).v;
  if (persistent != nullptr) *persistent = out.negatives;

  const models::GrbmModel model(theta.visible_dim(), theta.latent_dim());
  const auto vars = to_vars(theta.to_params(), true);
  const Var diff = ad::sub(ad::mean(model.free_energy(ad::constant(batch), vars)),
                           ad::mean(model.free_energy(ad::constant(out.negatives), vars)));
  out.objective = diff.item();
  for (const Var& g : ad::grad(diff, vars)) out.grad.push_back(g.value());
  return out;
}

// ---------------------------------------------------------------------------
// Langevin

void LangevinSchedule::validate() const {
  if (!(step > 0)) throw DomainError("Langevin step must be positive");
  if (steps_per_level == 0 || levels == 0) throw DomainError("Langevin needs at least one step");
  if (!(t_lo > 0) || !(t_hi >= t_lo)) throw DomainError("temperature range needs 0 < t_lo <= t_hi");
}

std::vector<double> LangevinSchedule::temperatures() const {
  validate();
  std::vector<double> out;
  for (std::size_t i = 0; i < levels; ++i) {
    const double t = levels == 1 ? 1.0 : static_cast<double>(i) / static_cast<double>(levels - 1);
    out.push_back(levels == 1 ? t_lo : t_hi * std::pow(t_lo / t_hi, t));
  }
  return out;
}

Tensor langevin(const TensorScoreFn& score, const Tensor& v0, const LangevinSchedule& schedule,
                Rng& rng) {
  schedule.validate();
  Tensor v = v0;
  langevin_steps(score, v, schedule.step, 1.0, schedule.steps_per_level * schedule.levels, rng,
                 "langevin");
  return v;
}

Tensor annealed_langevin(const TensorScoreFn& score, const Tensor& v0,
                         const LangevinSchedule& schedule, Rng& rng) {
  Tensor v = v0;
  for (double temp : schedule.temperatures()) {
    langevin_steps(score, v, schedule.step, 1.0 / temp, schedule.steps_per_level, rng,
                   "annealed_langevin");
  }
  return v;
}

Tensor energy_score(const models::EnergyModel& model, const ParamSet& theta, const Tensor& v,
                    const Tensor& h) {
  const auto vars = to_vars(theta, false);
  const Var x = ad::variable(v);
  const Var e = ad::sum(model.energy(x, ad::constant(h), vars));
  Tensor g = ad::grad(e, x).value();
  for (double& val : g.data()) val = -val;
  return g;
}

Tensor posterior_mean(const posteriors::Posterior& posterior, const ParamSet& phi, const Tensor& v) {
  ad::NoGradGuard guard;
  const auto vars = to_vars(phi, false);
  if (const auto* q = dynamic_cast<const posteriors::BernoulliPosterior*>(&posterior)) {
    return q->probs(ad::constant(v), vars).value();
  }
  if (const auto* q = dynamic_cast<const posteriors::GaussianPosterior*>(&posterior)) {
    return q->mean_and_log_std(ad::constant(v), vars).first.value();
  }
  throw UnsupportedError("posterior mean not available for this posterior");
}

Tensor sample_eblvm(const models::EnergyModel& model, const posteriors::Posterior& posterior,
                    const ParamSet& theta, const ParamSet& phi, const Tensor& train,
                    std::size_t count, const LangevinSchedule& schedule, Rng& rng) {
  if (train.rank() != 2 || train.rows() == 0) throw ShapeError("sampling needs training points");
  const std::size_t d = train.cols();
  Tensor picked({count, d});
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t src = rng.index(train.rows());
    for (std::size_t j = 0; j < d; ++j) picked(i, j) = train(src, j);
  }
  const Tensor h = posterior_mean(posterior, phi, picked);
  const Tensor v0 = rng.normal_tensor({count, d});
  const TensorScoreFn score = [&](const Tensor& v) { return energy_score(model, theta, v, h); };
  return annealed_langevin(score, v0, schedule, rng);
}

}  // namespace bism::samplers
