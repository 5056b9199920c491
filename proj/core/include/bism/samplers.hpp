// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "bism/models.hpp"
#include "bism/posteriors.hpp"
#include "bism/rng.hpp"
#include "bism/tensor.hpp"

namespace bism::samplers {

/// Chains whose state norm exceeds this are treated as diverged.
inline constexpr double kDivergenceNorm = 1e6;

// ---------------------------------------------------------------------------
// Block Gibbs for the GRBM

struct GibbsResult {
  Tensor v;                  // [n x d_v] final visible states
  Tensor h;                  // [n x d_h] final hidden states
  std::vector<Tensor> chain; // retained visible states, every `thin` sweeps
};

Tensor sample_hidden(const models::GrbmConditionals& cond, const Tensor& v, Rng& rng);
Tensor sample_visible(const models::GrbmConditionals& cond, const Tensor& h, Rng& rng);

/// `steps` sweeps of h ~ p(h | v) then v ~ p(v | h) on every row of v0.
GibbsResult gibbs_grbm(const models::GrbmParams& theta, const Tensor& v0, std::size_t steps,
                       Rng& rng, bool keep_chain = false, std::size_t thin = 1);

// ---------------------------------------------------------------------------
// Contrastive divergence

/// mean grad_theta F(positive) - mean grad_theta F(negative), in GrbmParams::to_params order.
/// This is the descent direction for the negative log-likelihood when
/// `negative` are model samples.
std::vector<Tensor> free_energy_grad_difference(const models::GrbmParams& theta,
                                                const Tensor& positive, const Tensor& negative);

struct CdResult {
  std::vector<Tensor> grad;  // descent direction, GrbmParams::to_params order
  double objective = 0;      // mean F(batch) - mean F(negatives)
  Tensor negatives;
};

/// CD-k from the batch, or PCD-k from `*persistent` (updated in place) when non-null.
CdResult cd_k_grad(const models::GrbmParams& theta, const Tensor& batch, std::size_t k, Rng& rng,
                   Tensor* persistent = nullptr);

// ---------------------------------------------------------------------------
// Langevin dynamics

/// Score of the target at a batch of states, [n x d] -> [n x d].
using TensorScoreFn = std::function<Tensor(const Tensor&)>;

struct LangevinSchedule {
  double step = 0.02;
  std::size_t steps_per_level = 100;
  std::size_t levels = 1;
  double t_lo = 1.0;
  double t_hi = 1.0;

  void validate() const;
  /// Geometric ladder from t_hi down to t_lo with `levels` entries.
  std::vector<double> temperatures() const;
};

/// v <- v + (step / 2) * score(v) + sqrt(step) * eps for steps_per_level * levels
/// iterations. NumericError when a chain diverges.
Tensor langevin(const TensorScoreFn& score, const Tensor& v0, const LangevinSchedule& schedule,
                Rng& rng);

/// Runs `steps_per_level` updates at each temperature of the ladder with the
/// score scaled by 1/T.
Tensor annealed_langevin(const TensorScoreFn& score, const Tensor& v0,
                         const LangevinSchedule& schedule, Rng& rng);

/// -grad_v E(v, h) at fixed h.
Tensor energy_score(const models::EnergyModel& model, const ParamSet& theta, const Tensor& v,
                    const Tensor& h);

/// Approximate posterior mean E_q[h | v] for each row of v.
Tensor posterior_mean(const posteriors::Posterior& posterior, const ParamSet& phi, const Tensor& v);

/// Latent-model sampling: for each output row pick a training point, fix h at
/// its posterior mean, and run annealed Langevin on v from N(0, I).
Tensor sample_eblvm(const models::EnergyModel& model, const posteriors::Posterior& posterior,
                    const ParamSet& theta, const ParamSet& phi, const Tensor& train,
                    std::size_t count, const LangevinSchedule& schedule, Rng& rng);

}  // namespace bism::samplers
