// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "bism/autodiff.hpp"
#include "bism/models.hpp"
#include "bism/posteriors.hpp"
#include "bism/rng.hpp"

namespace bism::objectives {

using ad::Var;
using ParamVars = std::span<const ad::Var>;

enum class ScoreKind { SM, SSM, DSM, MDSM };

const char* to_string(ScoreKind kind) noexcept;
/// Accepts "sm", "ssm", "dsm", "mdsm" (case-insensitive); ConfigError otherwise.
ScoreKind parse_score_kind(const std::string& text);

/// Discrete prior over DSM noise levels.
struct NoisePrior {
  std::vector<double> levels;
  std::vector<double> weights;

  static constexpr std::size_t kDefaultLevels = 10;
  /// `count` geometrically spaced levels over [lo, hi], uniform weights.
  static NoisePrior geometric(double lo, double hi, std::size_t count = kDefaultLevels);
  static NoisePrior point(double level);
  /// ConfigError when empty; DomainError on non-positive levels or weights not summing to 1.
  void validate() const;
  double sample(Rng& rng) const;
};

struct ScoreObjective {
  ScoreKind kind = ScoreKind::DSM;
  std::size_t n_directions = 1;  // SSM
  double sigma = 0.05;           // DSM
  NoisePrior prior;              // MDSM
  double sigma0 = 0.1;           // MDSM anchor

  static ScoreObjective sm();
  static ScoreObjective ssm(std::size_t n_directions = 1);
  static ScoreObjective dsm(double sigma);
  static ScoreObjective mdsm(NoisePrior prior, double sigma0);
  void validate() const;
  /// True for the kinds that evaluate the score at perturbed points.
  bool denoising() const noexcept { return kind == ScoreKind::DSM || kind == ScoreKind::MDSM; }
};

/// Score of an unnormalised density at a batch of points: x [n x d] -> [n x d].
using ScoreFn = std::function<Var(const Var& x)>;

/// Randomness consumed by one evaluation of a score objective.
struct ObjectiveNoise {
  Tensor eps;                     // [n x d] standard normal (DSM, MDSM)
  Tensor levels;                  // [n x 1] per-row noise level (DSM, MDSM)
  std::vector<Tensor> directions; // each [n x d] (SSM)
};

ObjectiveNoise draw_noise(const ScoreObjective& objective, std::size_t n, std::size_t d, Rng& rng);
/// The 2^d Rademacher directions, each replicated over n rows. SizeError for d > 16.
std::vector<Tensor> rademacher_enumeration(std::size_t n, std::size_t d);

/// Where the score is evaluated: the batch itself, or batch + level * eps.
Tensor evaluation_points(const ScoreObjective& objective, const Tensor& batch,
                         const ObjectiveNoise& noise);

/// Per-row values of the objective functional applied to the score at the
/// evaluation points, [n x 1]. `x` must be a graph input holding
/// `evaluation_points(...)`; `batch` supplies denoising targets.
Var objective_rows(const ScoreObjective& objective, const ScoreFn& score_fn, const Var& x,
                   const Tensor& batch, const ObjectiveNoise& noise);
/// Batch mean of `objective_rows` with x built from the evaluation points.
Var score_loss(const ScoreObjective& objective, const ScoreFn& score_fn, const Tensor& batch,
               const ObjectiveNoise& noise);

/// Mean of 1/2 ||s||^2 + tr(grad s). SizeError for d > kMaxHessianDim.
Var sm_loss(const ScoreFn& score_fn, const Tensor& batch);
Var ssm_loss(const ScoreFn& score_fn, const Tensor& batch, std::size_t n_directions, Rng& rng);
Var dsm_loss(const ScoreFn& score_fn, const Tensor& batch, double sigma, Rng& rng);
Var mdsm_loss(const ScoreFn& score_fn, const Tensor& batch, const NoisePrior& prior, double sigma0,
              Rng& rng);

/// grad_x of -F(x; theta), differentiable in theta and x.
ScoreFn marginal_score_fn(const models::EnergyModel& model, ParamVars theta);

// ---------------------------------------------------------------------------
// Latent-variable objectives

enum class LatentMode { Sample, Enumerate };

/// Largest latent dimension accepted by enumerate mode.
inline constexpr std::size_t kMaxEnumerateLatent = 10;

/// Noise shared by every loss evaluated within one outer iteration.
struct IterationNoise {
  ObjectiveNoise objective;
  Tensor latent;  // [n x d_h] posterior base noise
};

IterationNoise draw_iteration_noise(const ScoreObjective& objective,
                                    const posteriors::Posterior& posterior, std::size_t n,
                                    Rng& rng);

/// Objective functional applied to grad_v log[p̃(v, h) / q(h | v)] with h ~ q
/// held fixed in v. Sample mode uses one reparameterised draw per row;
/// enumerate mode takes the exact expectation over binary h.
Var bi_upper_loss(const models::EnergyModel& model, const posteriors::Posterior& posterior,
                  ParamVars theta, ParamVars phi, const Tensor& batch,
                  const ScoreObjective& objective, LatentMode mode, const IterationNoise& noise);
Var bi_upper_loss(const models::EnergyModel& model, const posteriors::Posterior& posterior,
                  ParamVars theta, ParamVars phi, const Tensor& batch,
                  const ScoreObjective& objective, LatentMode mode, Rng& rng);

/// Mean over rows of E_q[log q(h | v) - log p̃(v, h)] at the evaluation points.
Var lower_kl_loss(const models::EnergyModel& model, const posteriors::Posterior& posterior,
                  ParamVars theta, ParamVars phi, const Tensor& points, LatentMode mode,
                  const Tensor& latent_noise);
Var lower_kl_loss(const models::EnergyModel& model, const posteriors::Posterior& posterior,
                  ParamVars theta, ParamVars phi, const Tensor& points, LatentMode mode, Rng& rng);

/// Mean over rows of 1/2 ||grad_h log q - grad_h log p̃||^2 at a reparameterised
/// h. UnsupportedError for a Bernoulli posterior.
Var lower_fisher_loss(const models::EnergyModel& model, const posteriors::Posterior& posterior,
                      ParamVars theta, ParamVars phi, const Tensor& points,
                      const Tensor& latent_noise);
Var lower_fisher_loss(const models::EnergyModel& model, const posteriors::Posterior& posterior,
                      ParamVars theta, ParamVars phi, const Tensor& points, Rng& rng);

/// Repeats every row of `x` `times` times consecutively.
Tensor repeat_rows(const Tensor& x, std::size_t times);

}  // namespace bism::objectives
