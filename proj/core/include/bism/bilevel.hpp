// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bism/autodiff.hpp"
#include "bism/data.hpp"
#include "bism/models.hpp"
#include "bism/objectives.hpp"
#include "bism/params.hpp"
#include "bism/posteriors.hpp"

namespace bism::bilevel {

using ad::Var;
using ParamVars = std::span<const ad::Var>;

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool initialised() const noexcept { return !m.empty(); }
};

/// One bias-corrected Adam update of `params` in place. A fresh state is sized
/// on first use. ShapeError when grads or state do not mirror params.
void adam_step(std::vector<Tensor>& params, std::span<const Tensor> grads, AdamState& state,
               double lr);

// ---------------------------------------------------------------------------
// Bi-level problems

/// Minibatch objectives of one outer iteration: upper Ĵ(θ, φ) and lower Ĝ(θ, φ).
/// Both must be deterministic functions of their arguments (noise is fixed
/// when the problem is built).
class BilevelProblem {
 public:
  virtual ~BilevelProblem() = default;
  virtual Var upper(ParamVars theta, ParamVars phi) const = 0;
  virtual Var lower(ParamVars theta, ParamVars phi) const = 0;
};

enum class LowerKind { KL, Fisher };

const char* to_string(LowerKind kind) noexcept;
LowerKind parse_lower_kind(const std::string& text);

/// Score-matching instance on a fixed batch with fixed iteration noise. The
/// lower loss is evaluated at the same points the score is evaluated at.
class ScoreMatchingProblem final : public BilevelProblem {
 public:
  ScoreMatchingProblem(const models::EnergyModel& model, const posteriors::Posterior& posterior,
                       Tensor batch, objectives::ScoreObjective objective,
                       objectives::LatentMode mode, LowerKind lower,
                       objectives::IterationNoise noise);

  Var upper(ParamVars theta, ParamVars phi) const override;
  Var lower(ParamVars theta, ParamVars phi) const override;

 private:
  const models::EnergyModel* model_;
  const posteriors::Posterior* posterior_;
  Tensor batch_;
  Tensor points_;
  objectives::ScoreObjective objective_;
  objectives::LatentMode mode_;
  LowerKind lower_;
  objectives::IterationNoise noise_;
};

/// Quadratic bilevel toy with an affine best response:
///   Ĝ = 1/2 (φ - Bθ - c)^T A (φ - Bθ - c)
///   Ĵ = 1/2 ||φ - t||^2 + 1/2 λ ||θ||^2
/// so φ*(θ) = Bθ + c and dĴ/dθ = B^T (Bθ + c - t) + λθ.
class QuadraticProblem final : public BilevelProblem {
 public:
  QuadraticProblem(Tensor A, Tensor B, Tensor c, Tensor t, double lambda);

  Var upper(ParamVars theta, ParamVars phi) const override;
  Var lower(ParamVars theta, ParamVars phi) const override;

  Tensor best_response(const Tensor& theta) const;
  Tensor exact_gradient(const Tensor& theta) const;
  const Tensor& hessian() const noexcept { return A_; }

 private:
  Tensor A_;  // [p x p] symmetric positive definite
  Tensor B_;  // [p x m]
  Tensor c_;  // [p x 1]
  Tensor t_;  // [p x 1]
  double lambda_;
};

// ---------------------------------------------------------------------------
// Algorithm pieces

enum class InnerOptimizer { Adam, GD };

struct InnerOptions {
  std::size_t K = 5;
  double alpha = 1e-3;
  InnerOptimizer optimizer = InnerOptimizer::Adam;
};

struct InnerResult {
  std::vector<Tensor> phi;
  double last_loss = 0;  // Ĝ at the start of the final step; NaN when K = 0
};

/// K updates of φ on the lower loss with θ held constant. NumericError names
/// the step whose gradient was non-finite.
InnerResult inner_update(const BilevelProblem& problem, std::span<const Tensor> theta,
                         std::vector<Tensor> phi, const InnerOptions& options,
                         AdamState* adam = nullptr);

inline constexpr std::size_t kDefaultNodeCap = 2'000'000;

struct UnrollOptions {
  std::size_t N = 5;
  double alpha = 1e-3;
  std::size_t node_cap = kDefaultNodeCap;
};

/// φ̂^N as graph nodes: N plain gradient steps on Ĝ from the constant φ⁰,
/// differentiable in `theta`. ResourceError when the graph grows past the cap.
std::vector<Var> unroll(const BilevelProblem& problem, ParamVars theta,
                        std::span<const Tensor> phi0, const UnrollOptions& options);

struct SurrogateResult {
  std::vector<Tensor> grad;  // dĴ(θ, φ̂^N(θ))/dθ
  double upper_loss = 0;
};

SurrogateResult surrogate_grad(const BilevelProblem& problem, std::span<const Tensor> theta,
                               std::span<const Tensor> phi0, const UnrollOptions& options);

struct BiasProbeResult {
  std::vector<std::size_t> N;
  std::vector<double> bias;
  std::vector<Tensor> phi_star;
  std::vector<Tensor> reference_grad;
  bool converged = true;
  std::string warning;
};

inline constexpr std::size_t kDefaultProbeSteps = 2000;
/// Largest lower-level dimension for the dense implicit reference gradient.
inline constexpr std::size_t kMaxImplicitDim = 512;

/// Refines φ̂* with `k_star` plain gradient steps from `phi`, then reports
/// ||surrogate_grad(N) - dĴ(θ, φ̂*(θ))/dθ|| for each N, where the reference is
/// the total derivative through the implicit best response at φ̂*.
BiasProbeResult gradient_bias_probe(const BilevelProblem& problem, std::span<const Tensor> theta,
                                    std::span<const Tensor> phi,
                                    std::span<const std::size_t> n_values, double alpha,
                                    std::size_t k_star = kDefaultProbeSteps);

// ---------------------------------------------------------------------------
// Training loop

enum class Method { BiSM, Marginal, CD, PCD };

const char* to_string(Method method) noexcept;
Method parse_method(const std::string& text);

struct TrainConfig {
  Method method = Method::BiSM;
  objectives::ScoreObjective objective = objectives::ScoreObjective::dsm(0.05);
  LowerKind lower = LowerKind::KL;
  objectives::LatentMode latent_mode = objectives::LatentMode::Sample;
  std::size_t K = 5;
  std::size_t N = 5;
  double alpha = 1e-3;                // inner Adam rate
  std::optional<double> unroll_alpha; // defaults to alpha
  double beta = 1e-3;                 // outer Adam rate
  InnerOptimizer inner_optimizer = InnerOptimizer::Adam;
  bool lr_decay = false;              // rates scaled by 1/sqrt(t)
  std::size_t batch_size = 100;
  std::size_t max_iters = 1000;
  std::size_t eval_every = 100;
  std::size_t cd_k = 1;
  std::size_t node_cap = kDefaultNodeCap;
  std::uint64_t seed = 0;

  void validate() const;
  double unroll_rate() const { return unroll_alpha.value_or(alpha); }
};

struct MetricsRow {
  std::size_t iter = 0;
  double wall_seconds = 0;
  double upper_loss = 0;
  double lower_loss = 0;
  std::optional<double> test_ll;
  std::optional<double> test_fisher;
  std::optional<double> posterior_fisher;
  std::optional<double> grad_bias;
};

struct TrainHooks {
  /// Fills the optional metrics of a row from the current parameters.
  std::function<void(MetricsRow&, const ParamSet& theta, const ParamSet& phi)> evaluate;
  /// Called after every emitted row (checkpointing, streaming output).
  std::function<void(const MetricsRow&, const ParamSet& theta, const ParamSet& phi)> on_row;
};

struct TrainResult {
  ParamSet theta;
  ParamSet phi;
  std::vector<MetricsRow> metrics;
  std::size_t iterations = 0;  // completed outer iterations
  bool failed = false;
  std::string error;
};

/// Runs the configured method for max_iters iterations. Rows are emitted at
/// iteration 0 and every eval_every iterations (and at the end). On a numeric
/// failure the result carries the last valid parameters and failed = true.
/// `posterior` may be null for Marginal, CD and PCD.
TrainResult train(const models::EnergyModel& model, const posteriors::Posterior* posterior,
                  const data::Dataset& data, const TrainConfig& config, ParamSet theta,
                  ParamSet phi, const TrainHooks& hooks = {});

}  // namespace bism::bilevel
