// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bism/autodiff.hpp"
#include "bism/params.hpp"
#include "bism/rng.hpp"

namespace bism::posteriors {

using ParamVars = std::span<const ad::Var>;

enum class PosteriorKind { Bernoulli, Gaussian };

const char* to_string(PosteriorKind kind) noexcept;

/// Amortised variational posterior q(h | v; φ).
///
/// Sampling is reparameterised: the caller draws base noise once (so it can be
/// shared between evaluations) and `sample` maps it through φ differentiably.
class Posterior {
 public:
  virtual ~Posterior() = default;

  virtual PosteriorKind kind() const = 0;
  virtual std::size_t visible_dim() const = 0;
  virtual std::size_t latent_dim() const = 0;
  virtual ParamSet init_params(Rng& rng) const = 0;

  /// Base noise for `n` reparameterised samples, [n x d_h].
  virtual Tensor draw_base_noise(std::size_t n, Rng& rng) const = 0;
  /// h = T(noise; v, φ), [n x d_h].
  virtual ad::Var sample(const ad::Var& v, ParamVars phi, const Tensor& base_noise) const = 0;
  /// log q(h | v; φ) per row, [n x 1].
  virtual ad::Var log_density(const ad::Var& h, const ad::Var& v, ParamVars phi) const = 0;
};

// ---------------------------------------------------------------------------
// Bernoulli posterior with binary-Concrete (Gumbel-Softmax) relaxation

struct BernoulliPosteriorParams {
  Tensor A;  // [d_h x d_v]
  Tensor a;  // [d_h]
  double temperature = 0.1;

  ParamSet to_params() const;
  static BernoulliPosteriorParams from_params(const ParamSet& phi, double temperature);
  void validate() const;
};

class BernoulliPosterior final : public Posterior {
 public:
  static constexpr double kDefaultTemperature = 0.1;

  BernoulliPosterior(std::size_t visible_dim, std::size_t latent_dim,
                     double temperature = kDefaultTemperature);

  PosteriorKind kind() const override { return PosteriorKind::Bernoulli; }
  std::size_t visible_dim() const override { return d_v_; }
  std::size_t latent_dim() const override { return d_h_; }
  double temperature() const noexcept { return tau_; }
  /// A ~ N(0, 0.1^2), a = 0.
  ParamSet init_params(Rng& rng) const override;

  /// Standard logistic noise.
  Tensor draw_base_noise(std::size_t n, Rng& rng) const override;
  /// Relaxed h_j = sigmoid((logit_j + L_j) / tau).
  ad::Var sample(const ad::Var& v, ParamVars phi, const Tensor& base_noise) const override;
  /// Multilinear extension sum_j h_j log p_j + (1 - h_j) log(1 - p_j).
  ad::Var log_density(const ad::Var& h, const ad::Var& v, ParamVars phi) const override;

  /// A v + a, [n x d_h].
  ad::Var logits(const ad::Var& v, ParamVars phi) const;
  ad::Var probs(const ad::Var& v, ParamVars phi) const;

 private:
  std::size_t d_v_;
  std::size_t d_h_;
  double tau_;
};

/// sigmoid(A v + a); `v` may be [d_v] or [n x d_v].
Tensor bernoulli_probs(const Tensor& v, const BernoulliPosteriorParams& phi);
/// Reparameterised relaxed draw from given probabilities and logistic noise.
/// DomainError when a probability is exactly 0 or 1, or tau <= 0.
ad::Var sample_concrete(const ad::Var& probs, double tau, const Tensor& logistic_noise);
Tensor sample_concrete(const Tensor& probs, double tau, Rng& rng);
/// Log-mass of (possibly relaxed) h for a single visible point [d_v] or summed over rows.
double bernoulli_log_density(const Tensor& h, const Tensor& v, const BernoulliPosteriorParams& phi);

// ---------------------------------------------------------------------------
// Diagonal Gaussian posterior with an MLP trunk and (mean, log-std) heads

class GaussianPosterior final : public Posterior {
 public:
  GaussianPosterior(std::size_t visible_dim, std::size_t latent_dim,
                    std::vector<std::size_t> hidden = {128, 128, 128});

  PosteriorKind kind() const override { return PosteriorKind::Gaussian; }
  std::size_t visible_dim() const override { return d_v_; }
  std::size_t latent_dim() const override { return d_h_; }
  const std::vector<std::size_t>& hidden() const noexcept { return hidden_; }
  ParamSet init_params(Rng& rng) const override;

  /// Standard normal noise.
  Tensor draw_base_noise(std::size_t n, Rng& rng) const override;
  /// h = mu(v) + exp(rho(v)) * eps.
  ad::Var sample(const ad::Var& v, ParamVars phi, const Tensor& base_noise) const override;
  ad::Var log_density(const ad::Var& h, const ad::Var& v, ParamVars phi) const override;

  /// (mu, rho) heads, each [n x d_h].
  std::pair<ad::Var, ad::Var> mean_and_log_std(const ad::Var& v, ParamVars phi) const;
  /// grad_h log q(h | v) = -(h - mu) / exp(2 rho).
  ad::Var score_h(const ad::Var& h, const ad::Var& v, ParamVars phi) const;

  /// Recovers the trunk widths from a parameter set.
  static GaussianPosterior infer(const ParamSet& phi);

 private:
  std::size_t d_v_;
  std::size_t d_h_;
  std::vector<std::size_t> hidden_;
};

Tensor gaussian_sample(const Tensor& v, const GaussianPosterior& posterior, const ParamSet& phi,
                       Rng& rng);
Tensor gaussian_score_h(const Tensor& h, const Tensor& v, const GaussianPosterior& posterior,
                        const ParamSet& phi);

}  // namespace bism::posteriors
