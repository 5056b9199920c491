// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bism/autodiff.hpp"
#include "bism/params.hpp"
#include "bism/rng.hpp"
#include "bism/tensor.hpp"

namespace bism::models {

using ParamVars = std::span<const ad::Var>;

/// Joint energy E(v, h; θ) of an energy-based latent variable model, with
/// unnormalised density p̃(v, h) = exp(-E).
///
/// All methods work on batches: v is [n x d_v], h is [n x d_h] and energies
/// come back as [n x 1]. `theta` is the graph view of `init_params()` layout.
class EnergyModel {
 public:
  virtual ~EnergyModel() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t visible_dim() const = 0;
  virtual std::size_t latent_dim() const = 0;

  virtual ad::Var energy(const ad::Var& v, const ad::Var& h, ParamVars theta) const = 0;

  /// -log p̃(v) with h marginalised out, when available in closed form.
  virtual bool has_free_energy() const { return false; }
  virtual ad::Var free_energy(const ad::Var& v, ParamVars theta) const;

  virtual ParamSet init_params(Rng& rng) const = 0;
  /// Throws ShapeError if `theta` does not match this model's layout.
  void check_params(const ParamSet& theta) const;
};

// ---------------------------------------------------------------------------
// Gaussian restricted Boltzmann machine
//
// E(v, h) = ||v - b||^2 / (2 sigma^2) - c^T h - v^T W h / sigma
//
// h may be relaxed to [0, 1]^{d_h}; binary h is the special case.

struct GrbmParams {
  Tensor log_sigma = Tensor::scalar(0.0);  // sigma stored in log space
  Tensor W;                                // [d_v x d_h]
  Tensor b;                                // [d_v]
  Tensor c;                                // [d_h]

  static GrbmParams make(double sigma, Tensor W, Tensor b, Tensor c);
  static GrbmParams from_params(const ParamSet& params);
  ParamSet to_params() const;

  double sigma() const;
  std::size_t visible_dim() const { return W.shape()[0]; }
  std::size_t latent_dim() const { return W.shape()[1]; }
  void validate() const;
};

class GrbmModel final : public EnergyModel {
 public:
  GrbmModel(std::size_t visible_dim, std::size_t latent_dim);

  std::string kind() const override { return "grbm"; }
  std::size_t visible_dim() const override { return d_v_; }
  std::size_t latent_dim() const override { return d_h_; }
  ad::Var energy(const ad::Var& v, const ad::Var& h, ParamVars theta) const override;
  bool has_free_energy() const override { return true; }
  ad::Var free_energy(const ad::Var& v, ParamVars theta) const override;
  /// log sigma = 0, W ~ N(0, 0.1^2), b = c = 0.
  ParamSet init_params(Rng& rng) const override;

  /// Hidden pre-activations c + v^T W / sigma as [n x d_h].
  static ad::Var hidden_logits(const ad::Var& v, ParamVars theta);

 private:
  std::size_t d_v_;
  std::size_t d_h_;
};

/// Single-point evaluations. `v` is [d_v], `h` is [d_h].
double grbm_energy(const Tensor& v, const Tensor& h, const GrbmParams& theta);
double grbm_free_energy(const Tensor& v, const GrbmParams& theta);
/// p(h_j = 1 | v) = sigmoid(c_j + (v^T W)_j / sigma); `v` may be [d_v] or [n x d_v].
Tensor grbm_true_posterior(const Tensor& v, const GrbmParams& theta);

/// Block conditionals of the GRBM: h | v is factorised Bernoulli, v | h is
/// N(b + sigma W h, sigma^2 I).
class GrbmConditionals {
 public:
  explicit GrbmConditionals(GrbmParams theta);

  /// [n x d_h] Bernoulli means for visible rows [n x d_v].
  Tensor hidden_probs(const Tensor& v) const;
  /// [n x d_v] Gaussian means for hidden rows [n x d_h].
  Tensor visible_mean(const Tensor& h) const;
  double visible_variance() const { return sigma_ * sigma_; }
  const GrbmParams& params() const noexcept { return theta_; }

 private:
  GrbmParams theta_;
  double sigma_;
};

GrbmConditionals grbm_conditionals(const GrbmParams& theta);

/// Unnormalised log-marginal of every binary h (rows of binary_configurations),
/// c^T h + (||b + sigma W h||^2 - ||b||^2) / (2 sigma^2), as [2^{d_h}].
Tensor grbm_latent_log_weights(const GrbmParams& theta);

// ---------------------------------------------------------------------------
// Deep EBLVM: E(v, h) = g3(g2(g1(v), h)) where g1 is an MLP feature net,
// g2(z, h) = (z + t(h), h) is an additive coupling and g3 is an affine layer
// followed by ELU and a squared 2-norm.

struct DeepEblvmShape {
  std::size_t visible_dim = 0;
  std::size_t latent_dim = 0;
  std::vector<std::size_t> feature_hidden{128, 128, 128};
  std::vector<std::size_t> coupling_hidden{64};
  std::size_t head_width = 64;
};

/// Named-parameter view: g1.<i>.weight/bias, t.<i>.weight/bias, g3.0.weight/bias.
struct DeepEblvmParams {
  ParamSet params;

  std::size_t feature_layers() const;
  std::size_t coupling_layers() const;
  void validate() const;
};

class DeepEblvmModel final : public EnergyModel {
 public:
  explicit DeepEblvmModel(DeepEblvmShape shape);

  std::string kind() const override { return "deep"; }
  std::size_t visible_dim() const override { return shape_.visible_dim; }
  std::size_t latent_dim() const override { return shape_.latent_dim; }
  ad::Var energy(const ad::Var& v, const ad::Var& h, ParamVars theta) const override;
  ParamSet init_params(Rng& rng) const override;

  const DeepEblvmShape& shape() const noexcept { return shape_; }
  /// Recovers the layer widths from a parameter set (checkpoint loading).
  static DeepEblvmShape infer_shape(const ParamSet& theta);

 private:
  DeepEblvmShape shape_;
  std::size_t g1_count_;
  std::size_t t_count_;
};

double deep_energy(const Tensor& v, const Tensor& h, const DeepEblvmModel& model,
                   const DeepEblvmParams& theta);

/// All 2^d binary vectors as rows of a [2^d x d] tensor; row m has h_j = bit j of m.
/// SizeError above kMaxEnumerationDim.
inline constexpr std::size_t kMaxEnumerationDim = 20;
Tensor binary_configurations(std::size_t d);

/// Evaluates the per-row energies of `model` at constant inputs.
Tensor energies(const EnergyModel& model, const Tensor& v, const Tensor& h, const ParamSet& theta);

}  // namespace bism::models
