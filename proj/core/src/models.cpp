// SPDX-License-Identifier: Apache-2.0
#include "bism/models.hpp"

#include <algorithm>
#include <cmath>

#include "bism/error.hpp"
#include "bism/nn.hpp"
#include "eigen_map.hpp"

namespace bism::models {

using ad::Var;

namespace {

enum GrbmIndex : std::size_t { kLogSigma = 0, kW = 1, kB = 2, kC = 3 };

Tensor as_row(const Tensor& v) {
  return v.rank() == 1 ? v.reshaped({1, v.numel()}) : v;
}

void check_rows(const Var& x, std::size_t cols, const char* what) {
  if (x.value().rank() != 2 || x.shape()[1] != cols) {
    throw ShapeError(std::string(what) + ": expected [n x " + std::to_string(cols) + "], got " +
                     shape_string(x.shape()));
  }
}

}  // namespace

Var EnergyModel::free_energy(const Var&, ParamVars) const {
  throw UnsupportedError(kind() + " model has no closed-form free energy");
}

void EnergyModel::check_params(const ParamSet& theta) const {
  Rng rng(0);
  const ParamSet like = init_params(rng);
  if (like.names != theta.names) throw ShapeError(kind() + ": parameter names do not match model");
  for (std::size_t i = 0; i < like.size(); ++i) {
    if (like.values[i].shape() != theta.values[i].shape()) {
      throw ShapeError(kind() + ": parameter '" + like.names[i] + "' has shape " +
                       shape_string(theta.values[i].shape()) + ", expected " +
                       shape_string(like.values[i].shape()));
    }
  }
}

// ---------------------------------------------------------------------------
// GRBM

GrbmParams GrbmParams::make(double sigma, Tensor W, Tensor b, Tensor c) {
  if (!(sigma > 0)) throw DomainError("GRBM sigma must be positive");
  GrbmParams p{Tensor::scalar(std::log(sigma)), std::move(W), std::move(b), std::move(c)};
  p.validate();
  return p;
}

GrbmParams GrbmParams::from_params(const ParamSet& params) {
  GrbmParams p{params.at("log_sigma"), params.at("W"), params.at("b"), params.at("c")};
  p.validate();
  return p;
}

ParamSet GrbmParams::to_params() const {
  ParamSet out;
  out.add("log_sigma", log_sigma);
  out.add("W", W);
  out.add("b", b);
  out.add("c", c);
  return out;
}

double GrbmParams::sigma() const { return std::exp(log_sigma.item()); }

void GrbmParams::validate() const {
  if (log_sigma.numel() != 1) throw ShapeError("GRBM log_sigma must be a scalar");
  if (W.rank() != 2) throw ShapeError("GRBM W must be a matrix");
  if (b.shape() != Tensor::Shape{W.shape()[0]} || c.shape() != Tensor::Shape{W.shape()[1]}) {
    throw ShapeError("GRBM b/c do not match W " + shape_string(W.shape()));
  }
  if (!log_sigma.all_finite() || !W.all_finite() || !b.all_finite() || !c.all_finite()) {
    throw DomainError("GRBM parameters must be finite");
  }
}

GrbmModel::GrbmModel(std::size_t visible_dim, std::size_t latent_dim)
    : d_v_(visible_dim), d_h_(latent_dim) {
  if (d_v_ == 0 || d_h_ == 0) throw ShapeError("GRBM dimensions must be positive");
}

Var GrbmModel::hidden_logits(const Var& v, ParamVars theta) {
  return ad::add(ad::mul(ad::matmul(v, theta[kW]), ad::exp(ad::neg(theta[kLogSigma]))),
                 theta[kC]);
}

Var GrbmModel::energy(const Var& v, const Var& h, ParamVars theta) const {
  check_rows(v, d_v_, "grbm energy v");
  check_rows(h, d_h_, "grbm energy h");
  if (h.shape()[0] != v.shape()[0]) throw ShapeError("grbm energy: batch sizes differ");
  const Var& ls = theta[kLogSigma];
  const Var quad = ad::mul(ad::sum_rows(ad::square(ad::sub(v, theta[kB]))),
                           ad::scale(ad::exp(ad::scale(ls, -2.0)), 0.5));
  const Var ch = ad::sum_rows(ad::mul(h, theta[kC]));
  const Var vwh = ad::mul(ad::sum_rows(ad::mul(ad::matmul(v, theta[kW]), h)), ad::exp(ad::neg(ls)));
  return ad::sub(ad::sub(quad, ch), vwh);
}

Var GrbmModel::free_energy(const Var& v, ParamVars theta) const {
  check_rows(v, d_v_, "grbm free energy v");
  const Var& ls = theta[kLogSigma];
  const Var quad = ad::mul(ad::sum_rows(ad::square(ad::sub(v, theta[kB]))),
                           ad::scale(ad::exp(ad::scale(ls, -2.0)), 0.5));
  return ad::sub(quad, ad::sum_rows(ad::softplus(hidden_logits(v, theta))));
}

ParamSet GrbmModel::init_params(Rng& rng) const {
  Tensor W = rng.normal_tensor({d_v_, d_h_});
  for (double& x : W.data()) x *= 0.1;
  return GrbmParams{Tensor::scalar(0.0), std::move(W), Tensor({d_v_}), Tensor({d_h_})}.to_params();
}

double grbm_energy(const Tensor& v, const Tensor& h, const GrbmParams& theta) {
  theta.validate();
  GrbmModel model(theta.visible_dim(), theta.latent_dim());
  const auto vars = to_vars(theta.to_params(), false);
  return model.energy(ad::constant(as_row(v)), ad::constant(as_row(h)), vars).item();
}

double grbm_free_energy(const Tensor& v, const GrbmParams& theta) {
  theta.validate();
  GrbmModel model(theta.visible_dim(), theta.latent_dim());
  const auto vars = to_vars(theta.to_params(), false);
  return model.free_energy(ad::constant(as_row(v)), vars).item();
}

Tensor grbm_true_posterior(const Tensor& v, const GrbmParams& theta) {
  Tensor probs = GrbmConditionals(theta).hidden_probs(as_row(v));
  return v.rank() == 1 ? probs.reshaped({theta.latent_dim()}) : probs;
}

GrbmConditionals::GrbmConditionals(GrbmParams theta)
    : theta_(std::move(theta)), sigma_(theta_.sigma()) {
  theta_.validate();
}

Tensor GrbmConditionals::hidden_probs(const Tensor& v) const {
  if (v.rank() != 2 || v.cols() != theta_.visible_dim()) {
    throw ShapeError("hidden_probs: expected [n x " + std::to_string(theta_.visible_dim()) + "]");
  }
  Tensor out({v.rows(), theta_.latent_dim()});
  auto m = detail::as_matrix(out);
  m.noalias() = detail::as_matrix(v) * detail::as_matrix(theta_.W) / sigma_;
  const auto c = theta_.c.data();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t j = 0; j < out.cols(); ++j) {
      const double z = out(r, j) + c[j];
      out(r, j) = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    }
  }
  return out;
}

Tensor GrbmConditionals::visible_mean(const Tensor& h) const {
  if (h.rank() != 2 || h.cols() != theta_.latent_dim()) {
    throw ShapeError("visible_mean: expected [n x " + std::to_string(theta_.latent_dim()) + "]");
  }
  Tensor out({h.rows(), theta_.visible_dim()});
  auto m = detail::as_matrix(out);
  m.noalias() = detail::as_matrix(h) * detail::as_matrix(theta_.W).transpose() * sigma_;
  const auto b = theta_.b.data();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t j = 0; j < out.cols(); ++j) out(r, j) += b[j];
  }
  return out;
}

GrbmConditionals grbm_conditionals(const GrbmParams& theta) { return GrbmConditionals(theta); }

// ---------------------------------------------------------------------------
// Deep EBLVM

namespace {

std::size_t count_layers(const ParamSet& p, const std::string& prefix) {
  std::size_t n = 0;
  while (std::find(p.names.begin(), p.names.end(),
                   prefix + "." + std::to_string(n) + ".weight") != p.names.end()) {
    ++n;
  }
  return n;
}

}  // namespace

std::size_t DeepEblvmParams::feature_layers() const { return count_layers(params, "g1"); }
std::size_t DeepEblvmParams::coupling_layers() const { return count_layers(params, "t"); }

void DeepEblvmParams::validate() const {
  DeepEblvmModel model(DeepEblvmModel::infer_shape(params));
  model.check_params(params);
  if (!params.all_finite()) throw DomainError("deep EBLVM parameters must be finite");
}

DeepEblvmModel::DeepEblvmModel(DeepEblvmShape shape)
    : shape_(std::move(shape)),
      g1_count_(2 * (shape_.feature_hidden.size() + 1)),
      t_count_(2 * (shape_.coupling_hidden.size() + 1)) {
  if (shape_.visible_dim == 0 || shape_.latent_dim == 0 || shape_.head_width == 0) {
    throw ShapeError("deep EBLVM dimensions must be positive");
  }
}

ParamSet DeepEblvmModel::init_params(Rng& rng) const {
  ParamSet p;
  std::vector<std::size_t> g1{shape_.visible_dim};
  g1.insert(g1.end(), shape_.feature_hidden.begin(), shape_.feature_hidden.end());
  g1.push_back(shape_.latent_dim);
  nn::add_mlp_params(p, "g1", g1, rng);
  std::vector<std::size_t> t{shape_.latent_dim};
  t.insert(t.end(), shape_.coupling_hidden.begin(), shape_.coupling_hidden.end());
  t.push_back(shape_.latent_dim);
  nn::add_mlp_params(p, "t", t, rng);
  nn::add_mlp_params(p, "g3", {2 * shape_.latent_dim, shape_.head_width}, rng);
  return p;
}

Var DeepEblvmModel::energy(const Var& v, const Var& h, ParamVars theta) const {
  check_rows(v, shape_.visible_dim, "deep energy v");
  check_rows(h, shape_.latent_dim, "deep energy h");
  if (h.shape()[0] != v.shape()[0]) throw ShapeError("deep energy: batch sizes differ");
  if (theta.size() != g1_count_ + t_count_ + 2) throw ShapeError("deep energy: bad parameter count");
  const Var z = nn::mlp(v, theta.subspan(0, g1_count_), nn::Activation::Tanh);
  const Var shift = nn::mlp(h, theta.subspan(g1_count_, t_count_), nn::Activation::Tanh);
  const Var coupled[] = {ad::add(z, shift), h};
  const Var u = ad::concat(coupled, 1);
  const Var a = ad::elu(nn::linear(u, theta[g1_count_ + t_count_], theta[g1_count_ + t_count_ + 1]));
  return ad::sum_rows(ad::square(a));
}

DeepEblvmShape DeepEblvmModel::infer_shape(const ParamSet& theta) {
  DeepEblvmShape s;
  const std::size_t g1 = count_layers(theta, "g1");
  const std::size_t t = count_layers(theta, "t");
  if (g1 == 0 || t == 0) throw ShapeError("deep EBLVM parameters lack g1/t layers");
  s.visible_dim = theta.at("g1.0.weight").shape()[0];
  s.feature_hidden.clear();
  for (std::size_t i = 0; i + 1 < g1; ++i) {
    s.feature_hidden.push_back(theta.at("g1." + std::to_string(i) + ".weight").shape()[1]);
  }
  s.latent_dim = theta.at("g1." + std::to_string(g1 - 1) + ".weight").shape()[1];
  s.coupling_hidden.clear();
  for (std::size_t i = 0; i + 1 < t; ++i) {
    s.coupling_hidden.push_back(theta.at("t." + std::to_string(i) + ".weight").shape()[1]);
  }
  s.head_width = theta.at("g3.0.weight").shape()[1];
  return s;
}

double deep_energy(const Tensor& v, const Tensor& h, const DeepEblvmModel& model,
                   const DeepEblvmParams& theta) {
  model.check_params(theta.params);
  const auto vars = to_vars(theta.params, false);
  return model.energy(ad::constant(as_row(v)), ad::constant(as_row(h)), vars).item();
}

Tensor binary_configurations(std::size_t d) {
  if (d > kMaxEnumerationDim) {
    throw SizeError("cannot enumerate " + std::to_string(d) + " binary latents (limit " +
                    std::to_string(kMaxEnumerationDim) + ")");
  }
  const std::size_t count = std::size_t{1} << d;
  Tensor out({count, d});
  for (std::size_t m = 0; m < count; ++m) {
    for (std::size_t j = 0; j < d; ++j) out(m, j) = static_cast<double>((m >> j) & 1U);
  }
  return out;
}

Tensor grbm_latent_log_weights(const GrbmParams& theta) {
  theta.validate();
  const Tensor configs = binary_configurations(theta.latent_dim());
  const Tensor means = GrbmConditionals(theta).visible_mean(configs);
  const double sigma = theta.sigma();
  const auto b = theta.b.data();
  const auto c = theta.c.data();
  double b2 = 0;
  for (double x : b) b2 += x * x;
  Tensor out({configs.rows()});
  for (std::size_t m = 0; m < configs.rows(); ++m) {
    double ch = 0;
    for (std::size_t j = 0; j < configs.cols(); ++j) ch += c[j] * configs(m, j);
    double mu2 = 0;
    for (std::size_t i = 0; i < means.cols(); ++i) mu2 += means(m, i) * means(m, i);
    out[m] = ch + (mu2 - b2) / (2.0 * sigma * sigma);
  }
  return out;
}

Tensor energies(const EnergyModel& model, const Tensor& v, const Tensor& h, const ParamSet& theta) {
  ad::NoGradGuard guard;
  const auto vars = to_vars(theta, false);
  return model.energy(ad::constant(v), ad::constant(h), vars).value();
}

}  // namespace bism::models
