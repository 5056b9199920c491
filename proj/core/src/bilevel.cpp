// SPDX-License-Identifier: Apache-2.0
#include "bism/bilevel.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "bism/error.hpp"
#include "bism/samplers.hpp"
#include "eigen_map.hpp"

namespace bism::bilevel {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<Var> leaves(std::span<const Tensor> values, bool trainable) {
  std::vector<Var> out;
  out.reserve(values.size());
  for (const Tensor& v : values) out.push_back(trainable ? ad::variable(v) : ad::constant(v));
  return out;
}

bool all_finite(std::span<const Tensor> ts) {
  return std::all_of(ts.begin(), ts.end(), [](const Tensor& t) { return t.all_finite(); });
}

std::string lower_case(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

/// Scalar graph node holding entry `k` of `x` (any rank).
Var entry(const Var& x, std::size_t k) {
  const Var flat = x.value().rank() == 1 ? x : ad::reshape(x, {x.numel()});
  return ad::sum(ad::slice(flat, 0, k, k + 1));
}

}  // namespace

// ---------------------------------------------------------------------------
// Adam

void adam_step(std::vector<Tensor>& params, std::span<const Tensor> grads, AdamState& state,
               double lr) {
  if (grads.size() != params.size()) throw ShapeError("adam_step: gradient count differs from parameters");
  if (!state.initialised()) {
    for (const Tensor& p : params) {
      state.m.emplace_back(p.shape());
      state.v.emplace_back(p.shape());
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: state does not mirror parameters");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].shape() || state.m[i].shape() != params[i].shape()) {
      throw ShapeError("adam_step: shape mismatch for parameter " + std::to_string(i));
    }
    auto p = params[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    const auto g = grads[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      p[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + state.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Problems

const char* to_string(LowerKind kind) noexcept { return kind == LowerKind::KL ? "kl" : "fisher"; }

LowerKind parse_lower_kind(const std::string& text) {
  const std::string s = lower_case(text);
  if (s == "kl") return LowerKind::KL;
  if (s == "fisher") return LowerKind::Fisher;
  throw ConfigError("unknown lower divergence '" + text + "'");
}

ScoreMatchingProblem::ScoreMatchingProblem(const models::EnergyModel& model,
                                           const posteriors::Posterior& posterior, Tensor batch,
                                           objectives::ScoreObjective objective,
                                           objectives::LatentMode mode, LowerKind lower,
                                           objectives::IterationNoise noise)
    : model_(&model),
      posterior_(&posterior),
      batch_(std::move(batch)),
      objective_(std::move(objective)),
      mode_(mode),
      lower_(lower),
      noise_(std::move(noise)) {
  points_ = objectives::evaluation_points(objective_, batch_, noise_.objective);
}

Var ScoreMatchingProblem::upper(ParamVars theta, ParamVars phi) const {
  return objectives::bi_upper_loss(*model_, *posterior_, theta, phi, batch_, objective_, mode_, noise_);
}

Var ScoreMatchingProblem::lower(ParamVars theta, ParamVars phi) const {
  if (lower_ == LowerKind::Fisher) {
    return objectives::lower_fisher_loss(*model_, *posterior_, theta, phi, points_, noise_.latent);
  }
  return objectives::lower_kl_loss(*model_, *posterior_, theta, phi, points_, mode_, noise_.latent);
}

QuadraticProblem::QuadraticProblem(Tensor A, Tensor B, Tensor c, Tensor t, double lambda)
    : A_(std::move(A)), B_(std::move(B)), c_(std::move(c)), t_(std::move(t)), lambda_(lambda) {
  const std::size_t p = A_.rows();
  if (A_.rank() != 2 || A_.cols() != p || B_.rank() != 2 || B_.rows() != p ||
      c_.shape() != Tensor::Shape{p, 1} || t_.shape() != Tensor::Shape{p, 1}) {
    throw ShapeError("quadratic problem: A [p x p], B [p x m], c and t [p x 1] required");
  }
}

Var QuadraticProblem::upper(ParamVars theta, ParamVars phi) const {
  const Var r = ad::sub(phi[0], ad::constant(t_));
  return ad::add(ad::scale(ad::sum(ad::square(r)), 0.5),
                 ad::scale(ad::sum(ad::square(theta[0])), 0.5 * lambda_));
}

Var QuadraticProblem::lower(ParamVars theta, ParamVars phi) const {
  const Var r = ad::sub(ad::sub(phi[0], ad::matmul(ad::constant(B_), theta[0])), ad::constant(c_));
  return ad::scale(ad::sum(ad::mul(r, ad::matmul(ad::constant(A_), r))), 0.5);
}

Tensor QuadraticProblem::best_response(const Tensor& theta) const {
  Tensor out = c_;
  detail::as_matrix(out).noalias() += detail::as_matrix(B_) * detail::as_matrix(theta);
  return out;
}

Tensor QuadraticProblem::exact_gradient(const Tensor& theta) const {
  Tensor residual = best_response(theta);
  detail::as_matrix(residual) -= detail::as_matrix(t_);
  Tensor out = theta;
  detail::as_matrix(out) *= lambda_;
  detail::as_matrix(out).noalias() += detail::as_matrix(B_).transpose() * detail::as_matrix(residual);
  return out;
}

// ---------------------------------------------------------------------------
// Inner updates, unrolling, surrogate gradient

InnerResult inner_update(const BilevelProblem& problem, std::span<const Tensor> theta,
                         std::vector<Tensor> phi, const InnerOptions& options, AdamState* adam) {
  if (!(options.alpha > 0)) throw DomainError("inner learning rate must be positive");
  InnerResult out{std::move(phi), kNaN};
  AdamState local;
  AdamState& state = adam != nullptr ? *adam : local;
  const auto theta_c = leaves(theta, false);
  for (std::size_t k = 0; k < options.K; ++k) {
    std::vector<Tensor> grads;
    try {
      const auto phi_v = leaves(out.phi, true);
      const Var loss = problem.lower(theta_c, phi_v);
      out.last_loss = loss.item();
      for (const Var& g : ad::grad(loss, phi_v)) grads.push_back(g.value());
    } catch (const NumericError& e) {
      throw NumericError(e.op(), "inner step " + std::to_string(k) + ": " + e.what());
    }
    if (!all_finite(grads) || !std::isfinite(out.last_loss)) {
      throw NumericError("inner_update", "non-finite lower-level gradient at inner step " + std::to_string(k));
    }
    if (options.optimizer == InnerOptimizer::Adam) {
      adam_step(out.phi, grads, state, options.alpha);
    } else {
      for (std::size_t i = 0; i < out.phi.size(); ++i) {
        auto p = out.phi[i].data();
        const auto g = grads[i].data();
        for (std::size_t j = 0; j < p.size(); ++j) p[j] -= options.alpha * g[j];
      }
    }
  }
  return out;
}

std::vector<Var> unroll(const BilevelProblem& problem, ParamVars theta,
                        std::span<const Tensor> phi0, const UnrollOptions& options) {
  if (!(options.alpha > 0)) throw DomainError("unroll learning rate must be positive");
  const std::size_t base = ad::live_node_count();
  std::vector<Var> phi = leaves(phi0, true);
  for (std::size_t k = 0; k < options.N; ++k) {
    const Var loss = problem.lower(theta, phi);
    const auto grads = ad::grad(loss, phi, true);
    for (std::size_t i = 0; i < phi.size(); ++i) phi[i] = ad::sub(phi[i], ad::scale(grads[i], options.alpha));
    const std::size_t live = ad::live_node_count();
    if (live > base && live - base > options.node_cap) {
      throw ResourceError("unrolled graph exceeded " + std::to_string(options.node_cap) +
                          " nodes after step " + std::to_string(k + 1) + " of " +
                          std::to_string(options.N));
    }
  }
  return phi;
}

SurrogateResult surrogate_grad(const BilevelProblem& problem, std::span<const Tensor> theta,
                               std::span<const Tensor> phi0, const UnrollOptions& options) {
  const auto theta_v = leaves(theta, true);
  const auto phi_n = unroll(problem, theta_v, phi0, options);
  const Var loss = problem.upper(theta_v, phi_n);
  SurrogateResult out;
  out.upper_loss = loss.item();
  for (const Var& g : ad::grad(loss, theta_v)) out.grad.push_back(g.value());
  return out;
}

BiasProbeResult gradient_bias_probe(const BilevelProblem& problem, std::span<const Tensor> theta,
                                    std::span<const Tensor> phi,
                                    std::span<const std::size_t> n_values, double alpha,
                                    std::size_t k_star) {
  BiasProbeResult out;
  // φ̂* by plain gradient descent on the fixed problem.
  {
    InnerOptions opts{1, alpha, InnerOptimizer::GD};
    std::vector<Tensor> current(phi.begin(), phi.end());
    double previous = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < k_star; ++k) {
      InnerResult step = inner_update(problem, theta, std::move(current), opts);
      if (step.last_loss > previous + 1e-12 * std::max(1.0, std::abs(previous)) && out.converged) {
        out.converged = false;
        out.warning = "lower loss increased at refinement step " + std::to_string(k) +
                      "; the reference posterior may not be converged";
      }
      previous = step.last_loss;
      current = std::move(step.phi);
    }
    out.phi_star = std::move(current);
  }

  // Reference gradient dĴ/dθ = ∂Ĵ/∂θ - (∂²Ĝ/∂φ∂θ)^T H_φφ^{-1} ∂Ĵ/∂φ at φ̂*.
  const std::size_t P = flatten(out.phi_star).size();
  if (P > kMaxImplicitDim) {
    throw SizeError("implicit reference gradient limited to " + std::to_string(kMaxImplicitDim) +
                    " lower-level parameters, got " + std::to_string(P));
  }
  const std::size_t T = flatten(theta).size();
  Eigen::VectorXd dj_dtheta(static_cast<Eigen::Index>(T));
  Eigen::VectorXd dj_dphi(static_cast<Eigen::Index>(P));
  {
    const auto theta_v = leaves(theta, true);
    const auto phi_v = leaves(out.phi_star, true);
    std::vector<Var> all(theta_v);
    all.insert(all.end(), phi_v.begin(), phi_v.end());
    const auto grads = ad::grad(problem.upper(theta_v, phi_v), all);
    std::vector<Tensor> gt;
    std::vector<Tensor> gp;
    for (std::size_t i = 0; i < grads.size(); ++i) (i < theta_v.size() ? gt : gp).push_back(grads[i].value());
    const auto ft = flatten(gt);
    const auto fp = flatten(gp);
    for (std::size_t i = 0; i < T; ++i) dj_dtheta[static_cast<Eigen::Index>(i)] = ft[i];
    for (std::size_t i = 0; i < P; ++i) dj_dphi[static_cast<Eigen::Index>(i)] = fp[i];
  }
  Eigen::MatrixXd H(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(P));
  Eigen::MatrixXd M(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(T));
  {
    const auto theta_v = leaves(theta, true);
    const auto phi_v = leaves(out.phi_star, true);
    std::vector<Var> all(phi_v);
    all.insert(all.end(), theta_v.begin(), theta_v.end());
    const auto g_phi = ad::grad(problem.lower(theta_v, phi_v), phi_v, true);
    std::size_t row = 0;
    for (const Var& g : g_phi) {
      for (std::size_t k = 0; k < g.numel(); ++k, ++row) {
        const auto second = ad::grad(entry(g, k), all, true);
        std::vector<Tensor> hp;
        std::vector<Tensor> ht;
        for (std::size_t i = 0; i < second.size(); ++i) {
          (i < phi_v.size() ? hp : ht).push_back(second[i].value());
        }
        const auto fh = flatten(hp);
        const auto fm = flatten(ht);
        for (std::size_t j = 0; j < P; ++j) H(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j)) = fh[j];
        for (std::size_t j = 0; j < T; ++j) M(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j)) = fm[j];
      }
    }
  }
  const Eigen::VectorXd x = H.completeOrthogonalDecomposition().solve(dj_dphi);
  const Eigen::VectorXd reference = dj_dtheta - M.transpose() * x;
  {
    std::vector<double> ref(reference.data(), reference.data() + reference.size());
    ParamSet like;
    for (std::size_t i = 0; i < theta.size(); ++i) like.add("t" + std::to_string(i), theta[i]);
    out.reference_grad = unflatten(like, ref);
  }

  for (std::size_t n : n_values) {
    const auto s = surrogate_grad(problem, theta, phi, UnrollOptions{n, alpha, kDefaultNodeCap});
    const auto flat = flatten(s.grad);
    double norm2 = 0;
    for (std::size_t i = 0; i < T; ++i) {
      const double d = flat[i] - reference[static_cast<Eigen::Index>(i)];
      norm2 += d * d;
    }
    out.N.push_back(n);
    out.bias.push_back(std::sqrt(norm2));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

const char* to_string(Method method) noexcept {
  switch (method) {
    case Method::BiSM: return "bism";
    case Method::Marginal: return "marginal";
    case Method::CD: return "cd";
    case Method::PCD: return "pcd";
  }
  return "?";
}

Method parse_method(const std::string& text) {
  const std::string s = lower_case(text);
  if (s == "bism") return Method::BiSM;
  if (s == "marginal") return Method::Marginal;
  if (s == "cd") return Method::CD;
  if (s == "pcd") return Method::PCD;
  throw ConfigError("unknown training method '" + text + "'");
}

void TrainConfig::validate() const {
  objective.validate();
  if (!(alpha > 0)) throw ConfigError("trainer.alpha must be positive");
  if (unroll_alpha && !(*unroll_alpha > 0)) throw ConfigError("trainer.unroll_alpha must be positive");
  if (!(beta >= 0)) throw ConfigError("trainer.beta must be non-negative");
  if (batch_size == 0) throw ConfigError("trainer.batch_size must be at least 1");
  if (eval_every == 0) throw ConfigError("trainer.eval_every must be at least 1");
  if ((method == Method::CD || method == Method::PCD) && cd_k == 0) {
    throw ConfigError("trainer.cd_k must be at least 1");
  }
}

TrainResult train(const models::EnergyModel& model, const posteriors::Posterior* posterior,
                  const data::Dataset& data, const TrainConfig& config, ParamSet theta,
                  ParamSet phi, const TrainHooks& hooks) {
  config.validate();
  data.validate();
  model.check_params(theta);
  if (data.dim() != model.visible_dim()) throw ShapeError("dataset dimension differs from model");
  if (config.method == Method::BiSM && posterior == nullptr) {
    throw ConfigError("bi-level training needs a posterior");
  }
  if (config.method == Method::Marginal && !model.has_free_energy()) {
    throw UnsupportedError("marginal score matching needs a closed-form free energy");
  }
  if ((config.method == Method::CD || config.method == Method::PCD) &&
      dynamic_cast<const models::GrbmModel*>(&model) == nullptr) {
    throw UnsupportedError("contrastive divergence is implemented for the GRBM only");
  }

  const Rng root(config.seed);
  data::BatchIterator batches(data, config.batch_size, root.split(1).seed());
  Rng noise_rng = root.split(2);
  Rng cd_rng = root.split(3);

  TrainResult result;
  std::vector<Tensor> th = theta.values;
  std::vector<Tensor> ph = phi.values;
  AdamState theta_adam;
  AdamState phi_adam;
  Tensor chains;
  const auto clock_start = std::chrono::steady_clock::now();

  const auto snapshot = [&](const std::vector<Tensor>& values, const ParamSet& like) {
    ParamSet p = like;
    p.values = values;
    return p;
  };
  const auto emit = [&](std::size_t iter, double upper, double lower) {
    MetricsRow row;
    row.iter = iter;
    row.upper_loss = upper;
    row.lower_loss = lower;
    const ParamSet t = snapshot(th, theta);
    const ParamSet p = snapshot(ph, phi);
    if (hooks.evaluate) hooks.evaluate(row, t, p);
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
    result.metrics.push_back(row);
    if (hooks.on_row) hooks.on_row(row, t, p);
  };

  for (std::size_t it = 1; it <= config.max_iters; ++it) {
    const std::vector<Tensor> th_prev = th;
    const std::vector<Tensor> ph_prev = ph;
    const double decay = config.lr_decay ? 1.0 / std::sqrt(static_cast<double>(it)) : 1.0;
    double upper = kNaN;
    double lower = kNaN;
    try {
      const Tensor batch = batches.next_batch();
      std::vector<Tensor> grad;
      switch (config.method) {
        case Method::BiSM: {
          auto noise = objectives::draw_iteration_noise(config.objective, *posterior, batch.rows(), noise_rng);
          const ScoreMatchingProblem problem(model, *posterior, batch, config.objective,
                                             config.latent_mode, config.lower, std::move(noise));
          if (it == 1) {
            const auto tv = leaves(th, false);
            const auto pv = leaves(ph, true);
            emit(0, problem.upper(tv, pv).item(), problem.lower(tv, pv).item());
          }
          InnerResult inner = inner_update(problem, th, std::move(ph),
                                           {config.K, config.alpha * decay, config.inner_optimizer},
                                           &phi_adam);
          ph = std::move(inner.phi);
          lower = inner.last_loss;
          if (config.K == 0) lower = problem.lower(leaves(th, false), leaves(ph, true)).item();
          SurrogateResult s = surrogate_grad(
              problem, th, ph, {config.N, config.unroll_rate() * decay, config.node_cap});
          upper = s.upper_loss;
          grad = std::move(s.grad);
          break;
        }
        case Method::Marginal: {
          const auto noise = objectives::draw_noise(config.objective, batch.rows(), batch.cols(), noise_rng);
          const auto theta_v = leaves(th, true);
          const auto score = objectives::marginal_score_fn(model, theta_v);
          if (it == 1) {
            emit(0, objectives::score_loss(config.objective, score, batch, noise).item(), kNaN);
          }
          const Var loss = objectives::score_loss(config.objective, score, batch, noise);
          upper = loss.item();
          for (const Var& g : ad::grad(loss, theta_v)) grad.push_back(g.value());
          break;
        }
        case Method::CD:
        case Method::PCD: {
          const auto params = models::GrbmParams::from_params(snapshot(th, theta));
          if (config.method == Method::PCD && chains.numel() <= 1) chains = batch;
          if (it == 1) {
            Rng probe = cd_rng;
            emit(0, samplers::cd_k_grad(params, batch, config.cd_k, probe).objective, kNaN);
          }
          auto res = samplers::cd_k_grad(params, batch, config.cd_k, cd_rng,
                                         config.method == Method::PCD ? &chains : nullptr);
          upper = res.objective;
          grad = std::move(res.grad);
          break;
        }
      }
      if (!all_finite(grad)) throw NumericError("train", "non-finite parameter gradient at iteration " + std::to_string(it));
      adam_step(th, grad, theta_adam, config.beta * decay);
      if (!all_finite(th) || !all_finite(ph)) {
        throw NumericError("train", "non-finite parameters after iteration " + std::to_string(it));
      }
    } catch (const NumericError& e) {
      th = th_prev;
      ph = ph_prev;
      result.failed = true;
      result.error = "iteration " + std::to_string(it) + ": " + e.what();
      break;
    } catch (const DomainError& e) {
      th = th_prev;
      ph = ph_prev;
      result.failed = true;
      result.error = "iteration " + std::to_string(it) + ": " + e.what();
      break;
    }
    result.iterations = it;
    if (it % config.eval_every == 0 || it == config.max_iters) emit(it, upper, lower);
  }
  if (config.max_iters == 0) {
    emit(0, kNaN, kNaN);
  }

  result.theta = snapshot(th, theta);
  result.phi = snapshot(ph, phi);
  return result;
}

}  // namespace bism::bilevel
