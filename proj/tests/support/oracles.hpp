// SPDX-License-Identifier: Apache-2.0
#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls the library routine it is meant to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "bism/models.hpp"
#include "bism/rng.hpp"
#include "bism/tensor.hpp"

namespace bism::oracle {

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Relative error of two vectors in the 2-norm.
inline double rel_err(const std::vector<double>& a, const std::vector<double>& b,
                      double floor = 1e-8) {
  double diff = 0;
  double na = 0;
  double nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

/// Central finite-difference gradient of f at x.
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double fp = f(x);
    x[i] = keep - h;
    const double fm = f(x);
    x[i] = keep;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

/// Plain-loop GRBM parameters, decoupled from the library's types.
struct Grbm {
  double sigma = 1.0;
  std::size_t dv = 0;
  std::size_t dh = 0;
  std::vector<double> W;  // dv x dh row-major
  std::vector<double> b;
  std::vector<double> c;

  static Grbm from(const models::GrbmParams& p) {
    Grbm g;
    g.sigma = p.sigma();
    g.dv = p.visible_dim();
    g.dh = p.latent_dim();
    g.W.assign(p.W.data().begin(), p.W.data().end());
    g.b.assign(p.b.data().begin(), p.b.data().end());
    g.c.assign(p.c.data().begin(), p.c.data().end());
    return g;
  }

  double energy(const double* v, const std::vector<int>& h) const {
    double e = 0;
    for (std::size_t i = 0; i < dv; ++i) e += (v[i] - b[i]) * (v[i] - b[i]);
    e /= 2 * sigma * sigma;
    for (std::size_t j = 0; j < dh; ++j) e -= c[j] * h[j];
    for (std::size_t i = 0; i < dv; ++i) {
      for (std::size_t j = 0; j < dh; ++j) e -= v[i] * W[i * dh + j] * h[j] / sigma;
    }
    return e;
  }

  std::vector<int> config(std::size_t m) const {
    std::vector<int> h(dh);
    for (std::size_t j = 0; j < dh; ++j) h[j] = static_cast<int>((m >> j) & 1U);
    return h;
  }

  /// -log sum_h exp(-E(v, h)) by explicit enumeration.
  double free_energy(const double* v) const {
    std::vector<double> terms;
    for (std::size_t m = 0; m < (std::size_t{1} << dh); ++m) terms.push_back(-energy(v, config(m)));
    const double top = *std::max_element(terms.begin(), terms.end());
    double s = 0;
    for (double t : terms) s += std::exp(t - top);
    return -(top + std::log(s));
  }

  /// log Z by midpoint quadrature of sum_h exp(-E) over a 2-D box (dv = 2 only).
  double log_partition_quadrature(double lo0, double hi0, double lo1, double hi1,
                                  std::size_t res) const {
    const double dx = (hi0 - lo0) / static_cast<double>(res);
    const double dy = (hi1 - lo1) / static_cast<double>(res);
    // Shift by the value at the best grid point for stability.
    std::vector<double> vals(res * res);
    double top = -1e300;
    for (std::size_t a = 0; a < res; ++a) {
      for (std::size_t bidx = 0; bidx < res; ++bidx) {
        const double v[2] = {lo0 + (static_cast<double>(a) + 0.5) * dx,
                             lo1 + (static_cast<double>(bidx) + 0.5) * dy};
        const double lp = -free_energy(v);
        vals[a * res + bidx] = lp;
        top = std::max(top, lp);
      }
    }
    double s = 0;
    for (double lp : vals) s += std::exp(lp - top);
    return top + std::log(s * dx * dy);
  }

  /// Marginal probabilities of each binary h, from the Gaussian integral of
  /// exp(-E) over v written out term by term.
  std::vector<double> latent_marginal() const {
    std::vector<double> logw;
    for (std::size_t m = 0; m < (std::size_t{1} << dh); ++m) {
      const auto h = config(m);
      // exp(-E) = exp(c.h) * exp(-(||v - mu||^2 - ||mu||^2 + ||b||^2) / (2 sigma^2)), mu = b + sigma W h
      double ch = 0;
      for (std::size_t j = 0; j < dh; ++j) ch += c[j] * h[j];
      double mu2 = 0;
      double b2 = 0;
      for (std::size_t i = 0; i < dv; ++i) {
        double mu = b[i];
        for (std::size_t j = 0; j < dh; ++j) mu += sigma * W[i * dh + j] * h[j];
        mu2 += mu * mu;
        b2 += b[i] * b[i];
      }
      logw.push_back(ch + (mu2 - b2) / (2 * sigma * sigma));
    }
    const double top = *std::max_element(logw.begin(), logw.end());
    double s = 0;
    for (double& l : logw) s += (l = std::exp(l - top));
    for (double& l : logw) l /= s;
    return logw;
  }

  /// log Z from the per-h Gaussian integral, accumulated with a running max.
  double log_partition() const {
    std::vector<double> logw;
    for (std::size_t m = 0; m < (std::size_t{1} << dh); ++m) {
      const auto h = config(m);
      double lw = 0;
      for (std::size_t j = 0; j < dh; ++j) lw += c[j] * h[j];
      for (std::size_t i = 0; i < dv; ++i) {
        double mu = b[i];
        for (std::size_t j = 0; j < dh; ++j) mu += sigma * W[i * dh + j] * h[j];
        lw += (mu * mu - b[i] * b[i]) / (2 * sigma * sigma);
      }
      logw.push_back(lw);
    }
    const double top = *std::max_element(logw.begin(), logw.end());
    double s = 0;
    for (double l : logw) s += std::exp(l - top);
    return top + std::log(s) +
           0.5 * static_cast<double>(dv) * std::log(2 * std::numbers::pi * sigma * sigma);
  }

  /// p(h_j = 1 | v) by summing exp(-E) over every configuration.
  std::vector<double> posterior(const double* v) const {
    std::vector<double> num(dh, 0.0);
    double den = 0;
    const double ref = -free_energy(v);
    for (std::size_t m = 0; m < (std::size_t{1} << dh); ++m) {
      const auto h = config(m);
      const double w = std::exp(-energy(v, h) - ref);
      den += w;
      for (std::size_t j = 0; j < dh; ++j) num[j] += w * h[j];
    }
    for (double& x : num) x /= den;
    return num;
  }

  /// Exact moments of v under the Gaussian mixture: mean and covariance.
  void visible_moments(std::vector<double>& mean, std::vector<double>& cov) const {
    const auto w = latent_marginal();
    mean.assign(dv, 0.0);
    cov.assign(dv * dv, 0.0);
    std::vector<std::vector<double>> mus;
    for (std::size_t m = 0; m < w.size(); ++m) {
      const auto h = config(m);
      std::vector<double> mu(dv);
      for (std::size_t i = 0; i < dv; ++i) {
        mu[i] = b[i];
        for (std::size_t j = 0; j < dh; ++j) mu[i] += sigma * W[i * dh + j] * h[j];
        mean[i] += w[m] * mu[i];
      }
      mus.push_back(mu);
    }
    for (std::size_t m = 0; m < w.size(); ++m) {
      for (std::size_t i = 0; i < dv; ++i) {
        for (std::size_t k = 0; k < dv; ++k) {
          cov[i * dv + k] += w[m] * (mus[m][i] - mean[i]) * (mus[m][k] - mean[k]);
        }
      }
    }
    for (std::size_t i = 0; i < dv; ++i) cov[i * dv + i] += sigma * sigma;
  }

  /// Exact draws: h from latent_marginal, v | h Gaussian.
  std::vector<double> sample(std::size_t n, Rng& rng) const {
    const auto w = latent_marginal();
    std::vector<double> out(n * dv);
    for (std::size_t s = 0; s < n; ++s) {
      double u = rng.uniform();
      std::size_t m = 0;
      while (m + 1 < w.size() && u >= w[m]) u -= w[m++];
      const auto h = config(m);
      for (std::size_t i = 0; i < dv; ++i) {
        double mu = b[i];
        for (std::size_t j = 0; j < dh; ++j) mu += sigma * W[i * dh + j] * h[j];
        out[s * dv + i] = mu + sigma * rng.normal();
      }
    }
    return out;
  }
};

/// A random GRBM with moderately coupled weights.
inline models::GrbmParams random_grbm(std::size_t dv, std::size_t dh, Rng& rng,
                                      double w_scale = 0.8) {
  const double sigma = 0.5 + rng.uniform();
  Tensor W = rng.normal_tensor({dv, dh});
  for (double& x : W.data()) x *= w_scale;
  Tensor b = rng.normal_tensor({dv});
  Tensor c = rng.normal_tensor({dh});
  for (double& x : c.data()) x *= 0.5;
  return models::GrbmParams::make(sigma, std::move(W), std::move(b), std::move(c));
}

}  // namespace bism::oracle
