// SPDX-License-Identifier: Apache-2.0
#include "bism/nn.hpp"

#include <cmath>

#include "bism/error.hpp"

namespace bism::nn {

ad::Var linear(const ad::Var& x, const ad::Var& weight, const ad::Var& bias) {
  return ad::add(ad::matmul(x, weight), bias);
}

ad::Var activate(const ad::Var& x, Activation act) {
  switch (act) {
    case Activation::Tanh: return ad::tanh(x);
    case Activation::Elu: return ad::elu(x);
    case Activation::None: break;
  }
  return x;
}

ad::Var mlp(const ad::Var& x, std::span<const ad::Var> params, Activation hidden) {
  if (params.empty() || params.size() % 2 != 0) {
    throw ShapeError("mlp: expected (weight, bias) pairs");
  }
  ad::Var out = x;
  for (std::size_t i = 0; i < params.size(); i += 2) {
    out = linear(out, params[i], params[i + 1]);
    if (i + 2 < params.size()) out = activate(out, hidden);
  }
  return out;
}

void add_mlp_params(ParamSet& params, const std::string& prefix,
                    const std::vector<std::size_t>& widths, Rng& rng) {
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths[i]));
    Tensor w({widths[i], widths[i + 1]});
    for (double& x : w.data()) x = bound * (2.0 * rng.uniform() - 1.0);
    Tensor b({widths[i + 1]});
    for (double& x : b.data()) x = bound * (2.0 * rng.uniform() - 1.0);
    params.add(prefix + "." + std::to_string(i) + ".weight", std::move(w));
    params.add(prefix + "." + std::to_string(i) + ".bias", std::move(b));
  }
}

}  // namespace bism::nn
