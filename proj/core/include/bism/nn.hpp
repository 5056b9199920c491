// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "bism/autodiff.hpp"
#include "bism/params.hpp"
#include "bism/rng.hpp"

// Fully connected building blocks shared by the deep energy and the
// Gaussian posterior network.
namespace bism::nn {

enum class Activation { None, Tanh, Elu };

/// x [n x in] * weight [in x out] + bias [out].
ad::Var linear(const ad::Var& x, const ad::Var& weight, const ad::Var& bias);

ad::Var activate(const ad::Var& x, Activation act);

/// Applies consecutive (weight, bias) pairs from `params`; `hidden` after every
/// layer but the last.
ad::Var mlp(const ad::Var& x, std::span<const ad::Var> params, Activation hidden);

/// Appends "<prefix>.<i>.weight" / ".bias" entries for a chain of widths,
/// initialised uniformly in +-1/sqrt(fan_in).
void add_mlp_params(ParamSet& params, const std::string& prefix,
                    const std::vector<std::size_t>& widths, Rng& rng);

}  // namespace bism::nn
