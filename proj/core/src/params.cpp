// SPDX-License-Identifier: Apache-2.0
#include "bism/params.hpp"

#include <algorithm>
#include <cmath>

#include "bism/error.hpp"

namespace bism {

void ParamSet::add(std::string name, Tensor value) {
  names.push_back(std::move(name));
  values.push_back(std::move(value));
}

std::size_t ParamSet::index_of(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ContractError("no parameter named '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

std::size_t ParamSet::total_size() const noexcept {
  std::size_t n = 0;
  for (const auto& v : values) n += v.numel();
  return n;
}

bool ParamSet::all_finite() const noexcept {
  return std::all_of(values.begin(), values.end(), [](const Tensor& t) { return t.all_finite(); });
}

std::vector<ad::Var> to_vars(const ParamSet& params, bool trainable) {
  std::vector<ad::Var> vars;
  vars.reserve(params.size());
  for (const auto& v : params.values) {
    vars.push_back(trainable ? ad::variable(v) : ad::constant(v));
  }
  return vars;
}

ParamSet from_vars(const ParamSet& like, std::span<const ad::Var> vars) {
  if (vars.size() != like.size()) throw ShapeError("from_vars: parameter count mismatch");
  ParamSet out;
  for (std::size_t i = 0; i < vars.size(); ++i) {
    if (vars[i].shape() != like.values[i].shape()) {
      throw ShapeError("from_vars: shape mismatch for '" + like.names[i] + "'");
    }
    out.add(like.names[i], vars[i].value());
  }
  return out;
}

std::vector<double> flatten(std::span<const Tensor> tensors) {
  std::vector<double> flat;
  for (const auto& t : tensors) flat.insert(flat.end(), t.data().begin(), t.data().end());
  return flat;
}

std::vector<Tensor> unflatten(const ParamSet& like, std::span<const double> flat) {
  if (flat.size() != like.total_size()) throw ShapeError("unflatten: length mismatch");
  std::vector<Tensor> out;
  std::size_t offset = 0;
  for (const auto& t : like.values) {
    out.emplace_back(t.shape(), std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(offset),
                                                    flat.begin() + static_cast<std::ptrdiff_t>(offset + t.numel())));
    offset += t.numel();
  }
  return out;
}

double l2_distance(const ParamSet& a, const ParamSet& b) {
  if (a.size() != b.size()) throw ShapeError("l2_distance: parameter count mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.values[i].shape() != b.values[i].shape()) throw ShapeError("l2_distance: shape mismatch");
    for (std::size_t j = 0; j < a.values[i].numel(); ++j) {
      const double d = a.values[i][j] - b.values[i][j];
      s += d * d;
    }
  }
  return std::sqrt(s);
}

double l2_norm(std::span<const Tensor> tensors) {
  double s = 0.0;
  for (const auto& t : tensors) {
    for (double x : t.data()) s += x * x;
  }
  return std::sqrt(s);
}

}  // namespace bism
