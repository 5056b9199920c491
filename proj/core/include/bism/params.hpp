// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "bism/autodiff.hpp"
#include "bism/tensor.hpp"

namespace bism {

/// Ordered, named collection of parameter tensors (a flat view of θ or φ).
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Tensor> values;

  std::size_t size() const noexcept { return values.size(); }
  bool empty() const noexcept { return values.empty(); }
  void add(std::string name, Tensor value);
  /// Index of `name`; throws ContractError when absent.
  std::size_t index_of(const std::string& name) const;
  const Tensor& at(const std::string& name) const { return values[index_of(name)]; }
  Tensor& at(const std::string& name) { return values[index_of(name)]; }
  /// Total number of scalars.
  std::size_t total_size() const noexcept;
  bool all_finite() const noexcept;

  friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

/// Graph leaves for every tensor; `trainable` selects variable vs constant.
std::vector<ad::Var> to_vars(const ParamSet& params, bool trainable);
ParamSet from_vars(const ParamSet& like, std::span<const ad::Var> vars);

/// All values concatenated in order.
std::vector<double> flatten(std::span<const Tensor> tensors);
std::vector<Tensor> unflatten(const ParamSet& like, std::span<const double> flat);
double l2_distance(const ParamSet& a, const ParamSet& b);
double l2_norm(std::span<const Tensor> tensors);

}  // namespace bism
