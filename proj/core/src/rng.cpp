// SPDX-License-Identifier: Apache-2.0
#include "bism/rng.hpp"

#include <algorithm>
#include <cmath>

namespace bism {

namespace {

constexpr double kOpenLo = 1e-12;
constexpr double kOpenHi = 1.0 - 1e-12;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

double Rng::uniform() { return std::generate_canonical<double, 53>(engine_); }

double Rng::uniform_open() { return std::clamp(uniform(), kOpenLo, kOpenHi); }

double Rng::normal() { return normal_(engine_); }

double Rng::logistic() {
  const double u = uniform_open();
  return std::log(u) - std::log1p(-u);
}

double Rng::rademacher() { return (engine_() >> 63) ? 1.0 : -1.0; }

std::size_t Rng::index(std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

Tensor Rng::normal_tensor(Tensor::Shape shape) {
  Tensor t(std::move(shape));
  for (double& x : t.data()) x = normal();
  return t;
}

Tensor Rng::uniform_tensor(Tensor::Shape shape) {
  Tensor t(std::move(shape));
  for (double& x : t.data()) x = uniform();
  return t;
}

Tensor Rng::logistic_tensor(Tensor::Shape shape) {
  Tensor t(std::move(shape));
  for (double& x : t.data()) x = logistic();
  return t;
}

Tensor Rng::rademacher_tensor(Tensor::Shape shape) {
  Tensor t(std::move(shape));
  for (double& x : t.data()) x = rademacher();
  return t;
}

Rng Rng::split(std::uint64_t stream) const {
  return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x5851f42d4c957f2dULL)));
}

}  // namespace bism
