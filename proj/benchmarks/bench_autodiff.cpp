// SPDX-License-Identifier: Apache-2.0
// Tape throughput: forward plus reverse sweeps, and Hessian-vector products.

#include <benchmark/benchmark.h>

#include "bism/autodiff.hpp"
#include "bism/models.hpp"
#include "bism/params.hpp"
#include "bism/rng.hpp"

namespace {

using namespace bism;

void BM_MlpGradient(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor x = rng.normal_tensor({100, n});
  const Tensor w1 = rng.normal_tensor({n, n});
  const Tensor w2 = rng.normal_tensor({n, 1});
  for (auto _ : state) {
    const ad::Var a = ad::variable(w1);
    const ad::Var b = ad::variable(w2);
    const ad::Var y = ad::matmul(ad::tanh(ad::matmul(ad::constant(x), a)), b);
    const auto g = ad::grad(ad::sum(ad::square(y)), std::vector<ad::Var>{a, b});
    benchmark::DoNotOptimize(g.front().value().data().data());
  }
  state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(BM_MlpGradient)->Arg(16)->Arg(64)->Arg(256);

void BM_Hvp(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const Tensor x0 = rng.normal_tensor({1, n});
  const Tensor w = rng.normal_tensor({n, n});
  const Tensor u = rng.normal_tensor({1, n});
  for (auto _ : state) {
    const ad::Var x = ad::variable(x0);
    const ad::Var f = ad::sum(ad::softplus(ad::matmul(x, ad::constant(w))));
    benchmark::DoNotOptimize(ad::hvp(f, x, u).data().data());
  }
}
BENCHMARK(BM_Hvp)->Arg(16)->Arg(64)->Arg(256);

void BM_GrbmFreeEnergy(benchmark::State& state) {
  const auto dh = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const models::GrbmModel model(2, dh);
  const ParamSet theta = model.init_params(rng);
  const Tensor v = rng.normal_tensor({100, 2});
  for (auto _ : state) {
    const auto vars = to_vars(theta, true);
    const ad::Var e = ad::sum(model.free_energy(ad::constant(v), vars));
    benchmark::DoNotOptimize(ad::grad(e, vars).front().value().data().data());
  }
  state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(BM_GrbmFreeEnergy)->Arg(4)->Arg(16)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
