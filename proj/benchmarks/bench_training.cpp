// SPDX-License-Identifier: Apache-2.0
// Cost of one outer step: unrolled surrogate gradients and whole training iterations.

#include <array>

#include <benchmark/benchmark.h>

#include "bism/bilevel.hpp"
#include "bism/data.hpp"
#include "bism/models.hpp"
#include "bism/objectives.hpp"
#include "bism/posteriors.hpp"
#include "bism/rng.hpp"

namespace {

using namespace bism;

// Range 0 is the unroll depth N.
void BM_SurrogateGrad(benchmark::State& state) {
  Rng rng(1);
  const models::GrbmModel model(2, 4);
  const posteriors::BernoulliPosterior posterior(2, 4, 0.1);
  const ParamSet theta = model.init_params(rng);
  const ParamSet phi = posterior.init_params(rng);
  const auto board = data::checkerboard(100, rng);
  const auto obj = objectives::ScoreObjective::dsm(0.05);
  const bilevel::ScoreMatchingProblem problem(model, posterior, board.points, obj, objectives::LatentMode::Sample,
                                              bilevel::LowerKind::KL,
                                              objectives::draw_iteration_noise(obj, posterior, 100, rng));
  const bilevel::UnrollOptions opts{static_cast<std::size_t>(state.range(0)), 1e-3};
  for (auto _ : state) {
    benchmark::DoNotOptimize(bilevel::surrogate_grad(problem, theta.values, phi.values, opts).upper_loss);
  }
}
BENCHMARK(BM_SurrogateGrad)->Arg(0)->Arg(1)->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);

// Range 0 selects the method: 0 marginal DSM, 1 BiDSM, 2 CD-1.
void BM_TrainIterations(benchmark::State& state) {
  Rng rng(2);
  const models::GrbmModel model(2, 4);
  const posteriors::BernoulliPosterior posterior(2, 4, 0.1);
  const ParamSet theta = model.init_params(rng);
  const ParamSet phi = posterior.init_params(rng);
  const auto board = data::checkerboard(5000, rng);
  bilevel::TrainConfig cfg;
  cfg.method = std::array{bilevel::Method::Marginal, bilevel::Method::BiSM, bilevel::Method::CD}[state.range(0)];
  cfg.max_iters = 50;
  cfg.eval_every = cfg.max_iters;
  const bool bi = cfg.method == bilevel::Method::BiSM;
  for (auto _ : state) {
    const auto res = bilevel::train(model, bi ? &posterior : nullptr, board, cfg, theta, bi ? phi : ParamSet{});
    benchmark::DoNotOptimize(res.iterations);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cfg.max_iters));
}
BENCHMARK(BM_TrainIterations)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
