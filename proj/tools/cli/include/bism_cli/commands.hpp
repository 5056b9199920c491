// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bism/error.hpp"
#include "bism_cli/config.hpp"

namespace bism::cli {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2, kExitNumeric = 3 };

/// A request the command line cannot serve, such as a metric the model cannot compute.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Overrides from the global flags.
struct GlobalOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out_dir;

  std::uint64_t seed_or(std::uint64_t fallback) const { return seed.value_or(fallback); }
};

/// --seed replaces trainer.seed and model.init_seed; --out-dir replaces paths.out_dir.
ExperimentConfig apply_overrides(ExperimentConfig config, const GlobalOptions& global);

/// Writes metrics.csv, checkpoint.bin and config.ini into the output directory.
/// Returns kExitNumeric when training stopped on a numeric failure.
int cmd_train(const ExperimentConfig& config, std::ostream& out, std::ostream& err);

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  bool test_ll = false;
  bool test_fisher = false;
  bool posterior_fisher = false;
  std::size_t fisher_directions = 1;  // sliced estimate when d_v > 8
  std::vector<double> grid_bounds{-4, 4, -4, 4};
  std::vector<std::size_t> grid_res{100, 100};
};
/// Prints `metric,value` lines and writes eval.csv; adds density_grid.txt for a 2-D GRBM.
int cmd_eval(const EvalOptions& options, const std::filesystem::path& out_dir, std::uint64_t seed,
             std::ostream& out);

struct SampleOptions {
  std::filesystem::path checkpoint;
  std::size_t count = 1000;
  std::optional<std::filesystem::path> out;
  std::size_t gibbs_steps = 1000;
  std::optional<std::filesystem::path> data;  // deep model: training points for latent inference
  double step = 0.02;
  std::size_t steps_per_level = 100;
  std::size_t levels = 10;
  double t_lo = 1;
  double t_hi = 100;
};
int cmd_sample(const SampleOptions& options, const std::filesystem::path& out_dir,
               std::uint64_t seed, std::ostream& out);

struct ProbeOptions {
  std::filesystem::path checkpoint;
  std::vector<std::size_t> n_list{0, 1, 2, 5, 10, 20};
  std::size_t k_star = 2000;
  std::optional<double> alpha;  // unroll rate; defaults to the config's
};
/// Writes bias.csv with columns N,bias sorted by N.
int cmd_probe_bias(const ExperimentConfig& config, const ProbeOptions& options, std::ostream& out,
                   std::ostream& err);

struct GenDataOptions {
  std::string kind;
  std::size_t n = 1000;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> checkpoint;  // grbm
  std::size_t dim = 2;                               // mixture
  std::size_t components = 8;
  double spread = 2.0;
  double scale = 0.3;
};
int cmd_gen_data(const GenDataOptions& options, const std::filesystem::path& out_dir,
                 std::uint64_t seed, std::ostream& out);

/// Parses argv and dispatches; never throws.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bism::cli
