// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bism/bilevel.hpp"

namespace bism::cli {

enum class ModelKind { Grbm, Deep };
enum class PosteriorChoice { Bernoulli, Gaussian, None };

const char* to_string(ModelKind kind) noexcept;
const char* to_string(PosteriorChoice kind) noexcept;

struct ModelSection {
  ModelKind kind = ModelKind::Grbm;
  std::size_t visible_dim = 2;
  std::size_t latent_dim = 4;
  std::uint64_t init_seed = 0;
  // deep only
  std::vector<std::size_t> feature_hidden{128, 128, 128};
  std::vector<std::size_t> coupling_hidden{64};
  std::size_t head_width = 64;

  bool operator==(const ModelSection&) const = default;
};

struct PosteriorSection {
  /// Unset means the natural pairing: Bernoulli for the GRBM, Gaussian for deep.
  std::optional<PosteriorChoice> kind;
  double temperature = 0.1;
  std::vector<std::size_t> hidden{64};

  PosteriorChoice resolved(ModelKind model, bilevel::Method method) const;
  bool operator==(const PosteriorSection&) const = default;
};

struct ObjectiveSection {
  objectives::ScoreKind kind = objectives::ScoreKind::DSM;
  std::size_t directions = 1;
  double sigma = 0.05;
  double noise_lo = 0.05;
  double noise_hi = 1.0;
  std::size_t noise_levels = objectives::NoisePrior::kDefaultLevels;
  double sigma0 = 0.1;

  objectives::ScoreObjective build() const;
  bool operator==(const ObjectiveSection&) const = default;
};

struct TrainerSection {
  bilevel::Method method = bilevel::Method::BiSM;
  /// Unset means KL for a Bernoulli posterior and Fisher for a Gaussian one.
  std::optional<bilevel::LowerKind> lower;
  objectives::LatentMode latent_mode = objectives::LatentMode::Sample;
  std::size_t K = 5;
  std::size_t N = 5;
  double alpha = 1e-3;
  std::optional<double> unroll_alpha;
  double beta = 1e-3;
  bilevel::InnerOptimizer inner_optimizer = bilevel::InnerOptimizer::Adam;
  bool lr_decay = false;
  std::size_t batch_size = 100;
  std::size_t max_iters = 1000;
  std::size_t cd_k = 1;
  std::size_t node_cap = bilevel::kDefaultNodeCap;
  std::uint64_t seed = 0;

  bool operator==(const TrainerSection&) const = default;
};

struct EvalSection {
  std::size_t eval_every = 100;
  bool test_ll = true;
  bool test_fisher = true;
  bool posterior_fisher = true;
  double grid_xmin = -4, grid_xmax = 4, grid_ymin = -4, grid_ymax = 4;
  std::size_t grid_nx = 100, grid_ny = 100;

  bool operator==(const EvalSection&) const = default;
};

struct PathsSection {
  std::filesystem::path train_data;
  std::filesystem::path test_data;  // optional
  std::filesystem::path out_dir = "out";

  bool operator==(const PathsSection&) const = default;
};

struct ExperimentConfig {
  ModelSection model;
  PosteriorSection posterior;
  ObjectiveSection objective;
  TrainerSection trainer;
  EvalSection eval;
  PathsSection paths;

  /// Cross-field checks; ConfigError naming the offending key.
  void validate() const;
  PosteriorChoice posterior_kind() const { return posterior.resolved(model.kind, trainer.method); }
  bilevel::TrainConfig train_config() const;
  bool operator==(const ExperimentConfig&) const = default;
};

/// Flat `[section]` / `key = value` text. Unknown sections or keys and
/// malformed values raise ConfigError naming the key; syntax errors raise
/// ParseError with the line. Relative paths resolve against `base_dir`.
ExperimentConfig parse_config(std::istream& in, const std::string& source,
                              const std::filesystem::path& base_dir);
/// As parse_config, and checks that the referenced data files exist.
ExperimentConfig load_config(const std::filesystem::path& path);
/// Writes every field, so parse_config(serialize(c)) == c.
void write_config(std::ostream& out, const ExperimentConfig& config);

}  // namespace bism::cli
