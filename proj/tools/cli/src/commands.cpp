// SPDX-License-Identifier: Apache-2.0
#include "bism_cli/commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <ostream>

#include "bism/bilevel.hpp"
#include "bism/data.hpp"
#include "bism/eval.hpp"
#include "bism/samplers.hpp"
#include "bism_cli/checkpoint.hpp"
#include "bism_cli/lockfile.hpp"
#include "bism_cli/metrics.hpp"

namespace bism::cli {

namespace {

// Posterior Fisher evaluation uses at most this many points per row.
constexpr std::size_t kPosteriorEvalPoints = 500;
// Stream offsets that keep evaluation noise apart from training noise.
constexpr std::uint64_t kEvalStream = 0x6576616cULL;

std::unique_ptr<models::EnergyModel> make_model(const ModelSection& m) {
  if (m.kind == ModelKind::Grbm) return std::make_unique<models::GrbmModel>(m.visible_dim, m.latent_dim);
  models::DeepEblvmShape shape;
  shape.visible_dim = m.visible_dim;
  shape.latent_dim = m.latent_dim;
  shape.feature_hidden = m.feature_hidden;
  shape.coupling_hidden = m.coupling_hidden;
  shape.head_width = m.head_width;
  return std::make_unique<models::DeepEblvmModel>(shape);
}

std::unique_ptr<posteriors::Posterior> make_posterior(const ExperimentConfig& c) {
  switch (c.posterior_kind()) {
    case PosteriorChoice::Bernoulli:
      return std::make_unique<posteriors::BernoulliPosterior>(c.model.visible_dim, c.model.latent_dim,
                                                              c.posterior.temperature);
    case PosteriorChoice::Gaussian:
      return std::make_unique<posteriors::GaussianPosterior>(c.model.visible_dim, c.model.latent_dim,
                                                             c.posterior.hidden);
    case PosteriorChoice::None: return nullptr;
  }
  return nullptr;
}

Tensor head_rows(const Tensor& x, std::size_t n) {
  n = std::min(n, x.rows());
  const std::size_t d = x.cols();
  return Tensor({n, d}, std::vector<double>(x.storage().begin(),
                                            x.storage().begin() + static_cast<std::ptrdiff_t>(n * d)));
}

void write_eval_csv(const std::filesystem::path& path,
                    const std::vector<std::pair<std::string, double>>& metrics) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ResourceError("cannot open '" + path.string() + "' for writing");
  f << "metric,value\n";
  for (const auto& [name, value] : metrics) f << name << ',' << format_number(value) << '\n';
}

std::filesystem::path out_dir_of(const GlobalOptions& g, const std::optional<ExperimentConfig>& c) {
  if (g.out_dir) return *g.out_dir;
  if (c) return c->paths.out_dir;
  return "out";
}

}  // namespace

ExperimentConfig apply_overrides(ExperimentConfig config, const GlobalOptions& global) {
  if (global.seed) {
    config.trainer.seed = *global.seed;
    config.model.init_seed = *global.seed;
  }
  if (global.out_dir) config.paths.out_dir = *global.out_dir;
  return config;
}

// ---------------------------------------------------------------------------
// train

int cmd_train(const ExperimentConfig& config, std::ostream& out, std::ostream& err) {
  config.validate();
  const auto& dir = config.paths.out_dir;
  DirectoryLock lock(dir);

  const data::Dataset train_data = data::load_dataset(config.paths.train_data);
  std::optional<data::Dataset> test_data;
  if (!config.paths.test_data.empty()) test_data = data::load_dataset(config.paths.test_data);

  const auto model = make_model(config.model);
  const auto posterior = make_posterior(config);
  Rng init(config.model.init_seed);
  ParamSet theta = model->init_params(init);
  ParamSet phi = posterior ? posterior->init_params(init) : ParamSet{};
  const bilevel::TrainConfig tc = config.train_config();

  {
    std::ofstream f(dir / "config.ini", std::ios::trunc);
    write_config(f, config);
  }
  MetricsWriter metrics(dir / "metrics.csv", tc.method == bilevel::Method::BiSM);

  const bool is_grbm = config.model.kind == ModelKind::Grbm;
  const Tensor* eval_points = test_data ? &test_data->points : nullptr;
  const Tensor posterior_points =
      head_rows(test_data ? test_data->points : train_data.points, kPosteriorEvalPoints);
  const Rng eval_root = Rng(tc.seed).split(kEvalStream);

  bilevel::TrainHooks hooks;
  hooks.evaluate = [&](bilevel::MetricsRow& row, const ParamSet& t, const ParamSet& p) {
    Rng rng = eval_root.split(row.iter);
    if (is_grbm && eval_points != nullptr) {
      const auto g = models::GrbmParams::from_params(t);
      if (config.eval.test_ll && g.latent_dim() <= models::kMaxEnumerationDim) {
        row.test_ll = eval::test_log_likelihood(*eval_points, g);
      }
      if (config.eval.test_fisher) {
        const bool exact = g.visible_dim() <= 8;
        row.test_fisher = eval::test_fisher_loss(*eval_points, g, exact, exact ? nullptr : &rng, 1);
      }
    }
    if (!is_grbm && config.eval.posterior_fisher && posterior &&
        posterior->kind() == posteriors::PosteriorKind::Gaussian) {
      row.posterior_fisher = eval::posterior_fisher_eval(*model, *posterior, t, p, posterior_points, rng);
    }
  };
  const auto make_ckpt = [&](std::size_t iter, const ParamSet& t, const ParamSet& p) {
    Checkpoint c;
    c.model_kind = to_string(config.model.kind);
    c.posterior_kind = to_string(config.posterior_kind());
    c.iteration = iter;
    c.temperature = config.posterior.temperature;
    c.theta = t;
    c.phi = p;
    return c;
  };
  hooks.on_row = [&](const bilevel::MetricsRow& row, const ParamSet& t, const ParamSet& p) {
    metrics.write(row);
    save_checkpoint(dir / "checkpoint.bin", make_ckpt(row.iter, t, p));
  };

  // A failure before the first row still leaves the initial parameters on disk.
  save_checkpoint(dir / "checkpoint.bin", make_ckpt(0, theta, phi));
  const auto result = bilevel::train(*model, posterior.get(), train_data, tc, std::move(theta),
                                     std::move(phi), hooks);
  if (result.failed) {
    const std::size_t last = result.metrics.empty() ? 0 : result.metrics.back().iter;
    err << "training stopped after " << result.iterations << " iterations: " << result.error
        << "\nlast good checkpoint: " << (dir / "checkpoint.bin").string() << " (iteration " << last
        << ")\n";
    return kExitNumeric;
  }
  out << "trained " << result.iterations << " iterations; wrote " << (dir / "metrics.csv").string()
      << " and " << (dir / "checkpoint.bin").string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const EvalOptions& o, const std::filesystem::path& out_dir, std::uint64_t seed,
             std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const data::Dataset ds = data::load_dataset(o.data);
  const bool is_grbm = ckpt.model_kind == "grbm";
  const bool any = o.test_ll || o.test_fisher || o.posterior_fisher;
  if (!is_grbm && (o.test_ll || o.test_fisher)) {
    throw UsageError("--test-ll and --test-fisher need a GRBM checkpoint; the deep model's likelihood is intractable");
  }
  if (is_grbm && o.posterior_fisher) {
    throw UsageError("--posterior-fisher needs a continuous-latent (deep) checkpoint");
  }
  if (o.grid_bounds.size() != 4 || o.grid_res.size() != 2) throw UsageError("grid needs 4 bounds and 2 resolutions");

  DirectoryLock lock(out_dir);
  Rng rng(seed);
  std::vector<std::pair<std::string, double>> metrics;
  if (is_grbm) {
    const auto g = models::GrbmParams::from_params(ckpt.theta);
    if (ds.dim() != g.visible_dim()) throw ShapeError("dataset dimension differs from the checkpoint's model");
    if (!any || o.test_ll) metrics.emplace_back("test_ll", eval::test_log_likelihood(ds.points, g));
    if (!any || o.test_fisher) {
      const bool exact = g.visible_dim() <= 8;
      metrics.emplace_back("test_fisher",
                           eval::test_fisher_loss(ds.points, g, exact, &rng, o.fisher_directions));
    }
    if (g.visible_dim() == 2) {
      const auto grid = eval::density_grid(g, o.grid_bounds[0], o.grid_bounds[1], o.grid_bounds[2],
                                           o.grid_bounds[3], o.grid_res[0], o.grid_res[1]);
      eval::save_grid(out_dir / "density_grid.txt", grid);
      const auto mass = eval::checkerboard_mass(grid);
      metrics.emplace_back("board_filled_mean", mass.filled_mean());
      metrics.emplace_back("board_empty_mean", mass.empty_mean());
    }
  } else {
    const auto model = ckpt.make_model();
    const auto posterior = ckpt.make_posterior();
    if (!posterior) throw UsageError("checkpoint has no posterior to evaluate");
    metrics.emplace_back("posterior_fisher",
                         eval::posterior_fisher_eval(*model, *posterior, ckpt.theta, ckpt.phi, ds.points, rng));
  }
  write_eval_csv(out_dir / "eval.csv", metrics);
  for (const auto& [name, value] : metrics) out << name << ',' << format_number(value) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// sample

int cmd_sample(const SampleOptions& o, const std::filesystem::path& out_dir, std::uint64_t seed,
               std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  if (o.count == 0) throw UsageError("--count must be at least 1");
  const auto target = o.out.value_or(out_dir / "samples.txt");
  std::optional<DirectoryLock> lock;
  if (!o.out) lock.emplace(out_dir);
  Rng rng(seed);
  Tensor samples;
  if (ckpt.model_kind == "grbm") {
    const auto g = models::GrbmParams::from_params(ckpt.theta);
    const Tensor v0 = rng.normal_tensor({o.count, g.visible_dim()});
    samples = samplers::gibbs_grbm(g, v0, o.gibbs_steps, rng).v;
  } else {
    if (!o.data) throw UsageError("sampling the deep model needs --data (training points for latent inference)");
    const auto model = ckpt.make_model();
    const auto posterior = ckpt.make_posterior();
    if (!posterior) throw UsageError("checkpoint has no posterior for latent inference");
    const data::Dataset train = data::load_dataset(*o.data);
    samplers::LangevinSchedule sched;
    sched.step = o.step;
    sched.steps_per_level = o.steps_per_level;
    sched.levels = o.levels;
    sched.t_lo = o.t_lo;
    sched.t_hi = o.t_hi;
    samples = samplers::sample_eblvm(*model, *posterior, ckpt.theta, ckpt.phi, train.points, o.count,
                                     sched, rng);
  }
  data::save_dataset(target, data::Dataset{samples, "samples", "sample", seed});
  out << "wrote " << o.count << " samples to " << target.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// probe-bias

int cmd_probe_bias(const ExperimentConfig& config, const ProbeOptions& o, std::ostream& out,
                   std::ostream& err) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  if (ckpt.model_kind != "grbm") throw UsageError("probe-bias needs a GRBM checkpoint");
  const auto model = ckpt.make_model();
  const auto posterior = ckpt.make_posterior();
  if (!posterior) throw UsageError("probe-bias needs a checkpoint trained with a posterior");
  if (o.n_list.empty()) throw UsageError("--n-list must name at least one N");

  const auto& dir = config.paths.out_dir;
  DirectoryLock lock(dir);
  const data::Dataset ds = data::load_dataset(config.paths.train_data);
  const bilevel::TrainConfig tc = config.train_config();
  data::BatchIterator batches(ds, std::min(tc.batch_size, ds.size()), tc.seed);
  const Tensor batch = batches.next_batch();
  Rng rng(tc.seed);
  auto noise = objectives::draw_iteration_noise(tc.objective, *posterior, batch.rows(), rng);
  const bilevel::ScoreMatchingProblem problem(*model, *posterior, batch, tc.objective, tc.latent_mode,
                                              tc.lower, std::move(noise));

  std::vector<std::size_t> ns = o.n_list;
  std::sort(ns.begin(), ns.end());
  ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
  const auto res = bilevel::gradient_bias_probe(problem, ckpt.theta.values, ckpt.phi.values, ns,
                                                o.alpha.value_or(tc.unroll_rate()), o.k_star);
  if (!res.converged) err << "warning: " << res.warning << '\n';

  const auto path = dir / "bias.csv";
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ResourceError("cannot open '" + path.string() + "' for writing");
  f << "N,bias\n";
  for (std::size_t i = 0; i < res.N.size(); ++i) f << res.N[i] << ',' << format_number(res.bias[i]) << '\n';
  out << "wrote " << res.N.size() << " rows to " << path.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gen-data

int cmd_gen_data(const GenDataOptions& o, const std::filesystem::path& out_dir, std::uint64_t seed,
                 std::ostream& out) {
  if (o.n == 0) throw UsageError("--n must be at least 1");
  Rng rng(seed);
  data::Dataset ds;
  if (o.kind == "checkerboard") {
    ds = data::checkerboard(o.n, rng);
  } else if (o.kind == "grbm") {
    if (!o.checkpoint) throw UsageError("gen-data grbm needs --checkpoint of a GRBM");
    const Checkpoint ckpt = load_checkpoint(*o.checkpoint);
    if (ckpt.model_kind != "grbm") throw UsageError("gen-data grbm needs a GRBM checkpoint");
    ds = data::grbm_synthetic(models::GrbmParams::from_params(ckpt.theta), o.n, rng);
  } else if (o.kind == "mixture") {
    ds = data::gaussian_mixture(o.n, o.dim, o.components, o.spread, o.scale, rng);
  } else {
    throw UsageError("unknown generator kind '" + o.kind + "' (expected checkerboard, grbm or mixture)");
  }
  const auto target = o.out.value_or(out_dir / (o.kind + ".txt"));
  std::optional<DirectoryLock> lock;
  if (!o.out) lock.emplace(out_dir);
  data::save_dataset(target, ds);
  out << "wrote " << ds.size() << " points to " << target.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Command line

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Train, evaluate and sample energy-based latent variable models", "bism"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  auto* config_opt = app.add_option("--config", config_path, "Experiment config (INI)");
  auto* seed_opt = app.add_option("--seed", seed, "Seed; overrides trainer.seed and model.init_seed");
  auto* out_opt = app.add_option("--out-dir", out_dir, "Output directory; overrides paths.out_dir");

  auto* train = app.add_subcommand("train", "Train a model from a config");

  EvalOptions eo;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  ev->add_option("--checkpoint", eo.checkpoint, "Checkpoint written by train")->required();
  ev->add_option("--data", eo.data, "Held-out dataset")->required();
  ev->add_flag("--test-ll", eo.test_ll, "Exact test log-likelihood (GRBM)");
  ev->add_flag("--test-fisher", eo.test_fisher, "Fisher-divergence test loss (GRBM)");
  ev->add_flag("--posterior-fisher", eo.posterior_fisher, "Posterior Fisher divergence (deep)");
  ev->add_option("--fisher-directions", eo.fisher_directions, "Slices for the sliced estimate when d_v > 8");
  ev->add_option("--grid-bounds", eo.grid_bounds, "xmin xmax ymin ymax")->expected(4);
  ev->add_option("--grid-res", eo.grid_res, "nx ny")->expected(2);

  SampleOptions so;
  std::string sample_out;
  std::string sample_data;
  auto* sa = app.add_subcommand("sample", "Draw samples from a checkpoint");
  sa->add_option("--checkpoint", so.checkpoint, "Checkpoint written by train")->required();
  sa->add_option("--count", so.count, "Number of samples");
  auto* sample_out_opt = sa->add_option("--out", sample_out, "Output dataset (default: <out-dir>/samples.txt)");
  sa->add_option("--gibbs-steps", so.gibbs_steps, "GRBM block-Gibbs sweeps");
  auto* sample_data_opt = sa->add_option("--data", sample_data, "Training points (deep model)");
  sa->add_option("--step", so.step, "Langevin step size");
  sa->add_option("--steps-per-level", so.steps_per_level, "Langevin steps per temperature");
  sa->add_option("--levels", so.levels, "Number of temperatures");
  sa->add_option("--t-lo", so.t_lo, "Final temperature");
  sa->add_option("--t-hi", so.t_hi, "Initial temperature");

  ProbeOptions po;
  double probe_alpha = 0;
  auto* pb = app.add_subcommand("probe-bias", "Surrogate-gradient bias against N");
  pb->add_option("--checkpoint", po.checkpoint, "GRBM checkpoint with a posterior")->required();
  pb->add_option("--n-list", po.n_list, "Unroll depths, comma separated")->delimiter(',');
  pb->add_option("--k-star", po.k_star, "Refinement steps for the reference optimum");
  auto* alpha_opt = pb->add_option("--alpha", probe_alpha, "Unroll rate");

  GenDataOptions go;
  std::string gen_out;
  std::string gen_ckpt;
  auto* gd = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gd->add_option("--kind", go.kind, "checkerboard | grbm | mixture")->required();
  gd->add_option("--n", go.n, "Number of points");
  auto* gen_out_opt = gd->add_option("--out", gen_out, "Output dataset");
  auto* gen_ckpt_opt = gd->add_option("--checkpoint", gen_ckpt, "GRBM checkpoint (kind grbm)");
  gd->add_option("--dim", go.dim, "Dimension (kind mixture)");
  gd->add_option("--components", go.components, "Mixture components");
  gd->add_option("--spread", go.spread, "Component means lie in [-spread, spread]^dim");
  gd->add_option("--scale", go.scale, "Component standard deviation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }
  if (*config_opt) g.config = config_path;
  if (*seed_opt) g.seed = seed;
  if (*out_opt) g.out_dir = out_dir;

  try {
    std::optional<ExperimentConfig> config;
    if (g.config) config = apply_overrides(load_config(*g.config), g);
    const auto dir = out_dir_of(g, config);
    const std::uint64_t cmd_seed = g.seed_or(config ? config->trainer.seed : 0);

    if (*train) {
      if (!config) throw UsageError("train needs --config");
      return cmd_train(*config, out, err);
    }
    if (*ev) return cmd_eval(eo, dir, cmd_seed, out);
    if (*sa) {
      if (*sample_out_opt) so.out = sample_out;
      if (*sample_data_opt) so.data = sample_data;
      return cmd_sample(so, dir, cmd_seed, out);
    }
    if (*pb) {
      if (!config) throw UsageError("probe-bias needs --config");
      if (*alpha_opt) po.alpha = probe_alpha;
      return cmd_probe_bias(*config, po, out, err);
    }
    if (*gd) {
      if (*gen_out_opt) go.out = gen_out;
      if (*gen_ckpt_opt) go.checkpoint = gen_ckpt;
      return cmd_gen_data(go, dir, cmd_seed, out);
    }
    throw UsageError("no command given");
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace bism::cli
