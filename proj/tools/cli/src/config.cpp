// SPDX-License-Identifier: Apache-2.0
#include "bism_cli/config.hpp"

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "bism/error.hpp"

namespace bism::cli {

namespace pt = boost::property_tree;

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string format_double(double x) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::string join(const std::vector<std::size_t>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(xs[i]);
  }
  return out;
}

// One INI section. Every key must be consumed by a getter; finish() reports
// the first leftover as unknown.
class Section {
 public:
  Section(std::string name, const pt::ptree* tree) : name_(std::move(name)), tree_(tree) {}

  const std::string* raw(const std::string& key) {
    if (tree_ == nullptr) return nullptr;
    const auto it = tree_->find(key);
    if (it == tree_->not_found()) return nullptr;
    used_.insert(key);
    return &it->second.data();
  }

  template <class T, class Parse>
  void get(const std::string& key, T& out, Parse parse) {
    if (const std::string* text = raw(key)) {
      try {
        out = parse(*text);
      } catch (const ConfigError& e) {
        throw ConfigError(name_ + "." + key + ": " + e.what());
      }
    }
  }

  void number(const std::string& key, double& out) { get(key, out, parse_double); }
  void number(const std::string& key, std::size_t& out) { get(key, out, parse_size); }
  void number(const std::string& key, std::optional<double>& out) {
    get(key, out, [](const std::string& s) { return std::optional<double>(parse_double(s)); });
  }
  void flag(const std::string& key, bool& out) { get(key, out, parse_bool); }
  void list(const std::string& key, std::vector<std::size_t>& out) { get(key, out, parse_list); }
  void path(const std::string& key, std::filesystem::path& out, const std::filesystem::path& base) {
    get(key, out, [&](const std::string& s) {
      std::filesystem::path p(s);
      if (!s.empty() && p.is_relative()) p = base / p;
      return s.empty() ? std::filesystem::path() : p.lexically_normal();
    });
  }

  void finish() const {
    if (tree_ == nullptr) return;
    for (const auto& [key, value] : *tree_) {
      if (!used_.count(key)) throw ConfigError("unknown key '" + key + "' in section [" + name_ + "]");
    }
  }

  static double parse_double(const std::string& s) {
    double v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw ConfigError("'" + s + "' is not a number");
    }
    return v;
  }

  static std::uint64_t parse_u64(const std::string& s) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw ConfigError("'" + s + "' is not a non-negative integer");
    }
    return v;
  }

  static std::size_t parse_size(const std::string& s) { return static_cast<std::size_t>(parse_u64(s)); }

  static bool parse_bool(const std::string& s) {
    const std::string t = lower(s);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError("'" + s + "' is not a boolean");
  }

  static std::vector<std::size_t> parse_list(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item.erase(0, item.find_first_not_of(" \t"));
      item.erase(item.find_last_not_of(" \t") + 1);
      out.push_back(parse_size(item));
    }
    if (out.empty()) throw ConfigError("expected a comma-separated list of sizes");
    return out;
  }

 private:
  std::string name_;
  const pt::ptree* tree_;
  std::set<std::string> used_;
};

ModelKind parse_model_kind(const std::string& s) {
  const std::string t = lower(s);
  if (t == "grbm") return ModelKind::Grbm;
  if (t == "deep") return ModelKind::Deep;
  throw ConfigError("unknown model kind '" + s + "'");
}

PosteriorChoice parse_posterior_kind(const std::string& s) {
  const std::string t = lower(s);
  if (t == "bernoulli") return PosteriorChoice::Bernoulli;
  if (t == "gaussian") return PosteriorChoice::Gaussian;
  if (t == "none") return PosteriorChoice::None;
  throw ConfigError("unknown posterior kind '" + s + "'");
}

objectives::LatentMode parse_latent_mode(const std::string& s) {
  const std::string t = lower(s);
  if (t == "sample") return objectives::LatentMode::Sample;
  if (t == "enumerate") return objectives::LatentMode::Enumerate;
  throw ConfigError("unknown latent mode '" + s + "'");
}

bilevel::InnerOptimizer parse_inner(const std::string& s) {
  const std::string t = lower(s);
  if (t == "adam") return bilevel::InnerOptimizer::Adam;
  if (t == "gd") return bilevel::InnerOptimizer::GD;
  throw ConfigError("unknown inner optimizer '" + s + "'");
}

const std::set<std::string> kSections{"model", "posterior", "objective", "trainer", "eval", "paths"};

}  // namespace

const char* to_string(ModelKind kind) noexcept { return kind == ModelKind::Grbm ? "grbm" : "deep"; }

const char* to_string(PosteriorChoice kind) noexcept {
  switch (kind) {
    case PosteriorChoice::Bernoulli: return "bernoulli";
    case PosteriorChoice::Gaussian: return "gaussian";
    case PosteriorChoice::None: return "none";
  }
  return "none";
}

PosteriorChoice PosteriorSection::resolved(ModelKind model, bilevel::Method method) const {
  if (kind) return *kind;
  if (method != bilevel::Method::BiSM) return PosteriorChoice::None;
  return model == ModelKind::Grbm ? PosteriorChoice::Bernoulli : PosteriorChoice::Gaussian;
}

objectives::ScoreObjective ObjectiveSection::build() const {
  switch (kind) {
    case objectives::ScoreKind::SM: return objectives::ScoreObjective::sm();
    case objectives::ScoreKind::SSM: return objectives::ScoreObjective::ssm(directions);
    case objectives::ScoreKind::DSM: return objectives::ScoreObjective::dsm(sigma);
    case objectives::ScoreKind::MDSM:
      return objectives::ScoreObjective::mdsm(
          objectives::NoisePrior::geometric(noise_lo, noise_hi, noise_levels), sigma0);
  }
  throw ConfigError("objective.kind is not set");
}

bilevel::TrainConfig ExperimentConfig::train_config() const {
  bilevel::TrainConfig c;
  c.method = trainer.method;
  c.objective = objective.build();
  c.lower = trainer.lower.value_or(posterior_kind() == PosteriorChoice::Gaussian
                                       ? bilevel::LowerKind::Fisher
                                       : bilevel::LowerKind::KL);
  c.latent_mode = trainer.latent_mode;
  c.K = trainer.K;
  c.N = trainer.N;
  c.alpha = trainer.alpha;
  c.unroll_alpha = trainer.unroll_alpha;
  c.beta = trainer.beta;
  c.inner_optimizer = trainer.inner_optimizer;
  c.lr_decay = trainer.lr_decay;
  c.batch_size = trainer.batch_size;
  c.max_iters = trainer.max_iters;
  c.eval_every = eval.eval_every;
  c.cd_k = trainer.cd_k;
  c.node_cap = trainer.node_cap;
  c.seed = trainer.seed;
  return c;
}

void ExperimentConfig::validate() const {
  if (model.visible_dim == 0) throw ConfigError("model.visible_dim must be at least 1");
  if (model.latent_dim == 0) throw ConfigError("model.latent_dim must be at least 1");
  if (model.kind == ModelKind::Deep &&
      (model.feature_hidden.empty() || model.coupling_hidden.empty() || model.head_width == 0)) {
    throw ConfigError("model.feature_hidden, model.coupling_hidden and model.head_width must be non-empty");
  }
  const PosteriorChoice q = posterior_kind();
  if (trainer.method == bilevel::Method::BiSM) {
    if (q == PosteriorChoice::None) throw ConfigError("posterior.kind: bi-level training needs a posterior");
    if (model.kind == ModelKind::Grbm && q != PosteriorChoice::Bernoulli) {
      throw ConfigError("posterior.kind: the GRBM has binary latents and needs a bernoulli posterior");
    }
    if (model.kind == ModelKind::Deep && q != PosteriorChoice::Gaussian) {
      throw ConfigError("posterior.kind: the deep model has continuous latents and needs a gaussian posterior");
    }
  }
  if (!(posterior.temperature > 0)) throw ConfigError("posterior.temperature must be positive");
  if (q == PosteriorChoice::Gaussian && posterior.hidden.empty()) {
    throw ConfigError("posterior.hidden must list at least one layer");
  }
  if (trainer.lower == bilevel::LowerKind::Fisher && q != PosteriorChoice::Gaussian) {
    throw ConfigError("trainer.lower: the Fisher lower divergence needs a gaussian posterior");
  }
  if (trainer.latent_mode == objectives::LatentMode::Enumerate && q != PosteriorChoice::Bernoulli) {
    throw ConfigError("trainer.latent_mode: enumerate needs a bernoulli posterior");
  }
  if (model.kind == ModelKind::Deep && trainer.method != bilevel::Method::BiSM) {
    throw ConfigError("trainer.method: the deep model only trains with bism");
  }
  if (paths.train_data.empty()) throw ConfigError("paths.train_data is required");
  if (paths.out_dir.empty()) throw ConfigError("paths.out_dir must not be empty");
  if (!(eval.grid_xmax > eval.grid_xmin) || !(eval.grid_ymax > eval.grid_ymin) || eval.grid_nx == 0 ||
      eval.grid_ny == 0) {
    throw ConfigError("eval.grid_*: bounds must be increasing and resolutions positive");
  }
  try {
    train_config().validate();
  } catch (const DomainError& e) {
    throw ConfigError(std::string("objective: ") + e.what());
  }
}

ExperimentConfig parse_config(std::istream& in, const std::string& source,
                              const std::filesystem::path& base_dir) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(source + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& [name, body] : tree) {
    if (body.empty()) throw ConfigError("key '" + name + "' is outside any section");
    if (!kSections.count(name)) throw ConfigError("unknown section [" + name + "]");
  }
  const auto section = [&](const char* name) {
    const auto it = tree.find(name);
    return Section(name, it == tree.not_found() ? nullptr : &it->second);
  };

  ExperimentConfig c;
  {
    Section s = section("model");
    s.get("kind", c.model.kind, parse_model_kind);
    s.number("visible_dim", c.model.visible_dim);
    s.number("latent_dim", c.model.latent_dim);
    s.get("init_seed", c.model.init_seed, Section::parse_u64);
    s.list("feature_hidden", c.model.feature_hidden);
    s.list("coupling_hidden", c.model.coupling_hidden);
    s.number("head_width", c.model.head_width);
    s.finish();
  }
  {
    Section s = section("posterior");
    s.get("kind", c.posterior.kind,
          [](const std::string& t) { return std::optional<PosteriorChoice>(parse_posterior_kind(t)); });
    s.number("temperature", c.posterior.temperature);
    s.list("hidden", c.posterior.hidden);
    s.finish();
  }
  {
    Section s = section("objective");
    s.get("kind", c.objective.kind, objectives::parse_score_kind);
    s.number("directions", c.objective.directions);
    s.number("sigma", c.objective.sigma);
    s.number("noise_lo", c.objective.noise_lo);
    s.number("noise_hi", c.objective.noise_hi);
    s.number("noise_levels", c.objective.noise_levels);
    s.number("sigma0", c.objective.sigma0);
    s.finish();
  }
  {
    Section s = section("trainer");
    s.get("method", c.trainer.method, bilevel::parse_method);
    s.get("lower", c.trainer.lower,
          [](const std::string& t) { return std::optional<bilevel::LowerKind>(bilevel::parse_lower_kind(t)); });
    s.get("latent_mode", c.trainer.latent_mode, parse_latent_mode);
    s.number("K", c.trainer.K);
    s.number("N", c.trainer.N);
    s.number("alpha", c.trainer.alpha);
    s.number("unroll_alpha", c.trainer.unroll_alpha);
    s.number("beta", c.trainer.beta);
    s.get("inner_optimizer", c.trainer.inner_optimizer, parse_inner);
    s.flag("lr_decay", c.trainer.lr_decay);
    s.number("batch_size", c.trainer.batch_size);
    s.number("max_iters", c.trainer.max_iters);
    s.number("cd_k", c.trainer.cd_k);
    s.number("node_cap", c.trainer.node_cap);
    s.get("seed", c.trainer.seed, Section::parse_u64);
    s.finish();
  }
  {
    Section s = section("eval");
    s.number("eval_every", c.eval.eval_every);
    s.flag("test_ll", c.eval.test_ll);
    s.flag("test_fisher", c.eval.test_fisher);
    s.flag("posterior_fisher", c.eval.posterior_fisher);
    s.number("grid_xmin", c.eval.grid_xmin);
    s.number("grid_xmax", c.eval.grid_xmax);
    s.number("grid_ymin", c.eval.grid_ymin);
    s.number("grid_ymax", c.eval.grid_ymax);
    s.number("grid_nx", c.eval.grid_nx);
    s.number("grid_ny", c.eval.grid_ny);
    s.finish();
  }
  {
    Section s = section("paths");
    s.path("train_data", c.paths.train_data, base_dir);
    s.path("test_data", c.paths.test_data, base_dir);
    s.path("out_dir", c.paths.out_dir, base_dir);
    // The default output directory is relative to the config file as well.
    if (c.paths.out_dir.is_relative()) c.paths.out_dir = (base_dir / c.paths.out_dir).lexically_normal();
    s.finish();
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ResourceError("cannot open config '" + path.string() + "'");
  const auto base = std::filesystem::absolute(path).parent_path();
  ExperimentConfig c = parse_config(in, path.string(), base);
  for (const auto* p : {&c.paths.train_data, &c.paths.test_data}) {
    if (!p->empty() && !std::filesystem::exists(*p)) {
      throw ConfigError("paths: data file '" + p->string() + "' does not exist");
    }
  }
  return c;
}

void write_config(std::ostream& out, const ExperimentConfig& c) {
  out << "[model]\n"
      << "kind = " << to_string(c.model.kind) << '\n'
      << "visible_dim = " << c.model.visible_dim << '\n'
      << "latent_dim = " << c.model.latent_dim << '\n'
      << "init_seed = " << c.model.init_seed << '\n'
      << "feature_hidden = " << join(c.model.feature_hidden) << '\n'
      << "coupling_hidden = " << join(c.model.coupling_hidden) << '\n'
      << "head_width = " << c.model.head_width << "\n\n";
  out << "[posterior]\n";
  if (c.posterior.kind) out << "kind = " << to_string(*c.posterior.kind) << '\n';
  out << "temperature = " << format_double(c.posterior.temperature) << '\n'
      << "hidden = " << join(c.posterior.hidden) << "\n\n";
  out << "[objective]\n"
      << "kind = " << objectives::to_string(c.objective.kind) << '\n'
      << "directions = " << c.objective.directions << '\n'
      << "sigma = " << format_double(c.objective.sigma) << '\n'
      << "noise_lo = " << format_double(c.objective.noise_lo) << '\n'
      << "noise_hi = " << format_double(c.objective.noise_hi) << '\n'
      << "noise_levels = " << c.objective.noise_levels << '\n'
      << "sigma0 = " << format_double(c.objective.sigma0) << "\n\n";
  out << "[trainer]\n"
      << "method = " << bilevel::to_string(c.trainer.method) << '\n';
  if (c.trainer.lower) out << "lower = " << bilevel::to_string(*c.trainer.lower) << '\n';
  out << "latent_mode = "
      << (c.trainer.latent_mode == objectives::LatentMode::Sample ? "sample" : "enumerate") << '\n'
      << "K = " << c.trainer.K << '\n'
      << "N = " << c.trainer.N << '\n'
      << "alpha = " << format_double(c.trainer.alpha) << '\n';
  if (c.trainer.unroll_alpha) out << "unroll_alpha = " << format_double(*c.trainer.unroll_alpha) << '\n';
  out << "beta = " << format_double(c.trainer.beta) << '\n'
      << "inner_optimizer = " << (c.trainer.inner_optimizer == bilevel::InnerOptimizer::Adam ? "adam" : "gd")
      << '\n'
      << "lr_decay = " << (c.trainer.lr_decay ? "true" : "false") << '\n'
      << "batch_size = " << c.trainer.batch_size << '\n'
      << "max_iters = " << c.trainer.max_iters << '\n'
      << "cd_k = " << c.trainer.cd_k << '\n'
      << "node_cap = " << c.trainer.node_cap << '\n'
      << "seed = " << c.trainer.seed << "\n\n";
  out << "[eval]\n"
      << "eval_every = " << c.eval.eval_every << '\n'
      << "test_ll = " << (c.eval.test_ll ? "true" : "false") << '\n'
      << "test_fisher = " << (c.eval.test_fisher ? "true" : "false") << '\n'
      << "posterior_fisher = " << (c.eval.posterior_fisher ? "true" : "false") << '\n'
      << "grid_xmin = " << format_double(c.eval.grid_xmin) << '\n'
      << "grid_xmax = " << format_double(c.eval.grid_xmax) << '\n'
      << "grid_ymin = " << format_double(c.eval.grid_ymin) << '\n'
      << "grid_ymax = " << format_double(c.eval.grid_ymax) << '\n'
      << "grid_nx = " << c.eval.grid_nx << '\n'
      << "grid_ny = " << c.eval.grid_ny << "\n\n";
  out << "[paths]\n"
      << "train_data = " << c.paths.train_data.string() << '\n'
      << "test_data = " << c.paths.test_data.string() << '\n'
      << "out_dir = " << c.paths.out_dir.string() << '\n';
}

}  // namespace bism::cli
