// SPDX-License-Identifier: Apache-2.0
#include "bism/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "bism/error.hpp"
#include "bism/objectives.hpp"

namespace bism::eval {

using ad::Var;

namespace {

constexpr std::size_t kMaxExactFisherDim = 8;
constexpr std::size_t kChunk = 1024;

double logsumexp(std::span<const double> xs) {
  const double top = *std::max_element(xs.begin(), xs.end());
  double acc = 0;
  for (double x : xs) acc += std::exp(x - top);
  return top + std::log(acc);
}

std::string format_double(double x) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

Tensor rows_of(const Tensor& data, std::size_t begin, std::size_t end) {
  const std::size_t d = data.cols();
  std::vector<double> out(data.storage().begin() + static_cast<std::ptrdiff_t>(begin * d),
                          data.storage().begin() + static_cast<std::ptrdiff_t>(end * d));
  return Tensor({end - begin, d}, std::move(out));
}

void check_data(const Tensor& data, std::size_t d) {
  if (data.rank() != 2 || data.rows() == 0 || data.cols() != d) {
    throw ShapeError("evaluation data must be [n x " + std::to_string(d) + "], got " +
                     shape_string(data.shape()));
  }
}

}  // namespace

double grbm_log_partition(const models::GrbmParams& theta) {
  const Tensor log_w = models::grbm_latent_log_weights(theta);
  const double sigma = theta.sigma();
  return logsumexp(log_w.data()) +
         0.5 * static_cast<double>(theta.visible_dim()) *
             std::log(2.0 * std::numbers::pi * sigma * sigma);
}

double test_log_likelihood(const Tensor& data, const models::GrbmParams& theta) {
  check_data(data, theta.visible_dim());
  const double log_z = grbm_log_partition(theta);
  const models::GrbmModel model(theta.visible_dim(), theta.latent_dim());
  ad::NoGradGuard guard;
  const auto vars = to_vars(theta.to_params(), false);
  double total = 0;
  for (std::size_t b = 0; b < data.rows(); b += kChunk) {
    const std::size_t e = std::min(data.rows(), b + kChunk);
    total += ad::sum(model.free_energy(ad::constant(rows_of(data, b, e)), vars)).item();
  }
  return -total / static_cast<double>(data.rows()) - log_z;
}

double test_fisher_loss(const Tensor& data, const models::GrbmParams& theta, bool exact, Rng* rng,
                        std::size_t directions) {
  check_data(data, theta.visible_dim());
  if (exact && theta.visible_dim() > kMaxExactFisherDim) {
    throw SizeError("exact Fisher trace limited to d_v <= " + std::to_string(kMaxExactFisherDim));
  }
  const bool use_exact = exact;
  if (!use_exact && rng == nullptr) throw ContractError("sliced Fisher estimate needs an rng");
  const models::GrbmModel model(theta.visible_dim(), theta.latent_dim());
  const auto vars = to_vars(theta.to_params(), false);
  const auto score = objectives::marginal_score_fn(model, vars);
  const auto objective = use_exact ? objectives::ScoreObjective::sm()
                                   : objectives::ScoreObjective::ssm(directions);
  double total = 0;
  for (std::size_t b = 0; b < data.rows(); b += kChunk) {
    const std::size_t e = std::min(data.rows(), b + kChunk);
    const Tensor chunk = rows_of(data, b, e);
    const auto noise = use_exact ? objectives::ObjectiveNoise{}
                                 : objectives::draw_noise(objective, chunk.rows(), chunk.cols(), *rng);
    const Var x = ad::variable(chunk);
    total += ad::sum(objectives::objective_rows(objective, score, x, chunk, noise)).item();
  }
  return total / static_cast<double>(data.rows());
}

double posterior_fisher_eval(const models::EnergyModel& model,
                             const posteriors::Posterior& posterior, const ParamSet& theta,
                             const ParamSet& phi, const Tensor& data, Rng& rng, std::size_t draws) {
  if (posterior.kind() != posteriors::PosteriorKind::Gaussian) {
    throw UnsupportedError("posterior Fisher divergence needs a continuous-latent posterior");
  }
  if (draws == 0) throw DomainError("posterior_fisher_eval needs at least one draw");
  check_data(data, model.visible_dim());
  const auto theta_vars = to_vars(theta, false);
  const auto phi_vars = to_vars(phi, false);
  const std::size_t chunk_points = std::max<std::size_t>(1, kChunk / draws);
  double total = 0;
  for (std::size_t b = 0; b < data.rows(); b += chunk_points) {
    const std::size_t e = std::min(data.rows(), b + chunk_points);
    const Tensor rep = objectives::repeat_rows(rows_of(data, b, e), draws);
    const Var loss = objectives::lower_fisher_loss(model, posterior, theta_vars, phi_vars, rep, rng);
    total += loss.item() * static_cast<double>(rep.rows());
  }
  return total / static_cast<double>(data.rows() * draws);
}

// ---------------------------------------------------------------------------
// Density grids

double DensityGrid::cell_area() const {
  return (xmax - xmin) / static_cast<double>(nx) * (ymax - ymin) / static_cast<double>(ny);
}

double DensityGrid::x_centre(std::size_t ix) const {
  return xmin + (static_cast<double>(ix) + 0.5) * (xmax - xmin) / static_cast<double>(nx);
}

double DensityGrid::y_centre(std::size_t iy) const {
  return ymin + (static_cast<double>(iy) + 0.5) * (ymax - ymin) / static_cast<double>(ny);
}

void DensityGrid::validate() const {
  if (nx == 0 || ny == 0 || !(xmax > xmin) || !(ymax > ymin)) {
    throw DomainError("density grid needs positive resolution and non-empty bounds");
  }
  if (log_density.size() != nx * ny) throw ShapeError("density grid value count differs from nx * ny");
  if (!probability.empty() && probability.size() != nx * ny) {
    throw ShapeError("density grid probability count differs from nx * ny");
  }
}

DensityGrid density_grid(const models::GrbmParams& theta, double xmin, double xmax, double ymin,
                         double ymax, std::size_t nx, std::size_t ny) {
  if (theta.visible_dim() != 2) throw UnsupportedError("density grids need a 2-D visible space");
  DensityGrid grid{xmin, xmax, ymin, ymax, nx, ny, {}, {}};
  grid.log_density.assign(nx * ny, 0.0);
  grid.validate();

  Tensor pts({nx * ny, 2});
  for (std::size_t iy = 0; iy < ny; ++iy) {
    for (std::size_t ix = 0; ix < nx; ++ix) {
      pts(iy * nx + ix, 0) = grid.x_centre(ix);
      pts(iy * nx + ix, 1) = grid.y_centre(iy);
    }
  }
  const models::GrbmModel model(2, theta.latent_dim());
  {
    ad::NoGradGuard guard;
    const auto vars = to_vars(theta.to_params(), false);
    for (std::size_t b = 0; b < pts.rows(); b += kChunk) {
      const std::size_t e = std::min(pts.rows(), b + kChunk);
      const Tensor f = model.free_energy(ad::constant(rows_of(pts, b, e)), vars).value();
      for (std::size_t i = b; i < e; ++i) grid.log_density[i] = -f[i - b];
    }
  }
  const double log_z = grbm_log_partition(theta);
  const double area = grid.cell_area();
  grid.probability.resize(nx * ny);
  for (std::size_t i = 0; i < nx * ny; ++i) grid.probability[i] = std::exp(grid.log_density[i] - log_z) * area;
  return grid;
}

void write_grid(std::ostream& out, const DensityGrid& grid) {
  grid.validate();
  out << "# density_grid v1 " << format_double(grid.xmin) << ' ' << format_double(grid.xmax) << ' '
      << format_double(grid.ymin) << ' ' << format_double(grid.ymax) << ' ' << grid.nx << ' '
      << grid.ny << '\n';
  for (std::size_t iy = 0; iy < grid.ny; ++iy) {
    for (std::size_t ix = 0; ix < grid.nx; ++ix) {
      if (ix) out << ' ';
      out << format_double(grid.log_density[iy * grid.nx + ix]);
    }
    out << '\n';
  }
}

DensityGrid read_grid(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source + ":1: missing density_grid header");
  std::istringstream header(line);
  std::string hash, tag, version;
  DensityGrid grid;
  long long nx = 0;
  long long ny = 0;
  if (!(header >> hash >> tag >> version >> grid.xmin >> grid.xmax >> grid.ymin >> grid.ymax >> nx >>
        ny) ||
      hash != "#" || tag != "density_grid" || version != "v1" || nx < 1 || ny < 1) {
    throw ParseError(source + ":1: malformed density_grid header '" + line + "'");
  }
  grid.nx = static_cast<std::size_t>(nx);
  grid.ny = static_cast<std::size_t>(ny);
  grid.log_density.reserve(grid.nx * grid.ny);
  std::string token;
  while (grid.log_density.size() < grid.nx * grid.ny && (in >> token)) {
    double value = 0;
    const auto res = std::from_chars(token.data(), token.data() + token.size(), value);
    if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
      throw ParseError(source + ": bad grid value '" + token + "'");
    }
    grid.log_density.push_back(value);
  }
  if (grid.log_density.size() != grid.nx * grid.ny) {
    throw ParseError(source + ": expected " + std::to_string(grid.nx * grid.ny) + " grid values");
  }
  grid.validate();
  return grid;
}

void save_grid(const std::filesystem::path& path, const DensityGrid& grid) {
  std::ofstream out(path);
  if (!out) throw ResourceError("cannot open '" + path.string() + "' for writing");
  write_grid(out, grid);
}

// ---------------------------------------------------------------------------
// Checkerboard cell masses

double BoardMass::filled_mean() const {
  double s = 0;
  for (double m : filled) s += m;
  return s / 8.0;
}

double BoardMass::empty_mean() const {
  double s = 0;
  for (double m : empty) s += m;
  return s / 8.0;
}

BoardMass checkerboard_mass(const DensityGrid& grid) {
  grid.validate();
  if (grid.probability.empty()) throw ContractError("checkerboard_mass needs a normalised grid");
  std::array<double, 16> cells{};
  for (std::size_t iy = 0; iy < grid.ny; ++iy) {
    const double y = grid.y_centre(iy);
    if (y < -2.0 || y >= 2.0) continue;
    for (std::size_t ix = 0; ix < grid.nx; ++ix) {
      const double x = grid.x_centre(ix);
      if (x < -2.0 || x >= 2.0) continue;
      const auto cx = static_cast<std::size_t>(std::floor(x + 2.0));
      const auto cy = static_cast<std::size_t>(std::floor(y + 2.0));
      cells[cy * 4 + cx] += grid.probability[iy * grid.nx + ix];
    }
  }
  BoardMass out;
  std::size_t f = 0;
  std::size_t e = 0;
  for (std::size_t cy = 0; cy < 4; ++cy) {
    for (std::size_t cx = 0; cx < 4; ++cx) {
      if ((cx + cy) % 2 == 0) {
        out.filled[f++] = cells[cy * 4 + cx];
      } else {
        out.empty[e++] = cells[cy * 4 + cx];
      }
    }
  }
  return out;
}

}  // namespace bism::eval
