// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "bism/models.hpp"
#include "bism/posteriors.hpp"
#include "bism/rng.hpp"

namespace bism::eval {

/// log Z of a GRBM by enumerating h with the Gaussian integral over v in
/// closed form. SizeError for d_h > 20.
double grbm_log_partition(const models::GrbmParams& theta);

/// Mean of log p(v) over the rows of `data`.
double test_log_likelihood(const Tensor& data, const models::GrbmParams& theta);

/// Mean of 1/2 ||grad log p̃(v)||^2 + tr(grad^2 log p̃(v)). The exact trace
/// needs d_v <= 8 (SizeError otherwise); with exact = false the trace is
/// estimated with `directions` Rademacher slices drawn from `rng`.
double test_fisher_loss(const Tensor& data, const models::GrbmParams& theta, bool exact,
                        Rng* rng = nullptr, std::size_t directions = 1);

inline constexpr std::size_t kPosteriorFisherDraws = 16;

/// Monte Carlo estimate of 1/2 E_q ||grad_h log q - grad_h log p̃||^2
/// averaged over `data`. UnsupportedError for a discrete posterior.
double posterior_fisher_eval(const models::EnergyModel& model,
                             const posteriors::Posterior& posterior, const ParamSet& theta,
                             const ParamSet& phi, const Tensor& data, Rng& rng,
                             std::size_t draws = kPosteriorFisherDraws);

/// Log-density of a 2-D GRBM on a regular grid of cell centres, row-major
/// with x varying fastest.
struct DensityGrid {
  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
  std::size_t nx = 0, ny = 0;
  std::vector<double> log_density;  // unnormalised, nx * ny
  std::vector<double> probability;  // cell masses, empty unless normalised

  double cell_area() const;
  double x_centre(std::size_t ix) const;
  double y_centre(std::size_t iy) const;
  void validate() const;
};

/// UnsupportedError unless d_v = 2. Cell masses use log Z and the cell area.
DensityGrid density_grid(const models::GrbmParams& theta, double xmin, double xmax, double ymin,
                         double ymax, std::size_t nx, std::size_t ny);

/// `# density_grid v1 <xmin> <xmax> <ymin> <ymax> <nx> <ny>` then nx * ny values.
void write_grid(std::ostream& out, const DensityGrid& grid);
DensityGrid read_grid(std::istream& in, const std::string& source = "<stream>");
void save_grid(const std::filesystem::path& path, const DensityGrid& grid);

/// Probability mass in each unit cell of the 4x4 board over [-2, 2)^2, split
/// by checkerboard parity.
struct BoardMass {
  std::array<double, 8> filled{};
  std::array<double, 8> empty{};

  double filled_mean() const;
  double empty_mean() const;
};

BoardMass checkerboard_mass(const DensityGrid& grid);

}  // namespace bism::eval
