// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>

#include "bism/models.hpp"
#include "bism/params.hpp"
#include "bism/posteriors.hpp"

namespace bism::cli {

/// Binary layout, all integers and floats little-endian:
///   "BISMCKPT" | u32 version | str model_kind | str posterior_kind
///   | u64 iteration | f64 temperature | u32 n_theta | entry* | u32 n_phi | entry*
/// with str = u32 length + bytes and entry = str name | u32 rank | u64 dims[rank] | f64 values.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string model_kind = "grbm";     // "grbm" | "deep"
  std::string posterior_kind = "none"; // "bernoulli" | "gaussian" | "none"
  std::uint64_t iteration = 0;
  double temperature = 0.1;            // Bernoulli relaxation temperature
  ParamSet theta;
  ParamSet phi;

  bool operator==(const Checkpoint&) const = default;

  std::unique_ptr<models::EnergyModel> make_model() const;
  /// Null when posterior_kind is "none".
  std::unique_ptr<posteriors::Posterior> make_posterior() const;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in, const std::string& source = "<stream>");
/// Writes to a sibling temporary file and renames it over `path`, so a crash
/// never leaves a truncated checkpoint behind.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace bism::cli
