// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "bism/bilevel.hpp"

namespace bism::cli {

inline constexpr const char* kMetricsHeader =
    "iter,wall_seconds,upper_loss,lower_loss,test_ll,test_fisher,posterior_fisher";

/// 17 significant digits, shortest form that round-trips.
std::string format_number(double x);

/// One CSV line without the newline. Missing optionals and, when
/// `has_lower` is false, lower_loss are written as empty fields.
std::string metrics_line(const bilevel::MetricsRow& row, bool has_lower);

/// Streams rows to `metrics.csv`, flushing after each so a crash keeps every
/// completed row.
class MetricsWriter {
 public:
  MetricsWriter(const std::filesystem::path& path, bool has_lower);
  void write(const bilevel::MetricsRow& row);

 private:
  std::ofstream out_;
  std::filesystem::path path_;
  bool has_lower_;
};

}  // namespace bism::cli
