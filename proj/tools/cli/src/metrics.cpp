// SPDX-License-Identifier: Apache-2.0
#include "bism_cli/metrics.hpp"

#include <charconv>

#include "bism/error.hpp"

namespace bism::cli {

std::string format_number(double x) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::string metrics_line(const bilevel::MetricsRow& row, bool has_lower) {
  const auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  std::string line = std::to_string(row.iter);
  line += ',' + format_number(row.wall_seconds);
  line += ',' + format_number(row.upper_loss);
  line += ',' + (has_lower ? format_number(row.lower_loss) : std::string());
  line += ',' + opt(row.test_ll);
  line += ',' + opt(row.test_fisher);
  line += ',' + opt(row.posterior_fisher);
  return line;
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path, bool has_lower)
    : out_(path, std::ios::trunc), path_(path), has_lower_(has_lower) {
  if (!out_) throw ResourceError("cannot open '" + path.string() + "' for writing");
  out_ << kMetricsHeader << '\n' << std::flush;
}

void MetricsWriter::write(const bilevel::MetricsRow& row) {
  out_ << metrics_line(row, has_lower_) << '\n' << std::flush;
  if (!out_) throw ResourceError("failed writing '" + path_.string() + "'");
}

}  // namespace bism::cli
