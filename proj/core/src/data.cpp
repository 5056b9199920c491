// SPDX-License-Identifier: Apache-2.0
#include "bism/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "bism/error.hpp"

namespace bism::data {

namespace {

constexpr std::size_t kMaxSyntheticLatent = 10;

std::string format_double(double x) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

[[noreturn]] void parse_fail(const std::string& source, std::size_t line, const std::string& what) {
  throw ParseError(source + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

void Dataset::validate() const {
  if (points.rank() != 2 || points.rows() == 0 || points.cols() == 0) {
    throw ShapeError("dataset must be a non-empty [n x d] matrix, got " + shape_string(points.shape()));
  }
  if (!points.all_finite()) throw DomainError("dataset '" + name + "' has non-finite values");
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > size()) throw ShapeError("dataset slice out of range");
  const std::size_t d = dim();
  std::vector<double> rows(points.storage().begin() + static_cast<std::ptrdiff_t>(begin * d),
                           points.storage().begin() + static_cast<std::ptrdiff_t>(end * d));
  return Dataset{Tensor({end - begin, d}, std::move(rows)), name, generator, seed};
}

Dataset checkerboard(std::size_t n, Rng& rng) {
  Tensor pts({n, 2});
  std::size_t accepted = 0;
  while (accepted < n) {
    const double x1 = 4.0 * rng.uniform();
    const double x2 = 4.0 * rng.uniform();
    if ((static_cast<long>(std::floor(x1)) + static_cast<long>(std::floor(x2))) % 2 != 0) continue;
    pts(accepted, 0) = x1 - 2.0;
    pts(accepted, 1) = x2 - 2.0;
    ++accepted;
  }
  return Dataset{std::move(pts), "checkerboard", "checkerboard", rng.seed()};
}

Dataset grbm_synthetic(const models::GrbmParams& theta, std::size_t n, Rng& rng) {
  theta.validate();
  if (theta.latent_dim() > kMaxSyntheticLatent) {
    throw SizeError("grbm_synthetic enumerates at most " + std::to_string(kMaxSyntheticLatent) +
                    " latents");
  }
  const Tensor log_w = models::grbm_latent_log_weights(theta);
  const double top = *std::max_element(log_w.data().begin(), log_w.data().end());
  std::vector<double> cdf(log_w.numel());
  double total = 0;
  for (std::size_t m = 0; m < cdf.size(); ++m) {
    total += std::exp(log_w[m] - top);
    cdf[m] = total;
  }
  const Tensor configs = models::binary_configurations(theta.latent_dim());
  const Tensor means = models::GrbmConditionals(theta).visible_mean(configs);
  const double sigma = theta.sigma();
  const std::size_t d = theta.visible_dim();

  Tensor pts({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform() * total;
    const std::size_t m = std::min<std::size_t>(
        static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin()),
        cdf.size() - 1);
    for (std::size_t j = 0; j < d; ++j) pts(i, j) = means(m, j) + sigma * rng.normal();
  }
  return Dataset{std::move(pts), "grbm", "grbm_synthetic", rng.seed()};
}

Dataset gaussian_mixture(std::size_t n, std::size_t d, std::size_t components, double spread,
                         double scale, Rng& rng) {
  if (components == 0 || d == 0) throw ShapeError("gaussian_mixture needs d >= 1 and components >= 1");
  if (!(scale > 0) || !(spread >= 0)) throw DomainError("gaussian_mixture needs scale > 0, spread >= 0");
  Tensor centres({components, d});
  for (double& x : centres.data()) x = spread * (2.0 * rng.uniform() - 1.0);
  Tensor pts({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = rng.index(components);
    for (std::size_t j = 0; j < d; ++j) pts(i, j) = centres(k, j) + scale * rng.normal();
  }
  return Dataset{std::move(pts), "mixture", "gaussian_mixture", rng.seed()};
}

// ---------------------------------------------------------------------------
// Minibatching

BatchIterator::BatchIterator(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed)
    : dataset_(&dataset), batch_size_(batch_size), rng_(seed), order_(dataset.size()) {
  dataset.validate();
  if (batch_size == 0 || batch_size > dataset.size()) {
    throw ShapeError("batch size " + std::to_string(batch_size) + " must be in [1, " +
                     std::to_string(dataset.size()) + "]");
  }
  reshuffle();
}

void BatchIterator::reshuffle() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  // Fisher-Yates with the library stream, independent of std::shuffle's unspecified algorithm.
  for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.index(i)]);
  cursor_ = 0;
}

Tensor BatchIterator::next_batch() {
  if (cursor_ + batch_size_ > order_.size()) {
    ++epoch_;
    reshuffle();
  }
  const std::size_t d = dataset_->dim();
  Tensor out({batch_size_, d});
  for (std::size_t r = 0; r < batch_size_; ++r) {
    const std::size_t src = order_[cursor_ + r];
    for (std::size_t j = 0; j < d; ++j) out(r, j) = dataset_->points(src, j);
  }
  cursor_ += batch_size_;
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

void write_dataset(std::ostream& out, const Dataset& dataset) {
  dataset.validate();
  out << "# dataset v1 " << dataset.size() << ' ' << dataset.dim() << '\n';
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (std::size_t j = 0; j < dataset.dim(); ++j) {
      if (j) out << ' ';
      out << format_double(dataset.points(i, j));
    }
    out << '\n';
  }
}

Dataset read_dataset(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) parse_fail(source, 1, "missing '# dataset v1 <n> <d>' header");
  std::istringstream header(line);
  std::string hash, tag, version;
  long long n = -1;
  long long d = -1;
  std::string extra;
  if (!(header >> hash >> tag >> version >> n >> d) || hash != "#" || tag != "dataset" ||
      version != "v1" || n < 1 || d < 1 || (header >> extra)) {
    parse_fail(source, 1, "malformed header '" + line + "', expected '# dataset v1 <n> <d>'");
  }
  const auto rows = static_cast<std::size_t>(n);
  const auto cols = static_cast<std::size_t>(d);
  Tensor pts({rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t lineno = i + 2;
    if (!std::getline(in, line)) parse_fail(source, lineno, "expected " + std::to_string(rows) + " rows");
    const char* p = line.data();
    const char* end = p + line.size();
    for (std::size_t j = 0; j < cols; ++j) {
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
      double value = 0;
      const auto res = std::from_chars(p, end, value);
      if (res.ec != std::errc()) {
        parse_fail(source, lineno, "expected " + std::to_string(cols) + " numeric values");
      }
      pts(i, j) = value;
      p = res.ptr;
    }
    while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
    if (p != end) parse_fail(source, lineno, "trailing characters after " + std::to_string(cols) + " values");
  }
  Dataset ds{std::move(pts), std::filesystem::path(source).stem().string(), "file", 0};
  if (!ds.points.all_finite()) parse_fail(source, 2, "non-finite value");
  return ds;
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) throw ResourceError("cannot open '" + path.string() + "' for writing");
  write_dataset(out, dataset);
  if (!out) throw ResourceError("failed writing '" + path.string() + "'");
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ResourceError("cannot open dataset '" + path.string() + "'");
  return read_dataset(in, path.string());
}

}  // namespace bism::data
