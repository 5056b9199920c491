// SPDX-License-Identifier: Apache-2.0
#include "bism_cli/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "bism/error.hpp"

namespace bism::cli {

namespace {

constexpr std::array<char, 8> kMagic{'B', 'I', 'S', 'M', 'C', 'K', 'P', 'T'};
// Guards against allocating from a corrupt length field.
constexpr std::uint64_t kMaxEntryValues = std::uint64_t{1} << 32;
constexpr std::uint32_t kMaxString = 1U << 16;

template <class U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes;
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

void put_f64(std::ostream& out, double x) { put_le(out, std::bit_cast<std::uint64_t>(x)); }

void put_str(std::ostream& out, const std::string& s) {
  put_le(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  void bytes(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw ParseError(source_ + ": truncated checkpoint while reading " + what);
    }
  }

  template <class U>
  U le(const char* what) {
    std::array<unsigned char, sizeof(U)> b;
    bytes(reinterpret_cast<char*>(b.data()), b.size(), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
    return v;
  }

  double f64(const char* what) { return std::bit_cast<double>(le<std::uint64_t>(what)); }

  std::string str(const char* what) {
    const auto n = le<std::uint32_t>(what);
    if (n > kMaxString) throw ParseError(source_ + ": implausible string length in " + what);
    std::string s(n, '\0');
    bytes(s.data(), n, what);
    return s;
  }

  const std::string& source() const { return source_; }

 private:
  std::istream& in_;
  std::string source_;
};

void put_params(std::ostream& out, const ParamSet& p) {
  put_le(out, static_cast<std::uint32_t>(p.size()));
  for (std::size_t k = 0; k < p.size(); ++k) {
    put_str(out, p.names[k]);
    const auto& shape = p.values[k].shape();
    put_le(out, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) put_le(out, static_cast<std::uint64_t>(d));
    for (double x : p.values[k].data()) put_f64(out, x);
  }
}

ParamSet read_params(Reader& r) {
  ParamSet p;
  const auto count = r.le<std::uint32_t>("entry count");
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = r.str("entry name");
    const auto rank = r.le<std::uint32_t>("entry rank");
    if (rank > 8) throw ParseError(r.source() + ": entry '" + name + "' has implausible rank");
    Tensor::Shape shape;
    std::uint64_t total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<std::size_t>(r.le<std::uint64_t>("entry shape")));
      total *= shape.back();
      if (total > kMaxEntryValues) throw ParseError(r.source() + ": entry '" + name + "' is too large");
    }
    std::vector<double> values(static_cast<std::size_t>(total));
    for (double& x : values) x = r.f64("entry values");
    p.add(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return p;
}

}  // namespace

std::unique_ptr<models::EnergyModel> Checkpoint::make_model() const {
  if (model_kind == "grbm") {
    const auto g = models::GrbmParams::from_params(theta);
    return std::make_unique<models::GrbmModel>(g.visible_dim(), g.latent_dim());
  }
  if (model_kind == "deep") return std::make_unique<models::DeepEblvmModel>(models::DeepEblvmModel::infer_shape(theta));
  throw ParseError("checkpoint has unknown model kind '" + model_kind + "'");
}

std::unique_ptr<posteriors::Posterior> Checkpoint::make_posterior() const {
  if (posterior_kind == "none") return nullptr;
  if (posterior_kind == "bernoulli") {
    const Tensor& A = phi.at("A");
    return std::make_unique<posteriors::BernoulliPosterior>(A.shape()[1], A.shape()[0], temperature);
  }
  if (posterior_kind == "gaussian") {
    return std::make_unique<posteriors::GaussianPosterior>(posteriors::GaussianPosterior::infer(phi));
  }
  throw ParseError("checkpoint has unknown posterior kind '" + posterior_kind + "'");
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kMagic.data(), kMagic.size());
  put_le(out, kCheckpointVersion);
  put_str(out, ckpt.model_kind);
  put_str(out, ckpt.posterior_kind);
  put_le(out, ckpt.iteration);
  put_f64(out, ckpt.temperature);
  put_params(out, ckpt.theta);
  put_params(out, ckpt.phi);
}

Checkpoint read_checkpoint(std::istream& in, const std::string& source) {
  Reader r(in, source);
  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size(), "magic");
  if (magic != kMagic) throw ParseError(source + ": not a checkpoint (bad magic)");
  const auto version = r.le<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw ParseError(source + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  c.model_kind = r.str("model kind");
  c.posterior_kind = r.str("posterior kind");
  c.iteration = r.le<std::uint64_t>("iteration");
  c.temperature = r.f64("temperature");
  c.theta = read_params(r);
  c.phi = read_params(r);
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ResourceError("cannot open '" + tmp.string() + "' for writing");
    write_checkpoint(out, ckpt);
    out.flush();
    if (!out) throw ResourceError("failed writing '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ResourceError("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in, path.string());
}

}  // namespace bism::cli
