#include <fstream>
#include <limits>

#include "binary_io.hpp"
#include "nodefilter/tokens.hpp"

namespace nodefilter {

namespace {

constexpr char kMagic[4] = {'P', 'T', 'K', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kFlagChebShifted = 1u;

}  // namespace

void write_token_cache(const TokenTensor& tokens, std::ostream& out) {
  if (tokens.order() > std::numeric_limits<std::uint32_t>::max() ||
      tokens.dim() > std::numeric_limits<std::uint32_t>::max()) {
    throw CacheFormatError("token tensor dimensions exceed the cache format");
  }
  detail::LittleEndianWriter w(out);
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(tokens.basis()));
  w.u32(tokens.cheb_shifted() ? kFlagChebShifted : 0u);
  w.u64(tokens.n_nodes());
  w.u32(static_cast<std::uint32_t>(tokens.order()));
  w.u32(static_cast<std::uint32_t>(tokens.dim()));
  for (double v : tokens.data()) w.f64(v);
  if (tokens.basis() == BasisKind::Optimal) {
    if (!tokens.opt_coeffs() || tokens.opt_coeffs()->channels.size() != tokens.dim()) {
      throw CacheFormatError("optimal-basis tokens are missing their recurrence coefficients");
    }
    for (const auto& ch : tokens.opt_coeffs()->channels) {
      for (std::size_t k = 0; k < tokens.order(); ++k) w.f64(ch.gamma[k]);
      for (std::size_t k = 0; k <= tokens.order(); ++k) w.f64(ch.beta[k]);
    }
  }
  if (!out) throw CacheFormatError("write failed");
}

void write_token_cache(const TokenTensor& tokens, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CacheFormatError("cannot open '" + path.string() + "' for writing");
  write_token_cache(tokens, out);
}

TokenTensor read_token_cache(std::istream& in) {
  detail::LittleEndianReader<CacheFormatError> r(in);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw CacheFormatError("bad magic, not a PTK1 token cache");
  const auto version = r.u32("version");
  if (version != kVersion) throw CacheFormatError("unsupported cache version " + std::to_string(version));
  const auto basis_id = r.u32("basis");
  if (basis_id > static_cast<std::uint32_t>(BasisKind::Optimal)) {
    throw CacheFormatError("unknown basis id " + std::to_string(basis_id));
  }
  const auto flags = r.u32("flags");
  if ((flags & ~kFlagChebShifted) != 0) throw CacheFormatError("unknown flag bits " + std::to_string(flags));
  const std::uint64_t n = r.u64("node count");
  const std::uint64_t order = r.u32("order");
  const std::uint64_t dim = r.u32("dimension");

  // Reject sizes whose element count would overflow or cannot be addressed.
  constexpr std::uint64_t kMaxElems = std::numeric_limits<std::uint64_t>::max() / 8;
  if (n != 0 && dim != 0 && (order + 1) > kMaxElems / n / dim) {
    throw CacheFormatError("dimension overflow in cache header");
  }
  const std::uint64_t count = (order + 1) * n * dim;
  if (count > std::numeric_limits<std::size_t>::max() / sizeof(double)) {
    throw CacheFormatError("dimension overflow in cache header");
  }

  const auto basis = static_cast<BasisKind>(basis_id);
  TokenTensor t(basis, static_cast<std::size_t>(n), static_cast<std::size_t>(order), static_cast<std::size_t>(dim));
  t.set_cheb_shifted((flags & kFlagChebShifted) != 0);
  for (double& v : t.data()) v = r.f64("token payload");

  if (basis == BasisKind::Optimal) {
    OptBasisCoeffs coeffs;
    for (std::uint64_t c = 0; c < dim; ++c) {
      ChannelRecurrence ch;
      ch.gamma.resize(order);
      ch.beta.resize(order + 1);
      for (auto& g : ch.gamma) g = r.f64("optimal-basis gamma");
      for (auto& b : ch.beta) b = r.f64("optimal-basis beta");
      ch.valid_orders = 0;
      while (ch.valid_orders <= order && ch.beta[ch.valid_orders] != 0.0) ++ch.valid_orders;
      coeffs.channels.push_back(std::move(ch));
    }
    t.set_opt_coeffs(std::move(coeffs));
  }
  if (!r.at_end()) throw CacheFormatError("trailing bytes after token payload");
  return t;
}

TokenTensor read_token_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CacheFormatError("cannot open token cache '" + path.string() + "'");
  return read_token_cache(in);
}

}  // namespace nodefilter
