#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace nodefilter {

// Numeric values are the basis ids used in the token cache header.
enum class BasisKind : std::uint32_t {
  Monomial = 0,
  Bernstein = 1,
  Chebyshev = 2,
  Optimal = 3,
};

std::string_view to_string(BasisKind basis);

// Accepts short ("mono", "bern", "cheb", "opt") and long names.
BasisKind parse_basis(std::string_view name);

// Monomial and Optimal recurse on the normalized adjacency, Bernstein and
// Chebyshev on the normalized Laplacian.
bool uses_adjacency(BasisKind basis);

// Three-term recurrence of one channel's optimal basis:
//   beta[k] g_k = (A - gamma[k-1] I) g_{k-1} - beta[k-1] g_{k-2},
//   g_{-1} = 0, g_0 = I / beta[0], beta[0] = |x|.
// Orders at or beyond valid_orders are identically zero.
struct ChannelRecurrence {
  std::vector<double> gamma;  // K entries
  std::vector<double> beta;   // K + 1 entries
  std::size_t valid_orders = 0;
};

struct OptBasisCoeffs {
  std::vector<ChannelRecurrence> channels;
};

struct BasisOptions {
  bool cheb_shifted = false;  // Chebyshev recurrence on (L - I) instead of L
  const ChannelRecurrence* recurrence = nullptr;  // required for Optimal
};

// Scalar responses t_0(lambda)..t_K(lambda) of the basis, lambda being an
// eigenvalue of the normalized Laplacian.
std::vector<double> basis_responses(BasisKind basis, std::size_t order, double lambda,
                                    const BasisOptions& options = {});

// Exact binomial coefficient; throws ConfigError for n > 60.
std::uint64_t binomial(std::size_t n, std::size_t k);

inline constexpr std::size_t kMaxBernsteinOrder = 60;

}  // namespace nodefilter
