#include "nodefilter/basis.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nodefilter/error.hpp"

namespace nodefilter {

std::string_view to_string(BasisKind basis) {
  switch (basis) {
    case BasisKind::Monomial: return "mono";
    case BasisKind::Bernstein: return "bern";
    case BasisKind::Chebyshev: return "cheb";
    case BasisKind::Optimal: return "opt";
  }
  return "unknown";
}

BasisKind parse_basis(std::string_view name) {
  if (name == "mono" || name == "monomial") return BasisKind::Monomial;
  if (name == "bern" || name == "bernstein") return BasisKind::Bernstein;
  if (name == "cheb" || name == "chebyshev") return BasisKind::Chebyshev;
  if (name == "opt" || name == "optimal") return BasisKind::Optimal;
  throw ConfigError("unknown basis '" + std::string(name) + "'");
}

bool uses_adjacency(BasisKind basis) {
  return basis == BasisKind::Monomial || basis == BasisKind::Optimal;
}

std::uint64_t binomial(std::size_t n, std::size_t k) {
  if (n > kMaxBernsteinOrder) {
    throw ConfigError("binomial: order " + std::to_string(n) + " exceeds " +
                      std::to_string(kMaxBernsteinOrder));
  }
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t c = 1;
  for (std::size_t i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

std::vector<double> basis_responses(BasisKind basis, std::size_t order, double lambda,
                                    const BasisOptions& options) {
  std::vector<double> t(order + 1, 0.0);
  switch (basis) {
    case BasisKind::Monomial: {
      const double mu = 1.0 - lambda;
      t[0] = 1.0;
      for (std::size_t k = 1; k <= order; ++k) t[k] = mu * t[k - 1];
      break;
    }
    case BasisKind::Chebyshev: {
      const double mu = options.cheb_shifted ? lambda - 1.0 : lambda;
      t[0] = 1.0;
      if (order >= 1) t[1] = mu;
      for (std::size_t k = 2; k <= order; ++k) t[k] = 2.0 * mu * t[k - 1] - t[k - 2];
      break;
    }
    case BasisKind::Bernstein: {
      const double scale = std::ldexp(1.0, -static_cast<int>(order));
      for (std::size_t k = 0; k <= order; ++k) {
        t[k] = scale * static_cast<double>(binomial(order, k)) *
               std::pow(2.0 - lambda, static_cast<double>(order - k)) *
               std::pow(lambda, static_cast<double>(k));
      }
      break;
    }
    case BasisKind::Optimal: {
      const ChannelRecurrence* rec = options.recurrence;
      if (rec == nullptr) throw ConfigError("optimal basis responses need the channel recurrence");
      if (rec->beta.size() < order + 1 || rec->gamma.size() < order) {
        throw ShapeError("optimal basis recurrence shorter than requested order");
      }
      const double mu = 1.0 - lambda;
      for (std::size_t k = 0; k < std::min(order + 1, rec->valid_orders); ++k) {
        if (k == 0) {
          t[0] = 1.0 / rec->beta[0];
        } else {
          const double before = k >= 2 ? t[k - 2] : 0.0;
          t[k] = ((mu - rec->gamma[k - 1]) * t[k - 1] - rec->beta[k - 1] * before) / rec->beta[k];
        }
      }
      break;
    }
  }
  return t;
}

}  // namespace nodefilter
