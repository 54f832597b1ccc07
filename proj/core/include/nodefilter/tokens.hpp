#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nodefilter/basis.hpp"
#include "nodefilter/error.hpp"
#include "nodefilter/graph.hpp"
#include "nodefilter/matrix.hpp"
#include "nodefilter/sparse.hpp"

namespace nodefilter {

// Polynomial tokens H_0..H_K, each an N x d matrix, stored as
// [order][node][channel]. Row i of H_k is node i's order-k token.
class TokenTensor {
 public:
  TokenTensor() = default;
  TokenTensor(BasisKind basis, std::size_t n_nodes, std::size_t order, std::size_t dim);

  BasisKind basis() const noexcept { return basis_; }
  std::size_t n_nodes() const noexcept { return n_nodes_; }
  std::size_t order() const noexcept { return order_; }
  std::size_t dim() const noexcept { return dim_; }

  bool cheb_shifted() const noexcept { return cheb_shifted_; }
  void set_cheb_shifted(bool shifted) noexcept { cheb_shifted_ = shifted; }

  double& operator()(std::size_t k, std::size_t node, std::size_t channel) {
    return data_[(k * n_nodes_ + node) * dim_ + channel];
  }
  double operator()(std::size_t k, std::size_t node, std::size_t channel) const {
    return data_[(k * n_nodes_ + node) * dim_ + channel];
  }

  DenseMatrix order_matrix(std::size_t k) const;
  void set_order_matrix(std::size_t k, const DenseMatrix& h);

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  // Present only for the optimal basis.
  const std::optional<OptBasisCoeffs>& opt_coeffs() const noexcept { return opt_coeffs_; }
  void set_opt_coeffs(OptBasisCoeffs coeffs) { opt_coeffs_ = std::move(coeffs); }

  bool operator==(const TokenTensor& other) const;

 private:
  BasisKind basis_ = BasisKind::Monomial;
  bool cheb_shifted_ = false;
  std::size_t n_nodes_ = 0;
  std::size_t order_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> data_;
  std::optional<OptBasisCoeffs> opt_coeffs_;
};

// H_k = A H_{k-1}, H_0 = X.
TokenTensor monomial_tokens(const SparseMatrix& a_hat, const DenseMatrix& x, std::size_t order);

// H_k = 2 P H_{k-1} - H_{k-2}, H_1 = P X, H_0 = X, with P = L or, when
// shifted, P = L - I.
TokenTensor chebyshev_tokens(const SparseMatrix& l_hat, const DenseMatrix& x, std::size_t order,
                             bool shifted = false);

// H_k = 2^{-K} C(K, k) (2I - L)^{K-k} L^k X, built with K + K(K+1)/2 sparse
// products. Throws ConfigError for K > 60.
TokenTensor bernstein_tokens(const SparseMatrix& l_hat, const DenseMatrix& x, std::size_t order);

// Per-channel orthonormal three-term recurrence. Zero channels and
// recurrence breakdowns are recorded in `warnings`.
TokenTensor optimal_tokens(const SparseMatrix& a_hat, const DenseMatrix& x, std::size_t order,
                           std::vector<std::string>* warnings = nullptr);

// Builds the matching operator from the graph and dispatches on basis.
TokenTensor compute_tokens(const Graph& g, const DenseMatrix& x, BasisKind basis, std::size_t order,
                           bool cheb_shifted = false, std::vector<std::string>* warnings = nullptr);

// recurrence breakdown threshold for the optimal basis
inline constexpr double kOptimalBreakdown = 1e-12;

// Binary token cache, little-endian:
//   "PTK1" | u32 version=1 | u32 basis | u32 flags (bit0 = shifted Chebyshev)
//   | u64 N | u32 K | u32 d | (K+1)*N*d f64 in [k][node][channel] order
//   | optimal only: per channel K gamma f64 then K+1 beta f64.
class CacheFormatError : public FormatError {
 public:
  using FormatError::FormatError;
};

void write_token_cache(const TokenTensor& tokens, std::ostream& out);
void write_token_cache(const TokenTensor& tokens, const std::filesystem::path& path);
TokenTensor read_token_cache(std::istream& in);
TokenTensor read_token_cache(const std::filesystem::path& path);

}  // namespace nodefilter
