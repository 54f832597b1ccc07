#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "nodefilter/basis.hpp"
#include "nodefilter/error.hpp"
#include "nodefilter/filters.hpp"
#include "nodefilter/graph.hpp"
#include "nodefilter/matrix.hpp"

namespace nodefilter {

// Ascending eigenvalues; column k of eigenvectors pairs with eigenvalue k.
// Each eigenvector's largest-magnitude component is non-negative.
struct EigenDecomposition {
  std::vector<double> eigenvalues;
  DenseMatrix eigenvectors;
};

struct JacobiOptions {
  std::size_t max_sweeps = 100;
  double tolerance = 1e-11;  // off-diagonal Frobenius norm relative to |A|_F
};

class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, double residual)
      : NumericalError(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

// Cyclic Jacobi eigensolver for symmetric matrices. Throws ShapeError for
// non-square or non-symmetric input (tolerance 1e-12) and ConvergenceError
// when max_sweeps is exhausted.
EigenDecomposition jacobi_eigh(const DenseMatrix& a, const JacobiOptions& options = {});

// U h(Lambda) U^T x.
DenseMatrix spectral_filter(const EigenDecomposition& eig, const FilterSpec& h, const DenseMatrix& x);

// spectral_filter on the eigendecomposition of the graph's normalized Laplacian.
DenseMatrix exact_filter(const Graph& g, const FilterSpec& h, const DenseMatrix& x);

struct DensePolyOptions {
  bool cheb_shifted = false;
  const OptBasisCoeffs* opt_coeffs = nullptr;  // one recurrence per column of x
};

// Dense basis matrices g_0(P)..g_K(P) built by explicit products, no
// sparsity. For Optimal, `recurrence` selects the channel's coefficients.
std::vector<DenseMatrix> dense_basis_matrices(const DenseMatrix& p, BasisKind basis, std::size_t order,
                                              bool cheb_shifted = false,
                                              const ChannelRecurrence* recurrence = nullptr);

// sum_k coeffs[k] g_k(P) x, with K = coeffs.size() - 1.
DenseMatrix dense_poly_apply(const DenseMatrix& p, BasisKind basis, std::span<const double> coeffs,
                             const DenseMatrix& x, const DensePolyOptions& options = {});

struct KMeansResult {
  std::vector<std::size_t> assignments;
  DenseMatrix centroids;
  std::vector<double> objective_history;  // after every assignment step
  std::size_t iterations = 0;
};

// Lloyd iterations from k distinct seeded points until the assignment is
// stable or max_iterations is reached. Empty clusters are re-seeded from
// the point farthest from its centroid.
KMeansResult kmeans(const DenseMatrix& points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iterations = 300);

}  // namespace nodefilter
