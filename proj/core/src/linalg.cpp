#include "nodefilter/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace nodefilter {

namespace {

double off_diagonal_norm(const DenseMatrix& a) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) sum += a(i, j) * a(i, j);
  return std::sqrt(sum);
}

// Applies the rotation that zeroes a(p, q). Works on rows p and q, which are
// contiguous, and mirrors the result into columns p and q. vt holds the
// eigenvectors as rows.
void rotate(DenseMatrix& a, DenseMatrix& vt, std::size_t p, std::size_t q) {
  const double apq = a(p, q);
  const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
  const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
  const double c = 1.0 / std::sqrt(1.0 + t * t);
  const double s = t * c;

  const std::size_t n = a.rows();
  double* rp = a.row(p).data();
  double* rq = a.row(q).data();
  for (std::size_t k = 0; k < n; ++k) {
    if (k == p || k == q) continue;
    const double apk = rp[k];
    const double aqk = rq[k];
    rp[k] = c * apk - s * aqk;
    rq[k] = s * apk + c * aqk;
    a(k, p) = rp[k];
    a(k, q) = rq[k];
  }
  rp[p] -= t * apq;
  rq[q] += t * apq;
  rp[q] = 0.0;
  rq[p] = 0.0;

  double* vp = vt.row(p).data();
  double* vq = vt.row(q).data();
  for (std::size_t k = 0; k < n; ++k) {
    const double x = vp[k];
    const double y = vq[k];
    vp[k] = c * x - s * y;
    vq[k] = s * x + c * y;
  }
}

}  // namespace

EigenDecomposition jacobi_eigh(const DenseMatrix& input, const JacobiOptions& options) {
  if (input.rows() != input.cols()) throw ShapeError("jacobi_eigh: matrix is not square");
  const std::size_t n = input.rows();
  const double scale = std::max(1.0, max_abs(input));
  DenseMatrix a = input;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(input(i, j) - input(j, i)) > 1e-12 * scale) {
        throw ShapeError("jacobi_eigh: matrix is not symmetric at (" + std::to_string(i) + ", " +
                         std::to_string(j) + ")");
      }
      const double v = 0.5 * (input(i, j) + input(j, i));
      a(i, j) = v;
      a(j, i) = v;
    }
  }

  DenseMatrix vt = DenseMatrix::identity(n);
  const double threshold = options.tolerance * frobenius_norm(a);
  double residual = off_diagonal_norm(a);
  std::size_t sweep = 0;
  while (residual > threshold) {
    if (sweep == options.max_sweeps) {
      throw ConvergenceError("jacobi_eigh: no convergence after " + std::to_string(sweep) +
                                 " sweeps, off-diagonal norm " + std::to_string(residual),
                             residual);
    }
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q)
        if (a(p, q) != 0.0) rotate(a, vt, p, q);
    residual = off_diagonal_norm(a);
    ++sweep;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });

  EigenDecomposition eig;
  eig.eigenvalues.resize(n);
  eig.eigenvectors = DenseMatrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t src = order[k];
    eig.eigenvalues[k] = a(src, src);
    auto v = vt.row(src);
    std::size_t largest = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (std::abs(v[i]) > std::abs(v[largest])) largest = i;
    const double sign = v[largest] < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < n; ++i) eig.eigenvectors(i, k) = sign * v[i];
  }
  return eig;
}

DenseMatrix spectral_filter(const EigenDecomposition& eig, const FilterSpec& h, const DenseMatrix& x) {
  const DenseMatrix& u = eig.eigenvectors;
  if (x.rows() != u.rows()) throw ShapeError("spectral_filter: signal rows do not match graph size");
  DenseMatrix coeffs = matmul(transpose(u), x);
  for (std::size_t k = 0; k < coeffs.rows(); ++k) {
    const double gain = h(eig.eigenvalues[k]);
    for (double& v : coeffs.row(k)) v *= gain;
  }
  return matmul(u, coeffs);
}

DenseMatrix exact_filter(const Graph& g, const FilterSpec& h, const DenseMatrix& x) {
  if (x.rows() != g.n_nodes()) throw ShapeError("exact_filter: signal rows do not match graph size");
  return spectral_filter(jacobi_eigh(normalized_laplacian(g).to_dense()), h, x);
}

std::vector<DenseMatrix> dense_basis_matrices(const DenseMatrix& p, BasisKind basis, std::size_t order,
                                              bool cheb_shifted, const ChannelRecurrence* recurrence) {
  if (p.rows() != p.cols()) throw ShapeError("dense_basis_matrices: operator is not square");
  const std::size_t n = p.rows();
  const DenseMatrix id = DenseMatrix::identity(n);
  std::vector<DenseMatrix> g;
  g.reserve(order + 1);
  switch (basis) {
    case BasisKind::Monomial:
      g.push_back(id);
      for (std::size_t k = 1; k <= order; ++k) g.push_back(matmul(p, g.back()));
      break;
    case BasisKind::Chebyshev: {
      const DenseMatrix op = cheb_shifted ? p - id : p;
      g.push_back(id);
      if (order >= 1) g.push_back(op);
      for (std::size_t k = 2; k <= order; ++k) g.push_back(2.0 * matmul(op, g[k - 1]) - g[k - 2]);
      break;
    }
    case BasisKind::Bernstein: {
      const DenseMatrix two_minus = 2.0 * id - p;
      std::vector<DenseMatrix> lpow{id}, rpow{id};
      for (std::size_t k = 1; k <= order; ++k) {
        lpow.push_back(matmul(p, lpow.back()));
        rpow.push_back(matmul(two_minus, rpow.back()));
      }
      const double scale = std::ldexp(1.0, -static_cast<int>(order));
      for (std::size_t k = 0; k <= order; ++k) {
        g.push_back((scale * static_cast<double>(binomial(order, k))) * matmul(rpow[order - k], lpow[k]));
      }
      break;
    }
    case BasisKind::Optimal: {
      if (recurrence == nullptr) throw ConfigError("dense_basis_matrices: optimal basis needs a recurrence");
      const DenseMatrix zero(n, n);
      for (std::size_t k = 0; k <= order; ++k) {
        if (k >= recurrence->valid_orders) {
          g.push_back(zero);
        } else if (k == 0) {
          g.push_back((1.0 / recurrence->beta[0]) * id);
        } else {
          const DenseMatrix& prev2 = k >= 2 ? g[k - 2] : zero;
          DenseMatrix next = matmul(p, g[k - 1]) - recurrence->gamma[k - 1] * g[k - 1] -
                             recurrence->beta[k - 1] * prev2;
          g.push_back((1.0 / recurrence->beta[k]) * next);
        }
      }
      break;
    }
  }
  return g;
}

DenseMatrix dense_poly_apply(const DenseMatrix& p, BasisKind basis, std::span<const double> coeffs,
                             const DenseMatrix& x, const DensePolyOptions& options) {
  if (coeffs.empty()) throw ShapeError("dense_poly_apply: need at least one coefficient");
  if (p.cols() != x.rows()) throw ShapeError("dense_poly_apply: operator and signal do not conform");
  const std::size_t order = coeffs.size() - 1;

  auto combine = [&](const std::vector<DenseMatrix>& g, const DenseMatrix& signal) {
    DenseMatrix acc(signal.rows(), signal.cols());
    for (std::size_t k = 0; k <= order; ++k) acc = acc + coeffs[k] * matmul(g[k], signal);
    return acc;
  };

  if (basis != BasisKind::Optimal) {
    return combine(dense_basis_matrices(p, basis, order, options.cheb_shifted), x);
  }
  if (options.opt_coeffs == nullptr || options.opt_coeffs->channels.size() != x.cols()) {
    throw ConfigError("dense_poly_apply: optimal basis needs one recurrence per channel");
  }
  DenseMatrix out(x.rows(), x.cols());
  for (std::size_t c = 0; c < x.cols(); ++c) {
    const auto g = dense_basis_matrices(p, basis, order, false, &options.opt_coeffs->channels[c]);
    const DenseMatrix col(x.rows(), 1, x.column(c));
    out.set_column(c, combine(g, col).values());
  }
  return out;
}

}  // namespace nodefilter
