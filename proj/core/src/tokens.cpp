#include "nodefilter/tokens.hpp"

#include <cmath>

#include "nodefilter/error.hpp"

namespace nodefilter {

TokenTensor::TokenTensor(BasisKind basis, std::size_t n_nodes, std::size_t order, std::size_t dim)
    : basis_(basis), n_nodes_(n_nodes), order_(order), dim_(dim), data_((order + 1) * n_nodes * dim, 0.0) {}

DenseMatrix TokenTensor::order_matrix(std::size_t k) const {
  const std::size_t stride = n_nodes_ * dim_;
  return DenseMatrix(n_nodes_, dim_,
                     std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(k * stride),
                                         data_.begin() + static_cast<std::ptrdiff_t>((k + 1) * stride)));
}

void TokenTensor::set_order_matrix(std::size_t k, const DenseMatrix& h) {
  if (h.rows() != n_nodes_ || h.cols() != dim_) throw ShapeError("set_order_matrix: shape mismatch");
  std::copy(h.values().begin(), h.values().end(), data_.begin() + static_cast<std::ptrdiff_t>(k * n_nodes_ * dim_));
}

bool TokenTensor::operator==(const TokenTensor& other) const {
  if (basis_ != other.basis_ || cheb_shifted_ != other.cheb_shifted_ || n_nodes_ != other.n_nodes_ ||
      order_ != other.order_ || dim_ != other.dim_ || data_ != other.data_) {
    return false;
  }
  if (opt_coeffs_.has_value() != other.opt_coeffs_.has_value()) return false;
  if (!opt_coeffs_) return true;
  const auto& a = opt_coeffs_->channels;
  const auto& b = other.opt_coeffs_->channels;
  if (a.size() != b.size()) return false;
  for (std::size_t c = 0; c < a.size(); ++c) {
    if (a[c].gamma != b[c].gamma || a[c].beta != b[c].beta) return false;
  }
  return true;
}

namespace {

void check_operator(const SparseMatrix& p, const DenseMatrix& x, const char* who) {
  if (p.rows() != p.cols() || p.cols() != x.rows()) {
    throw ShapeError(std::string(who) + ": operator is " + std::to_string(p.rows()) + "x" +
                     std::to_string(p.cols()) + " but features have " + std::to_string(x.rows()) + " rows");
  }
}

}  // namespace

TokenTensor monomial_tokens(const SparseMatrix& a_hat, const DenseMatrix& x, std::size_t order) {
  check_operator(a_hat, x, "monomial_tokens");
  TokenTensor t(BasisKind::Monomial, x.rows(), order, x.cols());
  DenseMatrix h = x;
  t.set_order_matrix(0, h);
  for (std::size_t k = 1; k <= order; ++k) {
    h = spmm(a_hat, h);
    t.set_order_matrix(k, h);
  }
  return t;
}

TokenTensor chebyshev_tokens(const SparseMatrix& l_hat, const DenseMatrix& x, std::size_t order,
                             bool shifted) {
  check_operator(l_hat, x, "chebyshev_tokens");
  TokenTensor t(BasisKind::Chebyshev, x.rows(), order, x.cols());
  t.set_cheb_shifted(shifted);
  // (L - I) y = L y - y
  auto apply = [&](const DenseMatrix& y) { return shifted ? spmm_axpby(1.0, l_hat, y, -1.0, y) : spmm(l_hat, y); };
  DenseMatrix prev = x;
  t.set_order_matrix(0, prev);
  if (order == 0) return t;
  DenseMatrix cur = apply(x);
  t.set_order_matrix(1, cur);
  for (std::size_t k = 2; k <= order; ++k) {
    DenseMatrix next = shifted ? spmm_axpby(2.0, l_hat, cur, -2.0, cur) - prev
                               : spmm_axpby(2.0, l_hat, cur, -1.0, prev);
    t.set_order_matrix(k, next);
    prev = std::move(cur);
    cur = std::move(next);
  }
  return t;
}

TokenTensor bernstein_tokens(const SparseMatrix& l_hat, const DenseMatrix& x, std::size_t order) {
  check_operator(l_hat, x, "bernstein_tokens");
  if (order > kMaxBernsteinOrder) {
    throw ConfigError("bernstein_tokens: order " + std::to_string(order) + " exceeds " +
                      std::to_string(kMaxBernsteinOrder));
  }
  // de Casteljau: level m holds b^m_j; b^{m+1}_j = P b^m_j + Q b^m_{j-1}
  // with Q = L/2, P = I - Q. Every step is a convex mix, no binomials.
  std::vector<DenseMatrix> level{x};
  for (std::size_t m = 0; m < order; ++m) {
    std::vector<DenseMatrix> next(m + 2, DenseMatrix(x.rows(), x.cols()));
    for (std::size_t j = 0; j <= m; ++j) {
      const DenseMatrix q = 0.5 * spmm(l_hat, level[j]);
      next[j] = next[j] + (level[j] - q);
      next[j + 1] = next[j + 1] + q;
    }
    level = std::move(next);
  }
  TokenTensor t(BasisKind::Bernstein, x.rows(), order, x.cols());
  for (std::size_t k = 0; k <= order; ++k) t.set_order_matrix(k, level[k]);
  return t;
}

TokenTensor optimal_tokens(const SparseMatrix& a_hat, const DenseMatrix& x, std::size_t order,
                           std::vector<std::string>* warnings) {
  check_operator(a_hat, x, "optimal_tokens");
  const std::size_t n = x.rows();
  TokenTensor t(BasisKind::Optimal, n, order, x.cols());
  OptBasisCoeffs coeffs;

  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };

  for (std::size_t c = 0; c < x.cols(); ++c) {
    ChannelRecurrence rec;
    rec.gamma.assign(order, 0.0);
    rec.beta.assign(order + 1, 0.0);

    std::vector<double> v = x.column(c);
    const double norm = std::sqrt(dot(v, v));
    if (norm == 0.0) {
      if (warnings) warnings->push_back("channel " + std::to_string(c) + ": zero signal, tokens set to zero");
      coeffs.channels.push_back(std::move(rec));
      continue;
    }
    rec.beta[0] = norm;
    for (double& e : v) e /= norm;
    std::vector<double> v_prev(n, 0.0);
    rec.valid_orders = 1;
    for (std::size_t i = 0; i < n; ++i) t(0, i, c) = v[i];

    for (std::size_t k = 1; k <= order; ++k) {
      const DenseMatrix w_mat = spmm(a_hat, DenseMatrix(n, 1, v));
      std::vector<double> w(w_mat.values().begin(), w_mat.values().end());
      const double gamma = dot(w, v);
      for (std::size_t i = 0; i < n; ++i) w[i] -= gamma * v[i] + rec.beta[k - 1] * v_prev[i];
      const double beta = std::sqrt(dot(w, w));
      rec.gamma[k - 1] = gamma;
      if (beta < kOptimalBreakdown) {
        if (warnings) {
          warnings->push_back("channel " + std::to_string(c) + ": recurrence breakdown at order " +
                              std::to_string(k) + ", higher orders zero-padded");
        }
        break;
      }
      rec.beta[k] = beta;
      for (double& e : w) e /= beta;
      v_prev = std::move(v);
      v = std::move(w);
      rec.valid_orders = k + 1;
      for (std::size_t i = 0; i < n; ++i) t(k, i, c) = v[i];
    }
    coeffs.channels.push_back(std::move(rec));
  }
  t.set_opt_coeffs(std::move(coeffs));
  return t;
}

TokenTensor compute_tokens(const Graph& g, const DenseMatrix& x, BasisKind basis, std::size_t order,
                           bool cheb_shifted, std::vector<std::string>* warnings) {
  switch (basis) {
    case BasisKind::Monomial: return monomial_tokens(normalized_adjacency(g), x, order);
    case BasisKind::Chebyshev: return chebyshev_tokens(normalized_laplacian(g), x, order, cheb_shifted);
    case BasisKind::Bernstein: return bernstein_tokens(normalized_laplacian(g), x, order);
    case BasisKind::Optimal: return optimal_tokens(normalized_adjacency(g), x, order, warnings);
  }
  throw ConfigError("compute_tokens: unknown basis");
}

}  // namespace nodefilter
