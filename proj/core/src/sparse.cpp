#include "nodefilter/sparse.hpp"

#include <algorithm>
#include <string>

#include "nodefilter/error.hpp"

namespace nodefilter {

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols,
                                         std::vector<Triplet> entries) {
  for (const auto& t : entries) {
    if (t.row >= rows || t.col >= cols) {
      throw ShapeError("from_triplets: entry (" + std::to_string(t.row) + ", " +
                       std::to_string(t.col) + ") outside " + std::to_string(rows) + "x" +
                       std::to_string(cols));
    }
  }
  std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });

  SparseMatrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.row_offsets_.assign(rows + 1, 0);
  m.col_indices_.reserve(entries.size());
  m.values_.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (i > 0 && entries[i].row == entries[i - 1].row && entries[i].col == entries[i - 1].col) {
      throw ShapeError("from_triplets: duplicate entry (" + std::to_string(entries[i].row) +
                       ", " + std::to_string(entries[i].col) + ")");
    }
    ++m.row_offsets_[entries[i].row + 1];
    m.col_indices_.push_back(entries[i].col);
    m.values_.push_back(entries[i].value);
  }
  for (std::size_t r = 0; r < rows; ++r) m.row_offsets_[r + 1] += m.row_offsets_[r];
  return m;
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
  std::vector<Triplet> entries;
  entries.reserve(n);
  for (std::size_t i = 0; i < n; ++i) entries.push_back({i, i, 1.0});
  return from_triplets(n, n, std::move(entries));
}

double SparseMatrix::at(std::size_t r, std::size_t c) const {
  const auto begin = col_indices_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[r]);
  const auto end = col_indices_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[r + 1]);
  const auto it = std::lower_bound(begin, end, c);
  if (it == end || *it != c) return 0.0;
  return values_[static_cast<std::size_t>(it - col_indices_.begin())];
}

DenseMatrix SparseMatrix::to_dense() const {
  DenseMatrix d(rows_, cols_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t p = row_offsets_[r]; p < row_offsets_[r + 1]; ++p) d(r, col_indices_[p]) = values_[p];
  return d;
}

bool SparseMatrix::is_symmetric() const {
  if (rows_ != cols_) return false;
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t p = row_offsets_[r]; p < row_offsets_[r + 1]; ++p)
      if (at(col_indices_[p], r) != values_[p]) return false;
  return true;
}

namespace {

void check_spmm_shapes(const SparseMatrix& m, const DenseMatrix& x) {
  if (m.cols() != x.rows()) {
    throw ShapeError("spmm: sparse " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                     " by dense " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
  }
}

}  // namespace

DenseMatrix spmm(const SparseMatrix& m, const DenseMatrix& x) {
  check_spmm_shapes(m, x);
  const std::size_t d = x.cols();
  DenseMatrix y(m.rows(), d);
  const auto offsets = m.row_offsets();
  const auto cols = m.col_indices();
  const auto vals = m.values();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double* out = y.row(r).data();
    for (std::size_t p = offsets[r]; p < offsets[r + 1]; ++p) {
      const double v = vals[p];
      const double* in = x.row(cols[p]).data();
      for (std::size_t c = 0; c < d; ++c) out[c] += v * in[c];
    }
  }
  return y;
}

DenseMatrix spmm_axpby(double alpha, const SparseMatrix& m, const DenseMatrix& x, double beta,
                       const DenseMatrix& z) {
  check_spmm_shapes(m, x);
  if (z.rows() != m.rows() || z.cols() != x.cols()) throw ShapeError("spmm_axpby: z shape mismatch");
  DenseMatrix y = spmm(m, x);
  auto yv = y.values();
  auto zv = z.values();
  for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = alpha * yv[i] + beta * zv[i];
  return y;
}

}  // namespace nodefilter
