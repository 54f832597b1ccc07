#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nodefilter/matrix.hpp"

namespace nodefilter {

struct Triplet {
  std::size_t row;
  std::size_t col;
  double value;
};

// Compressed sparse row matrix. Column indices are sorted within each row
// and no (row, col) pair appears twice.
class SparseMatrix {
 public:
  SparseMatrix() = default;

  // Throws ShapeError on out-of-range or duplicate entries.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> entries);
  static SparseMatrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return col_indices_.size(); }

  std::span<const std::size_t> row_offsets() const noexcept { return row_offsets_; }
  std::span<const std::size_t> col_indices() const noexcept { return col_indices_; }
  std::span<const double> values() const noexcept { return values_; }

  // Entry lookup by binary search; zero when absent.
  double at(std::size_t r, std::size_t c) const;

  DenseMatrix to_dense() const;

  // Exact entry-wise symmetry.
  bool is_symmetric() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_offsets_{0};
  std::vector<std::size_t> col_indices_;
  std::vector<double> values_;
};

// y = m * x. Each output entry sums in ascending column order, so results
// are bit-stable across runs.
DenseMatrix spmm(const SparseMatrix& m, const DenseMatrix& x);

// y = alpha * (m * x) + beta * z, fused to avoid a temporary.
DenseMatrix spmm_axpby(double alpha, const SparseMatrix& m, const DenseMatrix& x, double beta,
                       const DenseMatrix& z);

}  // namespace nodefilter
