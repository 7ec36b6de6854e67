#pragma once

#include <cstdint>
#include <vector>

#include "gridcast/tensor.hpp"

namespace gridcast {

// CSR matrix with float64 values. Column indices are strictly increasing
// within each row; validate() enforces the layout invariants.
struct SparseMatrix {
  int64_t n_rows = 0;
  int64_t n_cols = 0;
  std::vector<int64_t> row_ptr;  // length n_rows+1, row_ptr[0]=0
  std::vector<int64_t> col_idx;
  std::vector<double> values;

  int64_t nnz() const { return static_cast<int64_t>(col_idx.size()); }
  void validate() const;

  static SparseMatrix identity(int64_t n);
};

// Dense (n_rows, n_cols) float64 copy, mostly for tests and small oracles.
Tensor densify(const SparseMatrix& s);

// out = s * x for dense x (N,F). Accumulates in double, result in x's dtype.
Tensor spmm_eval(const SparseMatrix& s, const Tensor& x);

}  // namespace gridcast
