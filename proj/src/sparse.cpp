#include "gridcast/sparse.hpp"

namespace gridcast {

void SparseMatrix::validate() const {
  if (n_rows < 0 || n_cols < 0) throw ValidationError("sparse matrix with negative extent");
  if (static_cast<int64_t>(row_ptr.size()) != n_rows + 1)
    throw ValidationError("row_ptr length must be n_rows+1");
  if (!row_ptr.empty() && row_ptr.front() != 0) throw ValidationError("row_ptr[0] must be 0");
  if (row_ptr.back() != nnz()) throw ValidationError("row_ptr[n_rows] must equal nnz");
  if (values.size() != col_idx.size())
    throw ValidationError("values and col_idx length mismatch");
  for (int64_t r = 0; r < n_rows; ++r) {
    if (row_ptr[static_cast<size_t>(r)] > row_ptr[static_cast<size_t>(r) + 1])
      throw ValidationError("row_ptr must be monotone");
    int64_t prev = -1;
    for (int64_t p = row_ptr[static_cast<size_t>(r)]; p < row_ptr[static_cast<size_t>(r) + 1];
         ++p) {
      int64_t c = col_idx[static_cast<size_t>(p)];
      if (c <= prev || c >= n_cols)
        throw ValidationError("col_idx must be strictly increasing and < n_cols");
      prev = c;
    }
  }
}

SparseMatrix SparseMatrix::identity(int64_t n) {
  SparseMatrix s;
  s.n_rows = n;
  s.n_cols = n;
  s.row_ptr.resize(static_cast<size_t>(n) + 1);
  s.col_idx.resize(static_cast<size_t>(n));
  s.values.assign(static_cast<size_t>(n), 1.0);
  for (int64_t i = 0; i <= n; ++i) s.row_ptr[static_cast<size_t>(i)] = i;
  for (int64_t i = 0; i < n; ++i) s.col_idx[static_cast<size_t>(i)] = i;
  return s;
}

Tensor densify(const SparseMatrix& s) {
  Tensor d = Tensor::zeros({s.n_rows, s.n_cols}, Dtype::Float64);
  auto out = d.f64();
  for (int64_t r = 0; r < s.n_rows; ++r) {
    for (int64_t p = s.row_ptr[static_cast<size_t>(r)]; p < s.row_ptr[static_cast<size_t>(r) + 1];
         ++p) {
      out[static_cast<size_t>(r * s.n_cols + s.col_idx[static_cast<size_t>(p)])] =
          s.values[static_cast<size_t>(p)];
    }
  }
  return d;
}

namespace {

template <class T>
void spmm_kernel(const SparseMatrix& s, std::span<const T> x, int64_t f, std::span<T> out) {
  parallel_for(s.n_rows, [&](int64_t lo, int64_t hi) {
    std::vector<double> acc(static_cast<size_t>(f));
    for (int64_t r = lo; r < hi; ++r) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int64_t p = s.row_ptr[static_cast<size_t>(r)];
           p < s.row_ptr[static_cast<size_t>(r) + 1]; ++p) {
        double v = s.values[static_cast<size_t>(p)];
        const T* xr = x.data() + s.col_idx[static_cast<size_t>(p)] * f;
        for (int64_t j = 0; j < f; ++j) acc[static_cast<size_t>(j)] += v * xr[j];
      }
      T* orow = out.data() + r * f;
      for (int64_t j = 0; j < f; ++j) orow[j] = static_cast<T>(acc[static_cast<size_t>(j)]);
    }
  });
}

}  // namespace

Tensor spmm_eval(const SparseMatrix& s, const Tensor& x) {
  if (x.rank() != 2)
    throw ValidationError("spmm expects a rank-2 dense tensor, got " +
                          dims_to_string(x.dims()));
  if (x.dim(0) != s.n_cols)
    throw ValidationError("spmm dims mismatch: sparse is " + std::to_string(s.n_rows) + "x" +
                          std::to_string(s.n_cols) + ", dense is " + dims_to_string(x.dims()));
  if (!is_float_dtype(x.dtype()))
    throw ValidationError("spmm requires a float tensor");
  Tensor out = Tensor::zeros({s.n_rows, x.dim(1)}, x.dtype());
  if (x.dtype() == Dtype::Float32) {
    spmm_kernel<float>(s, x.f32(), x.dim(1), out.f32());
  } else {
    spmm_kernel<double>(s, x.f64(), x.dim(1), out.f64());
  }
  return out;
}

}  // namespace gridcast
