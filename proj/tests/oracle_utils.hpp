// Test-side oracles. Everything here is written as naively as possible and
// stays independent of the kernels under test.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "gridcast/autodiff.hpp"
#include "gridcast/sparse.hpp"
#include "gridcast/graph.hpp"
#include "gridcast/tensor.hpp"

namespace testutil {

using gridcast::Dtype;
using gridcast::Parameter;
using gridcast::Rng;
using gridcast::SparseMatrix;
using gridcast::Tape;
using gridcast::Tensor;
using gridcast::Var;

inline Tensor random_tensor(Rng& rng, std::vector<int64_t> dims, Dtype dt, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(dims), dt);
  if (dt == Dtype::Float32) {
    for (auto& v : t.f32()) v = static_cast<float>(rng.uniform(lo, hi));
  } else if (dt == Dtype::Float64) {
    for (auto& v : t.f64()) v = rng.uniform(lo, hi);
  } else if (dt == Dtype::Byte) {
    for (auto& v : t.u8()) v = static_cast<uint8_t>(rng.uniform_int(0, 255));
  } else {
    for (auto& v : t.u64()) v = rng.next_u64() % 1024;
  }
  return t;
}

// Central finite differences against tape gradients, float64, h=1e-5 by
// default. Returns the max relative error over every parameter coordinate.
inline double fd_max_rel_err(std::vector<Parameter*> params,
                             const std::function<Var(Tape&)>& make_loss, double h = 1e-5) {
  Tape t;
  for (Parameter* p : params) p->zero_grad();
  Var loss = make_loss(t);
  t.backward(loss);
  std::vector<std::vector<double>> ad;
  for (Parameter* p : params) {
    std::vector<double> g(p->grad.f64().begin(), p->grad.f64().end());
    ad.push_back(std::move(g));
  }
  auto eval = [&]() {
    Tape t2;
    return make_loss(t2).value().item();
  };
  double worst = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto vals = params[pi]->value.f64();
    for (size_t j = 0; j < vals.size(); ++j) {
      double keep = vals[j];
      vals[j] = keep + h;
      double fp = eval();
      vals[j] = keep - h;
      double fm = eval();
      vals[j] = keep;
      double fd = (fp - fm) / (2.0 * h);
      double a = ad[pi][j];
      double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

// Six plain loops, nothing shared with the engine's shifted-plane kernel.
inline Tensor conv2d_oracle(const Tensor& x, const Tensor& w, const Tensor& b) {
  int64_t ci_n = x.dim(0), h = x.dim(1), wd = x.dim(2), co_n = w.dim(0);
  Tensor out = Tensor::zeros({co_n, h, wd}, Dtype::Float64);
  for (int64_t co = 0; co < co_n; ++co)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t xx = 0; xx < wd; ++xx) {
        double s = b.get({co});
        for (int64_t ci = 0; ci < ci_n; ++ci)
          for (int64_t ky = 0; ky < 3; ++ky)
            for (int64_t kx = 0; kx < 3; ++kx) {
              int64_t yy = y + ky - 1, xs = xx + kx - 1;
              if (yy < 0 || yy >= h || xs < 0 || xs >= wd) continue;
              s += w.get({co, ci, ky, kx}) * x.get({ci, yy, xs});
            }
        out.set({co, y, xx}, s);
      }
  return out;
}

inline Tensor avg_pool2_oracle(const Tensor& x) {
  int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor out = Tensor::zeros({c, h / 2, w / 2}, Dtype::Float64);
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t y = 0; y < h / 2; ++y)
      for (int64_t xx = 0; xx < w / 2; ++xx) {
        double s = 0.0;
        for (int64_t i = 0; i < 2; ++i)
          for (int64_t j = 0; j < 2; ++j) s += x.get({ch, 2 * y + i, 2 * xx + j});
        out.set({ch, y, xx}, s / 4.0);
      }
  return out;
}

inline Tensor spmm_oracle(const SparseMatrix& s, const Tensor& x) {
  Tensor dense = gridcast::densify(s);
  int64_t m = s.n_rows, n = s.n_cols, f = x.dim(1);
  Tensor out = Tensor::zeros({m, f}, Dtype::Float64);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < f; ++j) {
      double acc = 0.0;
      for (int64_t k = 0; k < n; ++k) acc += dense.get({i, k}) * x.get({k, j});
      out.set({i, j}, acc);
    }
  return out;
}

inline Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
  int64_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  Tensor out = Tensor::zeros({n, m}, Dtype::Float64);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += a.get({i, p}) * b.get({p, j});
      out.set({i, j}, acc);
    }
  return out;
}

// Random sparse matrix with sorted columns, for spmm and kernel tests.
inline SparseMatrix random_sparse(Rng& rng, int64_t rows, int64_t cols, double density) {
  SparseMatrix s;
  s.n_rows = rows;
  s.n_cols = cols;
  s.row_ptr.push_back(0);
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t c = 0; c < cols; ++c) {
      if (rng.uniform() < density) {
        s.col_idx.push_back(c);
        s.values.push_back(rng.uniform(-2.0, 2.0));
      }
    }
    s.row_ptr.push_back(static_cast<int64_t>(s.col_idx.size()));
  }
  s.validate();
  return s;
}

// --- graph-side oracles -----------------------------------------------------

inline gridcast::RoadGraph random_mask_graph(Rng& rng, int64_t h, int64_t w, double density) {
  Tensor mask = Tensor::zeros({h, w}, Dtype::Byte);
  for (auto& v : mask.u8()) v = rng.uniform() < density ? 1 : 0;
  return gridcast::extract_graph(mask);
}

// Dense D^{-1/2}(A+I)D^{-1/2} straight from the formula.
inline Tensor normalized_adjacency_oracle(const gridcast::RoadGraph& g) {
  Tensor a = gridcast::densify(g.adjacency);
  int64_t n = g.num_nodes();
  std::vector<double> deg(static_cast<size_t>(n), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    deg[static_cast<size_t>(i)] = 1.0;  // self loop
    for (int64_t j = 0; j < n; ++j) deg[static_cast<size_t>(i)] += a.get({i, j});
  }
  Tensor out = Tensor::zeros({n, n}, Dtype::Float64);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double aij = a.get({i, j}) + (i == j ? 1.0 : 0.0);
      if (aij != 0.0)
        out.set({i, j}, aij / std::sqrt(deg[static_cast<size_t>(i)] * deg[static_cast<size_t>(j)]));
    }
  return out;
}

inline Tensor scaled_laplacian_oracle(const gridcast::RoadGraph& g) {
  Tensor a = gridcast::densify(g.adjacency);
  int64_t n = g.num_nodes();
  std::vector<double> deg(static_cast<size_t>(n), 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j) deg[static_cast<size_t>(i)] += a.get({i, j});
  Tensor out = Tensor::zeros({n, n}, Dtype::Float64);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      if (i == j) {
        // L_sym - I diagonal: 0 when deg>0, -1 for isolated nodes
        out.set({i, j}, deg[static_cast<size_t>(i)] > 0.0 ? 0.0 : -1.0);
      } else if (a.get({i, j}) != 0.0) {
        out.set({i, j}, -a.get({i, j}) / std::sqrt(deg[static_cast<size_t>(i)] *
                                                   deg[static_cast<size_t>(j)]));
      }
    }
  }
  return out;
}

inline Tensor add_bias_rows(Tensor x, const Tensor& bias) {
  auto v = x.f64();
  int64_t f = x.dim(1);
  for (int64_t i = 0; i < x.dim(0); ++i)
    for (int64_t j = 0; j < f; ++j) v[static_cast<size_t>(i * f + j)] += bias.get({j});
  return x;
}

inline Tensor cheb_oracle(const gridcast::RoadGraph& g, const Tensor& x,
                          const std::vector<Tensor>& weights, const Tensor& bias) {
  Tensor l = scaled_laplacian_oracle(g);
  int64_t n = g.num_nodes();
  Tensor tk_prev2 = Tensor::zeros({n, n}, Dtype::Float64);
  for (int64_t i = 0; i < n; ++i) tk_prev2.set({i, i}, 1.0);
  Tensor acc = matmul_oracle(matmul_oracle(tk_prev2, x), weights[0]);
  Tensor tk_prev = l;
  for (size_t k = 1; k < weights.size(); ++k) {
    Tensor term = matmul_oracle(matmul_oracle(tk_prev, x), weights[k]);
    auto a = acc.f64();
    auto tv = term.f64();
    for (size_t i = 0; i < a.size(); ++i) a[i] += tv[i];
    if (k + 1 < weights.size()) {
      Tensor tk = matmul_oracle(l, tk_prev);
      auto nx = tk.f64();
      auto p2 = tk_prev2.f64();
      for (size_t i = 0; i < nx.size(); ++i) nx[i] = 2.0 * nx[i] - p2[i];
      tk_prev2 = tk_prev;
      tk_prev = tk;
    }
  }
  return add_bias_rows(std::move(acc), bias);
}

inline Tensor sage_oracle(const gridcast::RoadGraph& g, const Tensor& x, const Tensor& w_self,
                          const Tensor& w_neigh, const Tensor& bias) {
  int64_t n = g.num_nodes(), f = x.dim(1);
  Tensor neigh = Tensor::zeros({n, f}, Dtype::Float64);
  for (int64_t i = 0; i < n; ++i) {
    int64_t lo = g.adjacency.row_ptr[static_cast<size_t>(i)];
    int64_t hi = g.adjacency.row_ptr[static_cast<size_t>(i) + 1];
    if (lo == hi) continue;
    for (int64_t p = lo; p < hi; ++p)
      for (int64_t j = 0; j < f; ++j)
        neigh.set({i, j},
                  neigh.get({i, j}) + x.get({g.adjacency.col_idx[static_cast<size_t>(p)], j}));
    for (int64_t j = 0; j < f; ++j)
      neigh.set({i, j}, neigh.get({i, j}) / static_cast<double>(hi - lo));
  }
  Tensor out = matmul_oracle(x, w_self);
  Tensor nt = matmul_oracle(neigh, w_neigh);
  auto o = out.f64();
  auto nv = nt.f64();
  for (size_t i = 0; i < o.size(); ++i) o[i] += nv[i];
  return add_bias_rows(std::move(out), bias);
}

inline Tensor sg_oracle(const gridcast::RoadGraph& g, const Tensor& x, const Tensor& w,
                        const Tensor& bias, int hops) {
  Tensor s = normalized_adjacency_oracle(g);
  Tensor h = x;
  for (int i = 0; i < hops; ++i) h = matmul_oracle(s, h);
  return add_bias_rows(matmul_oracle(h, w), bias);
}

// P S P^T for a permutation given as new_index[old] = new.
inline SparseMatrix permute_sparse(const SparseMatrix& s, const std::vector<int64_t>& new_index) {
  Tensor d = gridcast::densify(s);
  int64_t n = s.n_rows;
  SparseMatrix out;
  out.n_rows = n;
  out.n_cols = n;
  std::vector<int64_t> old_of(static_cast<size_t>(n));
  for (int64_t old = 0; old < n; ++old) old_of[static_cast<size_t>(new_index[static_cast<size_t>(old)])] = old;
  out.row_ptr.push_back(0);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      double v = d.get({old_of[static_cast<size_t>(i)], old_of[static_cast<size_t>(j)]});
      if (v != 0.0) {
        out.col_idx.push_back(j);
        out.values.push_back(v);
      }
    }
    out.row_ptr.push_back(static_cast<int64_t>(out.col_idx.size()));
  }
  out.validate();
  return out;
}

inline Tensor permute_rows(const Tensor& x, const std::vector<int64_t>& new_index) {
  Tensor out = Tensor::zeros(x.dims(), x.dtype());
  int64_t f = x.dim(1);
  for (int64_t i = 0; i < x.dim(0); ++i)
    for (int64_t j = 0; j < f; ++j)
      out.set({new_index[static_cast<size_t>(i)], j}, x.get({i, j}));
  return out;
}

}  // namespace testutil
