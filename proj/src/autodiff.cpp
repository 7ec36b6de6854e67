#include "gridcast/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace gridcast {

namespace {

template <class T>
std::span<T> sp(Tensor& t);
template <>
std::span<float> sp<float>(Tensor& t) {
  return t.f32();
}
template <>
std::span<double> sp<double>(Tensor& t) {
  return t.f64();
}

template <class T>
std::span<const T> sp(const Tensor& t);
template <>
std::span<const float> sp<float>(const Tensor& t) {
  return t.f32();
}
template <>
std::span<const double> sp<double>(const Tensor& t) {
  return t.f64();
}

template <class F>
void dispatch_float(Dtype dt, F&& f) {
  switch (dt) {
    case Dtype::Float32: f(float{}); return;
    case Dtype::Float64: f(double{}); return;
    default:
      throw ValidationError(std::string("differentiable ops require float tensors, got ") +
                            dtype_name(dt) + " (cast byte inputs first)");
  }
}

void check_same_tape(Var a, Var b) {
  if (a.tape == nullptr || b.tape == nullptr || a.tape != b.tape)
    throw ValidationError("vars must live on the same tape");
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_dims(b))
    throw ValidationError(std::string(op) + ": dims mismatch " + dims_to_string(a.dims()) +
                          " vs " + dims_to_string(b.dims()));
  if (a.dtype() != b.dtype())
    throw ValidationError(std::string(op) + ": dtype mismatch");
}

// dst += src
void acc(Tensor& dst, const Tensor& src) {
  check_same_shape(dst, src, "grad accumulate");
  dispatch_float(dst.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = sp<T>(dst);
    auto s = sp<T>(src);
    for (size_t i = 0; i < d.size(); ++i) d[i] += s[i];
  });
}

}  // namespace

const Tensor& Var::value() const {
  if (tape == nullptr) throw ValidationError("var is not bound to a tape");
  return tape->value(id);
}

Var Tape::emit(Tensor value, bool requires_grad, BackwardFn bwd) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backward = requires_grad ? std::move(bwd) : BackwardFn{};
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor value) { return emit(std::move(value), false, {}); }

Var Tape::leaf(Parameter& p) {
  Parameter* bound = &p;
  Var v = emit(p.value, true, [bound](Tape& t, int32_t self) {
    acc(bound->grad, t.grad(self));
  });
  nodes_.back().bound = bound;
  return v;
}

const Tensor& Tape::grad(int32_t id) const {
  const Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.grad_live) throw ValidationError("gradient not populated for node");
  return n.grad;
}

Tensor& Tape::grad_slot(int32_t id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.grad_live) {
    n.grad = Tensor::zeros(n.value.dims(), n.value.dtype());
    n.grad_live = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ValidationError("loss var belongs to a different tape");
  if (loss.id < 0 || static_cast<size_t>(loss.id) >= nodes_.size())
    throw ValidationError("loss var out of range");
  const Node& ln = nodes_[static_cast<size_t>(loss.id)];
  if (ln.value.numel() != 1)
    throw ValidationError("backward requires a scalar loss, got " +
                          dims_to_string(ln.value.dims()));
  if (!is_float_dtype(ln.value.dtype())) throw ValidationError("loss must be a float tensor");

  for (Node& n : nodes_) {
    n.grad = Tensor();
    n.grad_live = false;
  }
  grad_slot(loss.id).fill(1.0);
  for (int32_t id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad_live && n.requires_grad && n.backward) n.backward(*this, id);
  }
}

// ---------------------------------------------------------------------------
// elementwise ops

Var add(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  check_same_shape(av, bv, "add");
  Tensor out = Tensor::zeros(av.dims(), av.dtype());
  dispatch_float(av.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto o = sp<T>(out);
    auto x = sp<T>(av);
    auto y = sp<T>(bv);
    for (size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  });
  bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
  return t.emit(std::move(out), rg, [ia = a.id, ib = b.id](Tape& t, int32_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ia)) acc(t.grad_slot(ia), g);
    if (t.requires_grad(ib)) acc(t.grad_slot(ib), g);
  });
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  check_same_shape(av, bv, "sub");
  Tensor out = Tensor::zeros(av.dims(), av.dtype());
  dispatch_float(av.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto o = sp<T>(out);
    auto x = sp<T>(av);
    auto y = sp<T>(bv);
    for (size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  });
  bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
  return t.emit(std::move(out), rg, [ia = a.id, ib = b.id](Tape& t, int32_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ia)) acc(t.grad_slot(ia), g);
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad_slot(ib);
      dispatch_float(gb.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto d = sp<T>(gb);
        auto s = sp<T>(g);
        for (size_t i = 0; i < d.size(); ++i) d[i] -= s[i];
      });
    }
  });
}

Var mul(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  check_same_shape(av, bv, "mul");
  Tensor out = Tensor::zeros(av.dims(), av.dtype());
  dispatch_float(av.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto o = sp<T>(out);
    auto x = sp<T>(av);
    auto y = sp<T>(bv);
    for (size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  });
  bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
  return t.emit(std::move(out), rg, [ia = a.id, ib = b.id](Tape& t, int32_t self) {
    const Tensor& g = t.grad(self);
    auto side = [&](int32_t dst, int32_t other) {
      Tensor& gd = t.grad_slot(dst);
      const Tensor& ov = t.value(other);
      dispatch_float(gd.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto d = sp<T>(gd);
        auto gg = sp<T>(g);
        auto o = sp<T>(ov);
        for (size_t i = 0; i < d.size(); ++i) d[i] += gg[i] * o[i];
      });
    };
    if (t.requires_grad(ia)) side(ia, ib);
    if (t.requires_grad(ib)) side(ib, ia);
  });
}

Var scale(Var a, double c) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  Tensor out = Tensor::zeros(av.dims(), av.dtype());
  dispatch_float(av.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto o = sp<T>(out);
    auto x = sp<T>(av);
    T k = static_cast<T>(c);
    for (size_t i = 0; i < o.size(); ++i) o[i] = k * x[i];
  });
  return t.emit(std::move(out), t.requires_grad(a.id), [ia = a.id, c](Tape& t, int32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gd = t.grad_slot(ia);
    dispatch_float(gd.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto d = sp<T>(gd);
      auto s = sp<T>(g);
      T k = static_cast<T>(c);
      for (size_t i = 0; i < d.size(); ++i) d[i] += k * s[i];
    });
  });
}

Var relu(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  Tensor out = Tensor::zeros(av.dims(), av.dtype());
  dispatch_float(av.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto o = sp<T>(out);
    auto x = sp<T>(av);
    for (size_t i = 0; i < o.size(); ++i) o[i] = x[i] > T(0) ? x[i] : T(0);
  });
  return t.emit(std::move(out), t.requires_grad(a.id), [ia = a.id](Tape& t, int32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(ia);
    Tensor& gd = t.grad_slot(ia);
    dispatch_float(gd.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto d = sp<T>(gd);
      auto s = sp<T>(g);
      auto x = sp<T>(xv);
      for (size_t i = 0; i < d.size(); ++i)
        if (x[i] > T(0)) d[i] += s[i];
    });
  });
}

Var sum_all(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  double total = 0.0;
  dispatch_float(av.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto x = sp<T>(av);
    for (size_t i = 0; i < x.size(); ++i) total += static_cast<double>(x[i]);
  });
  Tensor out = Tensor::scalar(total, av.dtype());
  return t.emit(std::move(out), t.requires_grad(a.id), [ia = a.id](Tape& t, int32_t self) {
    const Tensor& g = t.grad(self);
    double gv = g.item();
    Tensor& gd = t.grad_slot(ia);
    dispatch_float(gd.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto d = sp<T>(gd);
      T k = static_cast<T>(gv);
      for (size_t i = 0; i < d.size(); ++i) d[i] += k;
    });
  });
}

Var reshape(Var a, std::vector<int64_t> dims) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  if (dims_product(dims) != av.numel())
    throw ValidationError("reshape to " + dims_to_string(dims) + " changes element count of " +
                          dims_to_string(av.dims()));
  Tensor out = Tensor::zeros(dims, av.dtype());
  dispatch_float(av.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto o = sp<T>(out);
    auto x = sp<T>(av);
    std::copy(x.begin(), x.end(), o.begin());
  });
  return t.emit(std::move(out), t.requires_grad(a.id), [ia = a.id](Tape& t, int32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gd = t.grad_slot(ia);
    dispatch_float(gd.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto d = sp<T>(gd);
      auto s = sp<T>(g);
      for (size_t i = 0; i < d.size(); ++i) d[i] += s[i];
    });
  });
}

Var concat_ch(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 3 || bv.rank() != 3 || av.dim(1) != bv.dim(1) || av.dim(2) != bv.dim(2) ||
      av.dtype() != bv.dtype())
    throw ValidationError("concat_ch expects (C,H,W) tensors with matching H,W and dtype");
  int64_t c1 = av.dim(0), c2 = bv.dim(0), h = av.dim(1), w = av.dim(2);
  Tensor out = Tensor::zeros({c1 + c2, h, w}, av.dtype());
  dispatch_float(av.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto o = sp<T>(out);
    auto x = sp<T>(av);
    auto y = sp<T>(bv);
    std::copy(x.begin(), x.end(), o.begin());
    std::copy(y.begin(), y.end(), o.begin() + x.size());
  });
  bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
  int64_t split = c1 * h * w;
  return t.emit(std::move(out), rg, [ia = a.id, ib = b.id, split](Tape& t, int32_t self) {
    const Tensor& g = t.grad(self);
    dispatch_float(g.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto s = sp<T>(g);
      if (t.requires_grad(ia)) {
        auto d = sp<T>(t.grad_slot(ia));
        for (size_t i = 0; i < d.size(); ++i) d[i] += s[i];
      }
      if (t.requires_grad(ib)) {
        auto d = sp<T>(t.grad_slot(ib));
        for (size_t i = 0; i < d.size(); ++i) d[i] += s[static_cast<size_t>(split) + i];
      }
    });
  });
}

Var detach(Var a) {
  Tape& t = *a.tape;
  return t.constant(a.value());
}

// ---------------------------------------------------------------------------
// linear algebra

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0) || av.dtype() != bv.dtype())
    throw ValidationError("matmul dims mismatch " + dims_to_string(av.dims()) + " x " +
                          dims_to_string(bv.dims()));
  int64_t n = av.dim(0), k = av.dim(1), m = bv.dim(1);
  Tensor out = Tensor::zeros({n, m}, av.dtype());
  dispatch_float(av.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto o = sp<T>(out);
    auto x = sp<T>(av);
    auto y = sp<T>(bv);
    parallel_for(n, [&](int64_t lo, int64_t hi) {
      for (int64_t i = lo; i < hi; ++i) {
        T* crow = o.data() + i * m;
        for (int64_t p = 0; p < k; ++p) {
          T av_ = x[static_cast<size_t>(i * k + p)];
          const T* brow = y.data() + p * m;
          for (int64_t j = 0; j < m; ++j) crow[j] += av_ * brow[j];
        }
      }
    });
  });
  bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
  return t.emit(std::move(out), rg, [ia = a.id, ib = b.id, n, k, m](Tape& t, int32_t self) {
    const Tensor& g = t.grad(self);
    dispatch_float(g.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto gg = sp<T>(g);
      if (t.requires_grad(ia)) {
        auto bvs = sp<T>(t.value(ib));
        auto d = sp<T>(t.grad_slot(ia));
        parallel_for(n, [&](int64_t lo, int64_t hi) {
          for (int64_t i = lo; i < hi; ++i) {
            for (int64_t p = 0; p < k; ++p) {
              const T* grow = gg.data() + i * m;
              const T* brow = bvs.data() + p * m;
              T s = T(0);
              for (int64_t j = 0; j < m; ++j) s += grow[j] * brow[j];
              d[static_cast<size_t>(i * k + p)] += s;
            }
          }
        });
      }
      if (t.requires_grad(ib)) {
        auto avs = sp<T>(t.value(ia));
        auto d = sp<T>(t.grad_slot(ib));
        parallel_for(k, [&](int64_t lo, int64_t hi) {
          for (int64_t p = lo; p < hi; ++p) {
            T* drow = d.data() + p * m;
            for (int64_t i = 0; i < n; ++i) {
              T aval = avs[static_cast<size_t>(i * k + p)];
              const T* grow = gg.data() + i * m;
              for (int64_t j = 0; j < m; ++j) drow[j] += aval * grow[j];
            }
          }
        });
      }
    });
  });
}

Var add_rowvec(Var x, Var b) {
  check_same_tape(x, b);
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  if (xv.rank() != 2 || bv.rank() != 1 || xv.dim(1) != bv.dim(0) || xv.dtype() != bv.dtype())
    throw ValidationError("add_rowvec expects (N,F) and (F)");
  int64_t n = xv.dim(0), f = xv.dim(1);
  Tensor out = Tensor::zeros(xv.dims(), xv.dtype());
  dispatch_float(xv.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto o = sp<T>(out);
    auto xs = sp<T>(xv);
    auto bs = sp<T>(bv);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < f; ++j)
        o[static_cast<size_t>(i * f + j)] = xs[static_cast<size_t>(i * f + j)] + bs[static_cast<size_t>(j)];
  });
  bool rg = t.requires_grad(x.id) || t.requires_grad(b.id);
  return t.emit(std::move(out), rg, [ix = x.id, ib = b.id, n, f](Tape& t, int32_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ix)) acc(t.grad_slot(ix), g);
    if (t.requires_grad(ib)) {
      Tensor& gd = t.grad_slot(ib);
      dispatch_float(gd.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto d = sp<T>(gd);
        auto s = sp<T>(g);
        for (int64_t i = 0; i < n; ++i)
          for (int64_t j = 0; j < f; ++j) d[static_cast<size_t>(j)] += s[static_cast<size_t>(i * f + j)];
      });
    }
  });
}

Var spmm(const SparseMatrix& s, Var x) {
  Tape& t = *x.tape;
  Tensor out = spmm_eval(s, x.value());
  const SparseMatrix* sm = &s;  // operators outlive tapes; they are shared read-only
  return t.emit(std::move(out), t.requires_grad(x.id), [ix = x.id, sm](Tape& t, int32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gd = t.grad_slot(ix);
    int64_t f = gd.dim(1);
    dispatch_float(gd.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto d = sp<T>(gd);
      auto gs = sp<T>(g);
      for (int64_t r = 0; r < sm->n_rows; ++r) {
        const T* grow = gs.data() + r * f;
        for (int64_t p = sm->row_ptr[static_cast<size_t>(r)];
             p < sm->row_ptr[static_cast<size_t>(r) + 1]; ++p) {
          T v = static_cast<T>(sm->values[static_cast<size_t>(p)]);
          T* drow = d.data() + sm->col_idx[static_cast<size_t>(p)] * f;
          for (int64_t j = 0; j < f; ++j) drow[j] += v * grow[j];
        }
      }
    });
  });
}

// ---------------------------------------------------------------------------
// grid ops

namespace {

void check_chw(const Tensor& x, const char* op) {
  if (x.rank() != 3) throw ValidationError(std::string(op) + " expects a (C,H,W) tensor");
}

// One fused pass per kernel row: orow[x] += w0*xr[x-1] + w1*xr[x] + w2*xr[x+1],
// with the two edge columns peeled off.
template <class T>
void conv2d_row(T* __restrict orow, const T* __restrict xr, T w0, T w1, T w2, int64_t wdt) {
  if (wdt == 1) {
    orow[0] += w1 * xr[0];
    return;
  }
  orow[0] += w1 * xr[0] + w2 * xr[1];
  for (int64_t xx = 1; xx < wdt - 1; ++xx)
    orow[xx] += w0 * xr[xx - 1] + w1 * xr[xx] + w2 * xr[xx + 1];
  orow[wdt - 1] += w0 * xr[wdt - 2] + w1 * xr[wdt - 1];
}

// Shifted row dot products for the weight gradient: a0 += gy.x(-1), a1 += gy.x(0), a2 += gy.x(+1).
template <class T>
void conv2d_row_dw(const T* __restrict xr, const T* __restrict gy, int64_t wdt, T& a0, T& a1,
                   T& a2) {
  if (wdt == 1) {
    a1 += gy[0] * xr[0];
    return;
  }
  T s0 = 0, s1 = 0, s2 = 0;
  s1 += gy[0] * xr[0];
  s2 += gy[0] * xr[1];
  for (int64_t xx = 1; xx < wdt - 1; ++xx) {
    s0 += gy[xx] * xr[xx - 1];
    s1 += gy[xx] * xr[xx];
    s2 += gy[xx] * xr[xx + 1];
  }
  s0 += gy[wdt - 1] * xr[wdt - 2];
  s1 += gy[wdt - 1] * xr[wdt - 1];
  a0 += s0;
  a1 += s1;
  a2 += s2;
}

// Fixed-order dot product over explicit lanes; the lanes are independent
// scalar chains, so the compiler may vectorize them without reassociating.
template <class T>
T dot_lanes(const T* __restrict a, const T* __restrict b, int64_t n) {
  constexpr int kLanes = 16;
  T acc[kLanes] = {};
  int64_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    for (int j = 0; j < kLanes; ++j) acc[j] += a[i + j] * b[i + j];
  T s = T(0);
  for (; i < n; ++i) s += a[i] * b[i];
  for (int j = 0; j < kLanes; ++j) s += acc[j];
  return s;
}

template <class T>
void axpy(T* __restrict y, const T* __restrict x, T a, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// Small planes with many channels run as a channel-major product instead:
// colT is (h*w, ci*9) with row p holding pixel p's 3x3 neighborhood.
constexpr int64_t kConvGemmMaxPixels = 256;

template <class T>
std::vector<T> build_colT(const T* x, int64_t ci_n, int64_t h, int64_t w) {
  std::vector<T> colT(static_cast<size_t>(h * w * ci_n * 9), T(0));
  int64_t k_n = ci_n * 9;
  for (int64_t ci = 0; ci < ci_n; ++ci) {
    const T* xplane = x + ci * h * w;
    for (int64_t y = 0; y < h; ++y)
      for (int64_t xx = 0; xx < w; ++xx) {
        T* row = colT.data() + (y * w + xx) * k_n + ci * 9;
        for (int ky = 0; ky < 3; ++ky) {
          int64_t ys = y + ky - 1;
          if (ys < 0 || ys >= h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            int64_t xs = xx + kx - 1;
            if (xs < 0 || xs >= w) continue;
            row[ky * 3 + kx] = xplane[ys * w + xs];
          }
        }
      }
  }
  return colT;
}

template <class T>
void conv2d_forward(std::span<const T> x, std::span<const T> w, std::span<const T> b,
                    int64_t ci_n, int64_t co_n, int64_t h, int64_t wdt, std::span<T> out) {
  int64_t hw = h * wdt;
  if (hw <= kConvGemmMaxPixels) {
    int64_t k_n = ci_n * 9;
    std::vector<T> colT = build_colT(x.data(), ci_n, h, wdt);
    parallel_for(co_n, [&](int64_t lo, int64_t hi) {
      for (int64_t co = lo; co < hi; ++co) {
        const T* wrow = w.data() + co * k_n;
        T* orow = out.data() + co * hw;
        for (int64_t p = 0; p < hw; ++p)
          orow[p] = b[static_cast<size_t>(co)] + dot_lanes(colT.data() + p * k_n, wrow, k_n);
      }
    });
    return;
  }
  parallel_for(co_n, [&](int64_t lo, int64_t hi) {
    for (int64_t co = lo; co < hi; ++co) {
      T* oplane = out.data() + co * h * wdt;
      std::fill(oplane, oplane + h * wdt, b[static_cast<size_t>(co)]);
      for (int64_t ci = 0; ci < ci_n; ++ci) {
        const T* xplane = x.data() + ci * h * wdt;
        const T* wtap = w.data() + (co * ci_n + ci) * 9;
        for (int64_t y = 0; y < h; ++y) {
          T* orow = oplane + y * wdt;
          for (int ky = 0; ky < 3; ++ky) {
            int64_t ys = y + ky - 1;
            if (ys < 0 || ys >= h) continue;
            conv2d_row(orow, xplane + ys * wdt, wtap[ky * 3], wtap[ky * 3 + 1], wtap[ky * 3 + 2],
                       wdt);
          }
        }
      }
    }
  });
}

// Gradient halves of the channel-major path; all inner loops stay contiguous.
template <class T>
void conv2d_gemm_backward(std::span<const T> gs, std::span<const T> xs, std::span<const T> ws,
                          int64_t ci_n, int64_t co_n, int64_t h, int64_t wdt, T* dx, T* dw) {
  int64_t hw = h * wdt;
  int64_t k_n = ci_n * 9;
  if (dw != nullptr) {
    std::vector<T> colT = build_colT(xs.data(), ci_n, h, wdt);
    parallel_for(co_n, [&](int64_t lo, int64_t hi) {
      for (int64_t co = lo; co < hi; ++co) {
        T* dwrow = dw + co * k_n;
        const T* grow = gs.data() + co * hw;
        for (int64_t p = 0; p < hw; ++p) axpy(dwrow, colT.data() + p * k_n, grow[p], k_n);
      }
    });
  }
  if (dx != nullptr) {
    std::vector<T> dcolT(static_cast<size_t>(hw * k_n), T(0));
    parallel_for(hw, [&](int64_t lo, int64_t hi) {
      for (int64_t p = lo; p < hi; ++p) {
        T* drow = dcolT.data() + p * k_n;
        for (int64_t co = 0; co < co_n; ++co) {
          T gv = gs[static_cast<size_t>(co * hw + p)];
          if (gv == T(0)) continue;
          axpy(drow, ws.data() + co * k_n, gv, k_n);
        }
      }
    });
    // col2im scatter-add back onto the input planes
    for (int64_t ci = 0; ci < ci_n; ++ci) {
      T* dplane = dx + ci * hw;
      for (int64_t y = 0; y < h; ++y)
        for (int64_t xx = 0; xx < wdt; ++xx) {
          const T* row = dcolT.data() + (y * wdt + xx) * k_n + ci * 9;
          for (int ky = 0; ky < 3; ++ky) {
            int64_t ys = y + ky - 1;
            if (ys < 0 || ys >= h) continue;
            for (int kx = 0; kx < 3; ++kx) {
              int64_t xs = xx + kx - 1;
              if (xs < 0 || xs >= wdt) continue;
              dplane[ys * wdt + xs] += row[ky * 3 + kx];
            }
          }
        }
    }
  }
}

}  // namespace

Var conv2d(Var x, Var w, Var b) {
  check_same_tape(x, w);
  check_same_tape(x, b);
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  check_chw(xv, "conv2d");
  if (wv.rank() != 4 || wv.dim(2) != 3 || wv.dim(3) != 3)
    throw ValidationError("conv2d kernel must be (C_out,C_in,3,3)");
  if (wv.dim(1) != xv.dim(0))
    throw ValidationError("conv2d channel mismatch: input has " + std::to_string(xv.dim(0)) +
                          ", kernel expects " + std::to_string(wv.dim(1)));
  if (bv.rank() != 1 || bv.dim(0) != wv.dim(0))
    throw ValidationError("conv2d bias must be (C_out)");
  if (xv.dtype() != wv.dtype() || xv.dtype() != bv.dtype())
    throw ValidationError("conv2d dtype mismatch");
  int64_t ci_n = xv.dim(0), h = xv.dim(1), wd = xv.dim(2), co_n = wv.dim(0);
  Tensor out = Tensor::zeros({co_n, h, wd}, xv.dtype());
  dispatch_float(xv.dtype(), [&](auto tag) {
    using T = decltype(tag);
    conv2d_forward<T>(sp<T>(xv), sp<T>(wv), sp<T>(bv), ci_n, co_n, h, wd, sp<T>(out));
  });
  bool rg = t.requires_grad(x.id) || t.requires_grad(w.id) || t.requires_grad(b.id);
  return t.emit(std::move(out), rg,
                [ix = x.id, iw = w.id, ib = b.id, ci_n, co_n, h, wd](Tape& t, int32_t self) {
    const Tensor& g = t.grad(self);
    dispatch_float(g.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto gs = sp<T>(g);
      auto xs = sp<T>(t.value(ix));
      auto ws = sp<T>(t.value(iw));
      bool want_dx = t.requires_grad(ix);
      bool want_dw = t.requires_grad(iw);
      if (h * wd <= kConvGemmMaxPixels && (want_dx || want_dw)) {
        T* dx = want_dx ? sp<T>(t.grad_slot(ix)).data() : nullptr;
        T* dw = want_dw ? sp<T>(t.grad_slot(iw)).data() : nullptr;
        conv2d_gemm_backward<T>(gs, xs, ws, ci_n, co_n, h, wd, dx, dw);
      } else {
        if (want_dx) {
          auto d = sp<T>(t.grad_slot(ix));
          parallel_for(ci_n, [&](int64_t lo, int64_t hi) {
            for (int64_t ci = lo; ci < hi; ++ci) {
              T* dplane = d.data() + ci * h * wd;
              for (int64_t co = 0; co < co_n; ++co) {
                const T* gplane = gs.data() + co * h * wd;
                const T* wtap = ws.data() + (co * ci_n + ci) * 9;
                // dX[yy][xx] += w[ky][kx] * dY[yy-(ky-1)][xx-(kx-1)]
                for (int64_t yy = 0; yy < h; ++yy) {
                  T* drow = dplane + yy * wd;
                  for (int ky = 0; ky < 3; ++ky) {
                    int64_t ys = yy - (ky - 1);
                    if (ys < 0 || ys >= h) continue;
                    conv2d_row(drow, gplane + ys * wd, wtap[ky * 3 + 2], wtap[ky * 3 + 1],
                               wtap[ky * 3], wd);
                  }
                }
              }
            }
          });
        }
        if (want_dw) {
          auto d = sp<T>(t.grad_slot(iw));
          parallel_for(co_n, [&](int64_t lo, int64_t hi) {
            for (int64_t co = lo; co < hi; ++co) {
              const T* gplane = gs.data() + co * h * wd;
              for (int64_t ci = 0; ci < ci_n; ++ci) {
                const T* xplane = xs.data() + ci * h * wd;
                T* dtap = d.data() + (co * ci_n + ci) * 9;
                for (int ky = 0; ky < 3; ++ky) {
                  int64_t dy = ky - 1;
                  int64_t y0 = std::max<int64_t>(0, -dy);
                  int64_t y1 = h - std::max<int64_t>(0, dy);
                  T a0 = 0, a1 = 0, a2 = 0;
                  for (int64_t y = y0; y < y1; ++y)
                    conv2d_row_dw(xplane + (y + dy) * wd, gplane + y * wd, wd, a0, a1, a2);
                  dtap[ky * 3] += a0;
                  dtap[ky * 3 + 1] += a1;
                  dtap[ky * 3 + 2] += a2;
                }
              }
            }
          });
        }
      }
      if (t.requires_grad(ib)) {
        auto d = sp<T>(t.grad_slot(ib));
        for (int64_t co = 0; co < co_n; ++co) {
          const T* gplane = gs.data() + co * h * wd;
          T s = T(0);
          for (int64_t i = 0; i < h * wd; ++i) s += gplane[i];
          d[static_cast<size_t>(co)] += s;
        }
      }
    });
  });
}

Var conv1x1(Var x, Var w, Var b) {
  check_same_tape(x, w);
  check_same_tape(x, b);
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  check_chw(xv, "conv1x1");
  if (wv.rank() != 2 || wv.dim(1) != xv.dim(0))
    throw ValidationError("conv1x1 kernel must be (C_out,C_in) matching input channels");
  if (bv.rank() != 1 || bv.dim(0) != wv.dim(0)) throw ValidationError("conv1x1 bias must be (C_out)");
  if (xv.dtype() != wv.dtype() || xv.dtype() != bv.dtype())
    throw ValidationError("conv1x1 dtype mismatch");
  int64_t ci_n = xv.dim(0), h = xv.dim(1), wd = xv.dim(2), co_n = wv.dim(0);
  int64_t p = h * wd;
  Tensor out = Tensor::zeros({co_n, h, wd}, xv.dtype());
  dispatch_float(xv.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto o = sp<T>(out);
    auto xs = sp<T>(xv);
    auto ws = sp<T>(wv);
    auto bs = sp<T>(bv);
    parallel_for(co_n, [&](int64_t lo, int64_t hi) {
      for (int64_t co = lo; co < hi; ++co) {
        T* oplane = o.data() + co * p;
        std::fill(oplane, oplane + p, bs[static_cast<size_t>(co)]);
        for (int64_t ci = 0; ci < ci_n; ++ci) {
          T wvv = ws[static_cast<size_t>(co * ci_n + ci)];
          const T* xplane = xs.data() + ci * p;
          for (int64_t i = 0; i < p; ++i) oplane[i] += wvv * xplane[i];
        }
      }
    });
  });
  bool rg = t.requires_grad(x.id) || t.requires_grad(w.id) || t.requires_grad(b.id);
  return t.emit(std::move(out), rg,
                [ix = x.id, iw = w.id, ib = b.id, ci_n, co_n, p](Tape& t, int32_t self) {
    const Tensor& g = t.grad(self);
    dispatch_float(g.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto gs = sp<T>(g);
      auto xs = sp<T>(t.value(ix));
      auto ws = sp<T>(t.value(iw));
      if (t.requires_grad(ix)) {
        auto d = sp<T>(t.grad_slot(ix));
        parallel_for(ci_n, [&](int64_t lo, int64_t hi) {
          for (int64_t ci = lo; ci < hi; ++ci) {
            T* dplane = d.data() + ci * p;
            for (int64_t co = 0; co < co_n; ++co) {
              T wvv = ws[static_cast<size_t>(co * ci_n + ci)];
              const T* gplane = gs.data() + co * p;
              for (int64_t i = 0; i < p; ++i) dplane[i] += wvv * gplane[i];
            }
          }
        });
      }
      if (t.requires_grad(iw)) {
        auto d = sp<T>(t.grad_slot(iw));
        parallel_for(co_n, [&](int64_t lo, int64_t hi) {
          for (int64_t co = lo; co < hi; ++co) {
            const T* gplane = gs.data() + co * p;
            for (int64_t ci = 0; ci < ci_n; ++ci) {
              const T* xplane = xs.data() + ci * p;
              T s = T(0);
              for (int64_t i = 0; i < p; ++i) s += xplane[i] * gplane[i];
              d[static_cast<size_t>(co * ci_n + ci)] += s;
            }
          }
        });
      }
      if (t.requires_grad(ib)) {
        auto d = sp<T>(t.grad_slot(ib));
        for (int64_t co = 0; co < co_n; ++co) {
          const T* gplane = gs.data() + co * p;
          T s = T(0);
          for (int64_t i = 0; i < p; ++i) s += gplane[i];
          d[static_cast<size_t>(co)] += s;
        }
      }
    });
  });
}

Var avg_pool2(Var x) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  check_chw(xv, "avg_pool2");
  int64_t c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  if (h % 2 != 0 || w % 2 != 0)
    throw ValidationError("avg_pool2 requires even H and W, got " + dims_to_string(xv.dims()));
  int64_t oh = h / 2, ow = w / 2;
  Tensor out = Tensor::zeros({c, oh, ow}, xv.dtype());
  dispatch_float(xv.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto o = sp<T>(out);
    auto xs = sp<T>(xv);
    for (int64_t ch = 0; ch < c; ++ch) {
      const T* xplane = xs.data() + ch * h * w;
      T* oplane = o.data() + ch * oh * ow;
      for (int64_t y = 0; y < oh; ++y) {
        const T* r0 = xplane + (2 * y) * w;
        const T* r1 = xplane + (2 * y + 1) * w;
        T* orow = oplane + y * ow;
        for (int64_t xx = 0; xx < ow; ++xx)
          orow[xx] = (r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1]) * T(0.25);
      }
    }
  });
  return t.emit(std::move(out), t.requires_grad(x.id),
                [ix = x.id, c, h, w, oh, ow](Tape& t, int32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gd = t.grad_slot(ix);
    dispatch_float(gd.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto d = sp<T>(gd);
      auto gs = sp<T>(g);
      for (int64_t ch = 0; ch < c; ++ch) {
        T* dplane = d.data() + ch * h * w;
        const T* gplane = gs.data() + ch * oh * ow;
        for (int64_t y = 0; y < oh; ++y) {
          T* r0 = dplane + (2 * y) * w;
          T* r1 = dplane + (2 * y + 1) * w;
          const T* grow = gplane + y * ow;
          for (int64_t xx = 0; xx < ow; ++xx) {
            T v = grow[xx] * T(0.25);
            r0[2 * xx] += v;
            r0[2 * xx + 1] += v;
            r1[2 * xx] += v;
            r1[2 * xx + 1] += v;
          }
        }
      }
    });
  });
}

Var upsample_nearest2(Var x) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  check_chw(xv, "upsample_nearest2");
  int64_t c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  Tensor out = Tensor::zeros({c, 2 * h, 2 * w}, xv.dtype());
  dispatch_float(xv.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto o = sp<T>(out);
    auto xs = sp<T>(xv);
    for (int64_t ch = 0; ch < c; ++ch) {
      const T* xplane = xs.data() + ch * h * w;
      T* oplane = o.data() + ch * 4 * h * w;
      for (int64_t y = 0; y < h; ++y) {
        T* r0 = oplane + (2 * y) * 2 * w;
        T* r1 = oplane + (2 * y + 1) * 2 * w;
        const T* xrow = xplane + y * w;
        for (int64_t xx = 0; xx < w; ++xx) {
          T v = xrow[xx];
          r0[2 * xx] = v;
          r0[2 * xx + 1] = v;
          r1[2 * xx] = v;
          r1[2 * xx + 1] = v;
        }
      }
    }
  });
  return t.emit(std::move(out), t.requires_grad(x.id),
                [ix = x.id, c, h, w](Tape& t, int32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gd = t.grad_slot(ix);
    dispatch_float(gd.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto d = sp<T>(gd);
      auto gs = sp<T>(g);
      for (int64_t ch = 0; ch < c; ++ch) {
        T* dplane = d.data() + ch * h * w;
        const T* gplane = gs.data() + ch * 4 * h * w;
        for (int64_t y = 0; y < h; ++y) {
          const T* r0 = gplane + (2 * y) * 2 * w;
          const T* r1 = gplane + (2 * y + 1) * 2 * w;
          T* drow = dplane + y * w;
          for (int64_t xx = 0; xx < w; ++xx)
            drow[xx] += r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1];
        }
      }
    });
  });
}

Var pad2d(Var x, int64_t h_to, int64_t w_to) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  check_chw(xv, "pad2d");
  int64_t c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  if (h_to < h || w_to < w) throw ValidationError("pad2d target smaller than input");
  Tensor out = Tensor::zeros({c, h_to, w_to}, xv.dtype());
  dispatch_float(xv.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto o = sp<T>(out);
    auto xs = sp<T>(xv);
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t y = 0; y < h; ++y)
        std::copy_n(xs.data() + (ch * h + y) * w, w, o.data() + (ch * h_to + y) * w_to);
  });
  return t.emit(std::move(out), t.requires_grad(x.id),
                [ix = x.id, c, h, w, h_to, w_to](Tape& t, int32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gd = t.grad_slot(ix);
    dispatch_float(gd.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto d = sp<T>(gd);
      auto gs = sp<T>(g);
      for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t y = 0; y < h; ++y) {
          const T* grow = gs.data() + (ch * h_to + y) * w_to;
          T* drow = d.data() + (ch * h + y) * w;
          for (int64_t xx = 0; xx < w; ++xx) drow[xx] += grow[xx];
        }
    });
  });
}

Var crop2d(Var x, int64_t h_to, int64_t w_to) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  check_chw(xv, "crop2d");
  int64_t c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  if (h_to > h || w_to > w) throw ValidationError("crop2d target larger than input");
  Tensor out = Tensor::zeros({c, h_to, w_to}, xv.dtype());
  dispatch_float(xv.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto o = sp<T>(out);
    auto xs = sp<T>(xv);
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t y = 0; y < h_to; ++y)
        std::copy_n(xs.data() + (ch * h + y) * w, w_to, o.data() + (ch * h_to + y) * w_to);
  });
  return t.emit(std::move(out), t.requires_grad(x.id),
                [ix = x.id, c, h, w, h_to, w_to](Tape& t, int32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gd = t.grad_slot(ix);
    dispatch_float(gd.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto d = sp<T>(gd);
      auto gs = sp<T>(g);
      for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t y = 0; y < h_to; ++y) {
          const T* grow = gs.data() + (ch * h_to + y) * w_to;
          T* drow = d.data() + (ch * h + y) * w;
          for (int64_t xx = 0; xx < w_to; ++xx) drow[xx] += grow[xx];
        }
    });
  });
}

Var mse(Var a, Var b) {
  Var d = sub(a, b);
  Var sq = mul(d, d);
  Var s = sum_all(sq);
  return scale(s, 1.0 / static_cast<double>(a.value().numel()));
}

}  // namespace gridcast
