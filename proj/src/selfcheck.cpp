#include "gridcast/selfcheck.hpp"

#include <cmath>
#include <cstdio>
#include <functional>

#include "gridcast/autodiff.hpp"
#include "gridcast/gnn.hpp"
#include "gridcast/graph.hpp"
#include "gridcast/unet.hpp"

namespace gridcast {

namespace {

Tensor rand64(Rng& rng, std::vector<int64_t> dims, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(dims), Dtype::Float64);
  for (auto& v : t.f64()) v = rng.uniform(lo, hi);
  return t;
}

// Straight-line reference implementations, kept free of the kernel code.

Tensor ref_conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
  int64_t ci = x.dim(0), h = x.dim(1), wd = x.dim(2), co = w.dim(0);
  Tensor out = Tensor::zeros({co, h, wd}, Dtype::Float64);
  for (int64_t o = 0; o < co; ++o)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t xx = 0; xx < wd; ++xx) {
        double s = b.get({o});
        for (int64_t c = 0; c < ci; ++c)
          for (int64_t ky = 0; ky < 3; ++ky)
            for (int64_t kx = 0; kx < 3; ++kx) {
              int64_t yy = y + ky - 1, xs = xx + kx - 1;
              if (yy < 0 || yy >= h || xs < 0 || xs >= wd) continue;
              s += w.get({o, c, ky, kx}) * x.get({c, yy, xs});
            }
        out.set({o, y, xx}, s);
      }
  return out;
}

Tensor ref_avg_pool2(const Tensor& x) {
  int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor out = Tensor::zeros({c, h / 2, w / 2}, Dtype::Float64);
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t y = 0; y < h / 2; ++y)
      for (int64_t xx = 0; xx < w / 2; ++xx)
        out.set({ch, y, xx},
                (x.get({ch, 2 * y, 2 * xx}) + x.get({ch, 2 * y, 2 * xx + 1}) +
                 x.get({ch, 2 * y + 1, 2 * xx}) + x.get({ch, 2 * y + 1, 2 * xx + 1})) /
                    4.0);
  return out;
}

Tensor dense_matmul(const Tensor& a, const Tensor& b) {
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

Tensor ref_spmm(const SparseMatrix& s, const Tensor& x) { return dense_matmul(densify(s), x); }

RoadGraph random_graph(Rng& rng, int64_t h, int64_t w, double density) {
  Tensor mask = Tensor::zeros({h, w}, Dtype::Byte);
  for (auto& v : mask.u8()) v = rng.uniform() < density ? 1 : 0;
  return extract_graph(mask);
}

Tensor ref_cheb(const RoadGraph& g, const Tensor& x, const std::vector<Tensor>& weights,
                const Tensor& bias) {
  Tensor l = densify(scaled_laplacian(g));
  int64_t n = g.num_nodes();
  Tensor t_prev2 = Tensor::zeros({n, n}, Dtype::Float64);
  for (int64_t i = 0; i < n; ++i) t_prev2.set({i, i}, 1.0);  // T_0 = I
  Tensor acc = dense_matmul(dense_matmul(t_prev2, x), weights[0]);
  Tensor t_prev = l;  // T_1
  for (size_t k = 1; k < weights.size(); ++k) {
    Tensor term = dense_matmul(dense_matmul(t_prev, x), weights[k]);
    auto a = acc.f64();
    auto tv = term.f64();
    for (size_t i = 0; i < a.size(); ++i) a[i] += tv[i];
    if (k + 1 < weights.size()) {
      Tensor t_next = dense_matmul(l, t_prev);
      auto nx = t_next.f64();
      auto p2 = t_prev2.f64();
      for (size_t i = 0; i < nx.size(); ++i) nx[i] = 2.0 * nx[i] - p2[i];
      t_prev2 = t_prev;
      t_prev = t_next;
    }
  }
  auto a = acc.f64();
  for (int64_t i = 0; i < acc.dim(0); ++i)
    for (int64_t j = 0; j < acc.dim(1); ++j) a[static_cast<size_t>(i * acc.dim(1) + j)] += bias.get({j});
  return acc;
}

Tensor ref_sage(const RoadGraph& g, const Tensor& x, const Tensor& w_self, const Tensor& w_neigh,
                const Tensor& bias) {
  int64_t n = g.num_nodes(), f = x.dim(1);
  Tensor neigh = Tensor::zeros({n, f}, Dtype::Float64);
  for (int64_t i = 0; i < n; ++i) {
    int64_t lo = g.adjacency.row_ptr[static_cast<size_t>(i)];
    int64_t hi = g.adjacency.row_ptr[static_cast<size_t>(i) + 1];
    if (lo == hi) continue;
    for (int64_t p = lo; p < hi; ++p)
      for (int64_t j = 0; j < f; ++j)
        neigh.set({i, j}, neigh.get({i, j}) + x.get({g.adjacency.col_idx[static_cast<size_t>(p)], j}));
    for (int64_t j = 0; j < f; ++j)
      neigh.set({i, j}, neigh.get({i, j}) / static_cast<double>(hi - lo));
  }
  Tensor out = dense_matmul(x, w_self);
  Tensor nt = dense_matmul(neigh, w_neigh);
  auto o = out.f64();
  auto nv = nt.f64();
  for (size_t i = 0; i < o.size(); ++i) o[i] += nv[i];
  for (int64_t i = 0; i < out.dim(0); ++i)
    for (int64_t j = 0; j < out.dim(1); ++j)
      o[static_cast<size_t>(i * out.dim(1) + j)] += bias.get({j});
  return out;
}

Tensor ref_sg(const RoadGraph& g, const Tensor& x, const Tensor& w, const Tensor& bias, int hops) {
  Tensor s = densify(normalized_adjacency(g));
  Tensor h = x;
  for (int i = 0; i < hops; ++i) h = dense_matmul(s, h);
  Tensor out = dense_matmul(h, w);
  auto o = out.f64();
  for (int64_t i = 0; i < out.dim(0); ++i)
    for (int64_t j = 0; j < out.dim(1); ++j)
      o[static_cast<size_t>(i * out.dim(1) + j)] += bias.get({j});
  return out;
}

double fd_check(std::vector<Parameter*> params, const std::function<Var(Tape&)>& make_loss,
                double h = 1e-5) {
  Tape t;
  for (Parameter* p : params) p->zero_grad();
  Var loss = make_loss(t);
  t.backward(loss);
  std::vector<std::vector<double>> ad;
  for (Parameter* p : params)
    ad.emplace_back(p->grad.f64().begin(), p->grad.f64().end());
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
      double rel = std::abs(ad[pi][j] - fd) / std::max({std::abs(ad[pi][j]), std::abs(fd), 1e-6});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace

std::vector<CheckResult> run_selfcheck(const std::string& perturb) {
  std::vector<CheckResult> results;
  auto record = [&](const std::string& name, double err, double tol) {
    if (name == perturb) err += 1e-3;  // honest negative control through the same path
    results.push_back({name, err, tol, err < tol});
  };

  Rng rng(20260809);

  // dense-oracle agreement
  {
    Tensor x = rand64(rng, {3, 5, 6});
    Tensor w = rand64(rng, {2, 3, 3, 3});
    Tensor b = rand64(rng, {2});
    Tape t;
    Var y = conv2d(t.constant(x), t.constant(w), t.constant(b));
    record("oracle_conv2d", max_abs_diff(y.value(), ref_conv2d(x, w, b)), 1e-12);
  }
  {
    Tensor x = rand64(rng, {2, 6, 4});
    Tape t;
    Var y = avg_pool2(t.constant(x));
    record("oracle_avg_pool2", max_abs_diff(y.value(), ref_avg_pool2(x)), 1e-12);
  }
  {
    auto g = random_graph(rng, 4, 4, 0.6);
    Tensor x = rand64(rng, {g.num_nodes(), 3});
    Tape t;
    Var y = spmm(g.adjacency, t.constant(x));
    record("oracle_spmm", max_abs_diff(y.value(), ref_spmm(g.adjacency, x)), 1e-12);
  }
  {
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      auto g = random_graph(rng, 3, 4, 0.6);
      if (g.num_nodes() == 0) continue;
      int64_t f_in = 3, f_out = 2;
      ChebConvLayer layer("cheb", rng, f_in, f_out, 3, Dtype::Float64);
      Tensor x = rand64(rng, {g.num_nodes(), f_in});
      Tape t;
      Var y = layer.forward(t, t.constant(x), scaled_laplacian(g));
      std::vector<Tensor> ws;
      for (auto& p : layer.weights) ws.push_back(p.value);
      worst = std::max(worst, max_abs_diff(y.value(), ref_cheb(g, x, ws, layer.bias.value)));
    }
    record("oracle_cheb", worst, 1e-10);
  }
  {
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      auto g = random_graph(rng, 3, 4, 0.6);
      if (g.num_nodes() == 0) continue;
      SageConvLayer layer("sage", rng, 3, 2, Dtype::Float64);
      Tensor x = rand64(rng, {g.num_nodes(), 3});
      Tape t;
      Var y = layer.forward(t, t.constant(x), mean_adjacency(g));
      worst = std::max(worst, max_abs_diff(y.value(), ref_sage(g, x, layer.w_self.value,
                                                               layer.w_neigh.value,
                                                               layer.bias.value)));
    }
    record("oracle_sage", worst, 1e-10);
  }
  {
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      auto g = random_graph(rng, 3, 4, 0.6);
      if (g.num_nodes() == 0) continue;
      SgConvLayer layer("sg", rng, 3, 2, 5, Dtype::Float64);
      Tensor x = rand64(rng, {g.num_nodes(), 3});
      Tape t;
      Var y = layer.forward(t, t.constant(x), normalized_adjacency(g));
      worst = std::max(worst,
                       max_abs_diff(y.value(), ref_sg(g, x, layer.weight.value, layer.bias.value, 5)));
    }
    record("oracle_sg", worst, 1e-10);
  }

  // finite-difference gradients per op
  auto fd_record = [&](const std::string& name, std::vector<Parameter*> ps,
                       const std::function<Var(Tape&)>& f) {
    record(name, fd_check(ps, f), 1e-4);
  };
  {
    Parameter a("a", rand64(rng, {3, 4}));
    Parameter b("b", rand64(rng, {3, 4}));
    Tensor tgt = rand64(rng, {3, 4});
    fd_record("grad_add", {&a, &b},
              [&](Tape& t) { return mse(add(t.leaf(a), t.leaf(b)), t.constant(tgt)); });
    fd_record("grad_sub", {&a, &b},
              [&](Tape& t) { return mse(sub(t.leaf(a), t.leaf(b)), t.constant(tgt)); });
    fd_record("grad_mul", {&a, &b},
              [&](Tape& t) { return mse(mul(t.leaf(a), t.leaf(b)), t.constant(tgt)); });
    fd_record("grad_scale", {&a}, [&](Tape& t) { return sum_all(scale(t.leaf(a), 0.37)); });
    Parameter rp("rp", rand64(rng, {12}, 0.25, 1.0));
    Parameter rn("rn", rand64(rng, {12}, -1.0, -0.25));
    Tensor rt = rand64(rng, {12});
    fd_record("grad_relu", {&rp, &rn},
              [&](Tape& t) { return mse(relu(sub(t.leaf(rp), t.leaf(rn))), t.constant(rt)); });
    Parameter m1("m1", rand64(rng, {3, 5}));
    Parameter m2("m2", rand64(rng, {5, 2}));
    Tensor mt = rand64(rng, {3, 2});
    fd_record("grad_matmul", {&m1, &m2},
              [&](Tape& t) { return mse(matmul(t.leaf(m1), t.leaf(m2)), t.constant(mt)); });
    Parameter rv("rv", rand64(rng, {4}));
    Parameter rx("rx", rand64(rng, {3, 4}));
    fd_record("grad_add_rowvec", {&rx, &rv},
              [&](Tape& t) { return mse(add_rowvec(t.leaf(rx), t.leaf(rv)), t.constant(tgt)); });
    Parameter cx("cx", rand64(rng, {2, 4, 4}));
    Parameter cw("cw", rand64(rng, {3, 2, 3, 3}));
    Parameter cb("cb", rand64(rng, {3}));
    Tensor ct = rand64(rng, {3, 4, 4});
    fd_record("grad_conv2d", {&cx, &cw, &cb}, [&](Tape& t) {
      return mse(conv2d(t.leaf(cx), t.leaf(cw), t.leaf(cb)), t.constant(ct));
    });
    Parameter pw("pw", rand64(rng, {3, 2}));
    fd_record("grad_conv1x1", {&cx, &pw, &cb}, [&](Tape& t) {
      return mse(conv1x1(t.leaf(cx), t.leaf(pw), t.leaf(cb)), t.constant(ct));
    });
    Tensor pt = rand64(rng, {2, 2, 2});
    fd_record("grad_avg_pool2", {&cx},
              [&](Tape& t) { return mse(avg_pool2(t.leaf(cx)), t.constant(pt)); });
    Tensor ut = rand64(rng, {2, 8, 8});
    fd_record("grad_upsample", {&cx},
              [&](Tape& t) { return mse(upsample_nearest2(t.leaf(cx)), t.constant(ut)); });
    Parameter cy("cy", rand64(rng, {1, 4, 4}));
    Tensor cct = rand64(rng, {3, 4, 4});
    fd_record("grad_concat", {&cx, &cy},
              [&](Tape& t) { return mse(concat_ch(t.leaf(cx), t.leaf(cy)), t.constant(cct)); });
    auto g = random_graph(rng, 3, 4, 0.6);
    Parameter sx("sx", rand64(rng, {g.num_nodes(), 3}));
    Tensor st = rand64(rng, {g.num_nodes(), 3});
    fd_record("grad_spmm", {&sx},
              [&](Tape& t) { return mse(spmm(g.adjacency, t.leaf(sx)), t.constant(st)); });
  }

  // reduced full models
  {
    UNetConfig cfg;
    cfg.depth = 2;
    cfg.base_channels = 3;
    cfg.in_channels = 4;
    cfg.out_channels = 3;
    cfg.dtype = Dtype::Float64;
    // seeds chosen so no ReLU pre-activation sits within the probe step of
    // its kink; the check is exact for the piecewise-quadratic loss otherwise
    UNet net(cfg, 10);
    Rng data_rng(1010);
    Tensor input = rand64(data_rng, {4, 8, 8});
    Tensor target = rand64(data_rng, {3, 8, 8});
    record("grad_unet", fd_check(net.parameters(), [&](Tape& t) {
             return mse(net.forward(t, input).prediction, t.constant(target));
           }),
           1e-4);
  }
  {
    GnnConfig cfg;
    cfg.in_dim = 5;
    cfg.hidden = 4;
    cfg.blocks = 1;
    cfg.out_dim = 3;
    cfg.dtype = Dtype::Float64;
    Rng graph_rng(42);
    RoadGraph g;
    do {
      g = random_graph(graph_rng, 3, 3, 0.7);
    } while (g.num_nodes() < 2);
    GraphOperators ops = build_operators(g);
    Rng data_rng(43);
    Tensor x = rand64(data_rng, {g.num_nodes(), 5});
    Tensor target = rand64(data_rng, {g.num_nodes(), 3});
    GraphEnsembleNet net(cfg, 11);
    record("grad_graph_ensemble_net", fd_check(net.parameters(), [&](Tape& t) {
             return mse(net.forward(t, t.constant(x), ops), t.constant(target));
           }),
           1e-4);
    GraphResNet res(cfg, 12);
    record("grad_graph_resnet", fd_check(res.parameters(), [&](Tape& t) {
             return mse(res.forward(t, t.constant(x), ops), t.constant(target));
           }),
           1e-4);
  }

  return results;
}

std::string format_selfcheck(const std::vector<CheckResult>& results) {
  std::string out;
  char buf[160];
  for (const CheckResult& r : results) {
    std::snprintf(buf, sizeof(buf), "%-26s max_err %.3e tol %.0e %s\n", r.name.c_str(), r.max_err,
                  r.tolerance, r.pass ? "PASS" : "FAIL");
    out += buf;
  }
  return out;
}

}  // namespace gridcast
