#include "gridcast/gnn.hpp"

#include <cmath>

namespace gridcast {

Tensor glorot_uniform(Rng& rng, int64_t fan_in, int64_t fan_out, std::vector<int64_t> dims,
                      Dtype dt) {
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t = Tensor::zeros(std::move(dims), dt);
  if (dt == Dtype::Float32) {
    for (auto& v : t.f32()) v = static_cast<float>(rng.uniform(-limit, limit));
  } else {
    for (auto& v : t.f64()) v = rng.uniform(-limit, limit);
  }
  return t;
}

ChebConvLayer::ChebConvLayer(const std::string& name, Rng& rng, int64_t f_in, int64_t f_out,
                             int k, Dtype dt)
    : order(k), bias(name + ".bias", Tensor::zeros({f_out}, dt)) {
  if (k < 1) throw ValidationError("chebyshev order must be >= 1");
  weights.reserve(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i)
    weights.emplace_back(name + ".w" + std::to_string(i),
                         glorot_uniform(rng, f_in, f_out, {f_in, f_out}, dt));
}

Var ChebConvLayer::forward(Tape& t, Var x, const SparseMatrix& l_tilde) {
  Var t_prev2 = x;  // T_0 x
  Var acc = matmul(x, t.leaf(weights[0]));
  if (order > 1) {
    Var t_prev = spmm(l_tilde, x);  // T_1 x
    acc = add(acc, matmul(t_prev, t.leaf(weights[1])));
    for (int k = 2; k < order; ++k) {
      Var t_k = sub(scale(spmm(l_tilde, t_prev), 2.0), t_prev2);
      acc = add(acc, matmul(t_k, t.leaf(weights[static_cast<size_t>(k)])));
      t_prev2 = t_prev;
      t_prev = t_k;
    }
  }
  return add_rowvec(acc, t.leaf(bias));
}

void ChebConvLayer::collect(std::vector<Parameter*>& out) {
  for (Parameter& w : weights) out.push_back(&w);
  out.push_back(&bias);
}

SageConvLayer::SageConvLayer(const std::string& name, Rng& rng, int64_t f_in, int64_t f_out,
                             Dtype dt)
    : w_self(name + ".w_self", glorot_uniform(rng, f_in, f_out, {f_in, f_out}, dt)),
      w_neigh(name + ".w_neigh", glorot_uniform(rng, f_in, f_out, {f_in, f_out}, dt)),
      bias(name + ".bias", Tensor::zeros({f_out}, dt)) {}

Var SageConvLayer::forward(Tape& t, Var x, const SparseMatrix& mean_adj) {
  Var self_term = matmul(x, t.leaf(w_self));
  Var neigh_term = matmul(spmm(mean_adj, x), t.leaf(w_neigh));
  return add_rowvec(add(self_term, neigh_term), t.leaf(bias));
}

void SageConvLayer::collect(std::vector<Parameter*>& out) {
  out.push_back(&w_self);
  out.push_back(&w_neigh);
  out.push_back(&bias);
}

SgConvLayer::SgConvLayer(const std::string& name, Rng& rng, int64_t f_in, int64_t f_out, int k,
                         Dtype dt)
    : hops(k),
      weight(name + ".weight", glorot_uniform(rng, f_in, f_out, {f_in, f_out}, dt)),
      bias(name + ".bias", Tensor::zeros({f_out}, dt)) {
  if (k < 1) throw ValidationError("sgconv needs at least one propagation step");
}

Var SgConvLayer::forward(Tape& t, Var x, const SparseMatrix& s_hat) {
  Var h = x;
  for (int i = 0; i < hops; ++i) h = spmm(s_hat, h);
  return add_rowvec(matmul(h, t.leaf(weight)),
                    t.leaf(bias));
}

void SgConvLayer::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

EnsembleBlock::EnsembleBlock(const std::string& name, Rng& rng, int64_t f_in, int64_t f_out,
                             int cheb_k, int sg_k, Dtype dt)
    : cheb(name + ".cheb", rng, f_in, f_out, cheb_k, dt),
      sage(name + ".sage", rng, f_in, f_out, dt),
      sg(name + ".sg", rng, f_in, f_out, sg_k, dt) {}

Var EnsembleBlock::forward(Tape& t, Var x, const GraphOperators& ops) {
  Var a = cheb.forward(t, x, ops.l_tilde);
  Var b = sage.forward(t, x, ops.mean_adj);
  Var c = sg.forward(t, x, ops.s_hat);
  return scale(add(add(a, b), c), 1.0 / 3.0);
}

void EnsembleBlock::collect(std::vector<Parameter*>& out) {
  cheb.collect(out);
  sage.collect(out);
  sg.collect(out);
}

LinearLayer::LinearLayer(const std::string& name, Rng& rng, int64_t f_in, int64_t f_out, Dtype dt)
    : weight(name + ".weight", glorot_uniform(rng, f_in, f_out, {f_in, f_out}, dt)),
      bias(name + ".bias", Tensor::zeros({f_out}, dt)) {}

Var LinearLayer::forward(Tape& t, Var x) {
  return add_rowvec(matmul(x, t.leaf(weight)),
                    t.leaf(bias));
}

void LinearLayer::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

GraphEnsembleNet::GraphEnsembleNet(const GnnConfig& cfg, uint64_t seed) : cfg_(cfg) {
  Rng rng(seed);
  in_proj_ = std::make_unique<LinearLayer>("in_proj", rng, cfg.in_dim, cfg.hidden, cfg.dtype);
  blocks_.reserve(static_cast<size_t>(cfg.blocks));
  for (int i = 0; i < cfg.blocks; ++i)
    blocks_.emplace_back("block" + std::to_string(i), rng, cfg.hidden, cfg.hidden, cfg.cheb_k,
                         cfg.sg_k, cfg.dtype);
  out_proj_ = std::make_unique<LinearLayer>("out_proj", rng, cfg.hidden, cfg.out_dim, cfg.dtype);
}

Var GraphEnsembleNet::forward(Tape& t, Var x, const GraphOperators& ops) {
  if (x.value().rank() != 2 || x.value().dim(1) != cfg_.in_dim)
    throw ValidationError("graph ensemble net expects (N," + std::to_string(cfg_.in_dim) +
                          ") features, got " + dims_to_string(x.value().dims()));
  Var h = in_proj_->forward(t, x);
  for (EnsembleBlock& block : blocks_) h = add(h, relu(block.forward(t, h, ops)));
  return out_proj_->forward(t, h);
}

std::vector<Parameter*> GraphEnsembleNet::parameters() {
  std::vector<Parameter*> out;
  in_proj_->collect(out);
  for (EnsembleBlock& b : blocks_) b.collect(out);
  out_proj_->collect(out);
  return out;
}

GraphResNet::GraphResNet(const GnnConfig& cfg, uint64_t seed) : cfg_(cfg) {
  Rng rng(seed);
  in_proj_ = std::make_unique<LinearLayer>("in_proj", rng, cfg.in_dim, cfg.hidden, cfg.dtype);
  blocks_.reserve(static_cast<size_t>(cfg.blocks));
  for (int i = 0; i < cfg.blocks; ++i)
    blocks_.emplace_back("block" + std::to_string(i), rng, cfg.hidden, cfg.hidden, cfg.cheb_k,
                         cfg.dtype);
  out_proj_ = std::make_unique<LinearLayer>("out_proj", rng, cfg.hidden, cfg.out_dim, cfg.dtype);
}

Var GraphResNet::forward(Tape& t, Var x, const GraphOperators& ops) {
  if (x.value().rank() != 2 || x.value().dim(1) != cfg_.in_dim)
    throw ValidationError("graph resnet expects (N," + std::to_string(cfg_.in_dim) +
                          ") features, got " + dims_to_string(x.value().dims()));
  Var h = in_proj_->forward(t, x);
  for (ChebConvLayer& block : blocks_) h = add(h, relu(block.forward(t, h, ops.l_tilde)));
  return out_proj_->forward(t, h);
}

std::vector<Parameter*> GraphResNet::parameters() {
  std::vector<Parameter*> out;
  in_proj_->collect(out);
  for (ChebConvLayer& b : blocks_) b.collect(out);
  out_proj_->collect(out);
  return out;
}

int64_t parameter_count(std::vector<Parameter*> params) {
  int64_t n = 0;
  for (Parameter* p : params) n += p->value.numel();
  return n;
}

}  // namespace gridcast
