#pragma once

#include <memory>
#include <string>
#include <vector>

#include "gridcast/autodiff.hpp"
#include "gridcast/graph.hpp"

namespace gridcast {

Tensor glorot_uniform(Rng& rng, int64_t fan_in, int64_t fan_out, std::vector<int64_t> dims,
                      Dtype dt);

// Chebyshev spectral filter: sum_k T_k(L~) x W_k with the usual recurrence
// T_0 = I, T_1 = L~, T_k = 2 L~ T_{k-1} - T_{k-2}.
struct ChebConvLayer {
  int order;
  std::vector<Parameter> weights;  // order matrices (F_in,F_out)
  Parameter bias;

  ChebConvLayer(const std::string& name, Rng& rng, int64_t f_in, int64_t f_out, int k, Dtype dt);
  Var forward(Tape& t, Var x, const SparseMatrix& l_tilde);
  void collect(std::vector<Parameter*>& out);
};

// Mean-aggregator variant: x W_self + meanNeigh(x) W_neigh + b.
struct SageConvLayer {
  Parameter w_self, w_neigh, bias;

  SageConvLayer(const std::string& name, Rng& rng, int64_t f_in, int64_t f_out, Dtype dt);
  Var forward(Tape& t, Var x, const SparseMatrix& mean_adj);
  void collect(std::vector<Parameter*>& out);
};

// Simplified graph convolution: S^K x W + b with K propagation steps.
struct SgConvLayer {
  int hops;
  Parameter weight, bias;

  SgConvLayer(const std::string& name, Rng& rng, int64_t f_in, int64_t f_out, int k, Dtype dt);
  Var forward(Tape& t, Var x, const SparseMatrix& s_hat);
  void collect(std::vector<Parameter*>& out);
};

struct EnsembleBlock {
  ChebConvLayer cheb;
  SageConvLayer sage;
  SgConvLayer sg;

  EnsembleBlock(const std::string& name, Rng& rng, int64_t f_in, int64_t f_out, int cheb_k,
                int sg_k, Dtype dt);
  Var forward(Tape& t, Var x, const GraphOperators& ops);
  void collect(std::vector<Parameter*>& out);
};

struct LinearLayer {
  Parameter weight, bias;

  LinearLayer(const std::string& name, Rng& rng, int64_t f_in, int64_t f_out, Dtype dt);
  Var forward(Tape& t, Var x);
  void collect(std::vector<Parameter*>& out);
};

struct GnnConfig {
  int64_t in_dim = 91;
  int64_t hidden = 64;
  int blocks = 4;
  int64_t out_dim = 96;
  int cheb_k = 3;
  int sg_k = 5;
  Dtype dtype = Dtype::Float32;
};

// Input projection, then per block h <- h + relu(block(h)), then output
// projection. With zero block weights the residuals pass the projection
// composition through unchanged.
class GraphEnsembleNet {
 public:
  GraphEnsembleNet(const GnnConfig& cfg, uint64_t seed);

  Var forward(Tape& t, Var x, const GraphOperators& ops);
  std::vector<Parameter*> parameters();
  const GnnConfig& config() const { return cfg_; }

 private:
  GnnConfig cfg_;
  std::unique_ptr<LinearLayer> in_proj_;
  std::vector<EnsembleBlock> blocks_;
  std::unique_ptr<LinearLayer> out_proj_;
};

// Same skeleton with a single Chebyshev filter per block.
class GraphResNet {
 public:
  GraphResNet(const GnnConfig& cfg, uint64_t seed);

  Var forward(Tape& t, Var x, const GraphOperators& ops);
  std::vector<Parameter*> parameters();
  const GnnConfig& config() const { return cfg_; }

 private:
  GnnConfig cfg_;
  std::unique_ptr<LinearLayer> in_proj_;
  std::vector<ChebConvLayer> blocks_;
  std::unique_ptr<LinearLayer> out_proj_;
};

int64_t parameter_count(std::vector<Parameter*> params);

}  // namespace gridcast
