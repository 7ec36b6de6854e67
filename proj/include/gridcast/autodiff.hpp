#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gridcast/sparse.hpp"
#include "gridcast/tensor.hpp"

namespace gridcast {

// Trainable tensor with a persistent gradient buffer. Gradients accumulate
// across backward() calls until zero_grad().
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.dims(), value.dtype())) {
    if (!is_float_dtype(value.dtype()))
      throw ValidationError("parameter '" + name + "' must be a float tensor");
  }

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int32_t id = -1;

  const Tensor& value() const;
};

// Define-by-run reverse-mode tape. Nodes are recorded in evaluation order,
// which is a topological order, so the backward sweep walks ids descending.
// Shapes are fixed once recorded; build a fresh tape per training step.
class Tape {
 public:
  Var constant(Tensor value);          // leaf without gradient
  Var leaf(Parameter& p);              // leaf bound to a parameter

  void backward(Var loss);             // loss must be scalar; accumulates into Parameter::grad

  const Tensor& value(int32_t id) const { return nodes_[static_cast<size_t>(id)].value; }
  size_t size() const { return nodes_.size(); }

  // Internals used by the op implementations.
  using BackwardFn = std::function<void(Tape&, int32_t)>;
  Var emit(Tensor value, bool requires_grad, BackwardFn bwd);
  bool requires_grad(int32_t id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
  const Tensor& grad(int32_t id) const;
  Tensor& grad_slot(int32_t id);       // lazily allocates a zero gradient
  bool grad_live(int32_t id) const { return nodes_[static_cast<size_t>(id)].grad_live; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool grad_live = false;
    BackwardFn backward;
    Parameter* bound = nullptr;
  };
  std::vector<Node> nodes_;
};

// Elementwise and structural ops. All check dtype/shape and are differentiable
// in every float input unless noted.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var relu(Var a);
Var sum_all(Var a);                          // -> (1)
Var reshape(Var a, std::vector<int64_t> dims);
Var concat_ch(Var a, Var b);                 // (C1,H,W) + (C2,H,W) -> (C1+C2,H,W)
Var detach(Var a);                           // value copy, gradient barrier

// Linear algebra.
Var matmul(Var a, Var b);                    // (N,K) x (K,M)
Var add_rowvec(Var x, Var b);                // (N,F) + (F), broadcast over rows
Var spmm(const SparseMatrix& s, Var x);      // sparse (M,N) times dense (N,F)

// Grid ops on (C,H,W) tensors.
Var conv2d(Var x, Var w, Var b);             // 3x3 kernel, stride 1, zero pad 1
Var conv1x1(Var x, Var w, Var b);            // w is (C_out, C_in)
Var avg_pool2(Var x);                        // H,W must be even
Var upsample_nearest2(Var x);
Var pad2d(Var x, int64_t h_to, int64_t w_to);   // zero pad bottom/right
Var crop2d(Var x, int64_t h_to, int64_t w_to);  // keep top-left

// mean((a-b)^2) over all elements, as a tape subgraph.
Var mse(Var a, Var b);

}  // namespace gridcast
