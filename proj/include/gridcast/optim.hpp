#pragma once

#include <vector>

#include "gridcast/autodiff.hpp"

namespace gridcast {

// Bias-corrected adaptive-moment optimizer. Moment buffers are allocated per
// parameter on construction; the parameter objects must outlive the optimizer
// and must not be moved.
class Adam {
 public:
  explicit Adam(std::vector<Parameter*> params, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

  // One update step at the given learning rate. Throws NumericError before
  // touching any parameter if a gradient is non-finite.
  void step(double lr);
  void zero_grad();
  int64_t steps_taken() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

}  // namespace gridcast
