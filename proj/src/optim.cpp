#include "gridcast/optim.hpp"

#include <cmath>

namespace gridcast {

Adam::Adam(std::vector<Parameter*> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Parameter* p : params_) {
    m_.push_back(Tensor::zeros(p->value.dims(), Dtype::Float64));
    v_.push_back(Tensor::zeros(p->value.dims(), Dtype::Float64));
  }
}

namespace {

template <class T>
bool all_finite(std::span<const T> s) {
  for (T v : s) {
    if (!std::isfinite(static_cast<double>(v))) return false;
  }
  return true;
}

}  // namespace

void Adam::step(double lr) {
  for (Parameter* p : params_) {
    bool ok = p->grad.dtype() == Dtype::Float32 ? all_finite<float>(p->grad.f32())
                                                : all_finite<double>(p->grad.f64());
    if (!ok)
      throw NumericError("non-finite gradient in parameter '" + p->name + "', step aborted");
  }
  t_ += 1;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Parameter* p = params_[i];
    auto m = m_[i].f64();
    auto v = v_[i].f64();
    auto update = [&](auto* val, const auto* g, size_t n) {
      for (size_t j = 0; j < n; ++j) {
        double gj = static_cast<double>(g[j]);
        m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
        v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
        double mhat = m[j] / bc1;
        double vhat = v[j] / bc2;
        val[j] -= static_cast<std::remove_reference_t<decltype(val[j])>>(
            lr * mhat / (std::sqrt(vhat) + eps_));
      }
    };
    if (p->value.dtype() == Dtype::Float32) {
      update(p->value.f32().data(), p->grad.f32().data(), p->value.f32().size());
    } else {
      update(p->value.f64().data(), p->grad.f64().data(), p->value.f64().size());
    }
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

}  // namespace gridcast
