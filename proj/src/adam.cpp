#include "flexpose/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace flexpose::diff {

void Adam::attach(Tensor* param) {
  if (!param) throw std::invalid_argument("Adam: null parameter");
  params_.push_back(param);
  m_.emplace_back(param->shape);
  v_.emplace_back(param->shape);
}

void Adam::step(const std::vector<const Tensor*>& grads) {
  if (grads.size() != params_.size())
    throw std::invalid_argument("Adam: gradient list does not match params");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t p = 0; p < params_.size(); ++p) {
    Tensor& w = *params_[p];
    Tensor& m = m_[p];
    Tensor& v = v_[p];
    const Tensor* g = grads[p];
    if (g && !g->data.empty() && g->shape != w.shape)
      throw std::invalid_argument("Adam: gradient shape mismatch");
    const int64_t n = w.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
      const double gi = (g && !g->data.empty()) ? g->data[i] : 0.0;
      m.data[i] = beta1_ * m.data[i] + (1.0 - beta1_) * gi;
      v.data[i] = beta2_ * v.data[i] + (1.0 - beta2_) * gi * gi;
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      w.data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace flexpose::diff
