#pragma once

#include "edgetune/tape.hpp"

namespace edgetune {

// Cosine decay to zero over total_steps, with an optional linear warmup.
inline double cosine_lr(double base, i64 step, i64 total_steps, i64 warmup_steps = 0) {
  if (total_steps <= 0) return base;
  if (warmup_steps > 0 && step < warmup_steps)
    return base * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  const double t = static_cast<double>(step - warmup_steps) /
                   static_cast<double>(std::max<i64>(1, total_steps - warmup_steps));
  return base * 0.5 * (1.0 + std::cos(M_PI * std::min(1.0, t)));
}

// Standard Adam with bias correction. The learning rate is supplied per step
// so schedules stay outside.
template <typename S>
class Adam {
 public:
  Adam(std::vector<Tensor<S>*> params, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (Tensor<S>* p : params_) {
      m_.push_back(Tensor<S>::zeros(p->shape()));
      v_.push_back(Tensor<S>::zeros(p->shape()));
    }
  }

  void step(const GradMap<S>& grads, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor<S>& p = *params_[i];
      const Tensor<S> g = grads.at(p);
      auto pd = p.mutable_data();
      auto md = m_[i].mutable_data();
      auto vd = v_[i].mutable_data();
      auto gd = g.data();
      for (std::size_t j = 0; j < pd.size(); ++j) {
        const double gj = static_cast<double>(gd[j]);
        const double mj = beta1_ * static_cast<double>(md[j]) + (1.0 - beta1_) * gj;
        const double vj = beta2_ * static_cast<double>(vd[j]) + (1.0 - beta2_) * gj * gj;
        md[j] = static_cast<S>(mj);
        vd[j] = static_cast<S>(vj);
        const double mhat = mj / bc1;
        const double vhat = vj / bc2;
        pd[j] = static_cast<S>(static_cast<double>(pd[j]) - lr * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  i64 steps_taken() const { return t_; }

 private:
  std::vector<Tensor<S>*> params_;
  double beta1_, beta2_, eps_;
  std::vector<Tensor<S>> m_, v_;
  i64 t_ = 0;
};

}  // namespace edgetune
