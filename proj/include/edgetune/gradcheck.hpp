#pragma once

#include <algorithm>
#include <span>

#include "edgetune/ops.hpp"

namespace edgetune {

// Central finite-difference check of reverse-mode gradients.
//
// `loss_fn` must be a deterministic pure function of the current parameter
// values, returning a scalar Tensor. It is evaluated once with the parameters
// watched on a tape (autodiff pass) and then 2x per parameter element with
// perturbed values (difference pass). Returns
//   max over elements of |g_auto - g_fd| / max(|g_auto|, |g_fd|, 1e-12).
//
// Dead parameters report zero error. A parameter whose true gradient is
// identically zero but which still enters the computation (the attention key
// bias: softmax is shift-invariant per score row) yields autodiff residue and
// difference noise at roundoff scale; both sides below `dead_tol` with the
// deadness confirmed at a coarse step count as an exact match.
template <typename S, typename LossFn>
double finite_diff_check(LossFn&& loss_fn, std::span<Tensor<S>* const> params, S step = S(1e-5),
                         double dead_tol = 1e-9) {
  Tape<S> tape;
  for (Tensor<S>* p : params) tape.watch(*p);
  Tensor<S> loss = loss_fn();
  if (loss.numel() != 1)
    throw ContractError("finite_diff_check: loss must be scalar, got " + shape_str(loss.shape()));
  auto grads = backward(loss, tape);
  std::vector<Tensor<S>> auto_grads;
  auto_grads.reserve(params.size());
  for (Tensor<S>* p : params) auto_grads.push_back(grads.at(*p));
  for (Tensor<S>* p : params) p->detach();

  double max_rel = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<S>& p = *params[pi];
    auto data = p.mutable_data();
    for (i64 i = 0; i < p.numel(); ++i) {
      const S saved = data[static_cast<std::size_t>(i)];
      auto diff_at = [&](S h) {
        data[static_cast<std::size_t>(i)] = saved + h;
        const double f_plus = static_cast<double>(loss_fn().value());
        data[static_cast<std::size_t>(i)] = saved - h;
        const double f_minus = static_cast<double>(loss_fn().value());
        data[static_cast<std::size_t>(i)] = saved;
        return (f_plus - f_minus) / (2.0 * static_cast<double>(h));
      };
      const double g_fd = diff_at(step);
      const double g_auto = static_cast<double>(auto_grads[pi].at(i));
      if (std::fabs(g_auto) < dead_tol && std::fabs(g_fd) < std::sqrt(dead_tol) &&
          std::fabs(diff_at(S(1e-2))) < dead_tol)
        continue;
      const double rel =
          std::fabs(g_auto - g_fd) / std::max({std::fabs(g_auto), std::fabs(g_fd), 1e-12});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace edgetune
