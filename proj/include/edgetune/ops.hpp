#pragma once

#include <cmath>
#include <initializer_list>

#include "edgetune/macs.hpp"
#include "edgetune/tape.hpp"
#include "edgetune/tensor.hpp"

// Expression-style free functions over Tensor<S>. Every op allocates a fresh
// output, counts its matrix-product MACs, and records a backward node when an
// input is tape-attached. Reductions accumulate left-to-right.

namespace edgetune {

namespace detail {

template <typename S>
Tape<S>* common_tape(std::initializer_list<const Tensor<S>*> ts) {
  Tape<S>* tape = nullptr;
  for (const Tensor<S>* t : ts) {
    if (!t->on_tape()) continue;
    if (tape && tape != t->tape()) throw ContractError("operands recorded on different tapes");
    tape = t->tape();
  }
  return tape;
}

template <typename S>
void require_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

}  // namespace detail

// ---- matmul ----------------------------------------------------------------

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul: expects 2-D operands, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const i64 m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " * " +
                     shape_str(b.shape()));
  Tensor<S> out({m, n});
  out.mat_mut().noalias() = a.mat() * b.mat();
  macs::add(static_cast<u64>(m) * static_cast<u64>(k) * static_cast<u64>(n));
  if (Tape<S>* tape = detail::common_tape<S>({&a, &b})) {
    int an = a.on_tape() ? a.node() : -1;
    int bn = b.on_tape() ? b.node() : -1;
    Tensor<S> av = a, bv = b;
    int id = tape->push_op([an, bn, av, bv](Tape<S>& tp, const Tensor<S>& g) {
      if (an >= 0) {
        Tensor<S> ga(av.shape());
        ga.mat_mut().noalias() = g.mat() * bv.mat().transpose();
        tp.accumulate(an, ga);
      }
      if (bn >= 0) {
        Tensor<S> gb(bv.shape());
        gb.mat_mut().noalias() = av.mat().transpose() * g.mat();
        tp.accumulate(bn, gb);
      }
    });
    out.attach(tape, id);
  }
  return out;
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expects 2-D, got " + shape_str(a.shape()));
  Tensor<S> out({a.dim(1), a.dim(0)});
  out.mat_mut() = a.mat().transpose();
  if (Tape<S>* tape = detail::common_tape<S>({&a})) {
    int an = a.node();
    std::vector<i64> ashape = a.shape();
    int id = tape->push_op([an, ashape](Tape<S>& tp, const Tensor<S>& g) {
      Tensor<S> ga(ashape);
      ga.mat_mut() = g.mat().transpose();
      tp.accumulate(an, ga);
    });
    out.attach(tape, id);
  }
  return out;
}

// ---- pointwise -------------------------------------------------------------

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a, b, "add");
  Tensor<S> out(a.shape());
  out.vec_mut() = a.vec() + b.vec();
  if (Tape<S>* tape = detail::common_tape<S>({&a, &b})) {
    int an = a.on_tape() ? a.node() : -1;
    int bn = b.on_tape() ? b.node() : -1;
    int id = tape->push_op([an, bn](Tape<S>& tp, const Tensor<S>& g) {
      if (an >= 0) tp.accumulate(an, g);
      if (bn >= 0) tp.accumulate(bn, g);
    });
    out.attach(tape, id);
  }
  return out;
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor<S> out(a.shape());
  out.vec_mut() = a.vec() - b.vec();
  if (Tape<S>* tape = detail::common_tape<S>({&a, &b})) {
    int an = a.on_tape() ? a.node() : -1;
    int bn = b.on_tape() ? b.node() : -1;
    int id = tape->push_op([an, bn](Tape<S>& tp, const Tensor<S>& g) {
      if (an >= 0) tp.accumulate(an, g);
      if (bn >= 0) {
        Tensor<S> gb(g.shape());
        gb.vec_mut() = -g.vec();
        tp.accumulate(bn, gb);
      }
    });
    out.attach(tape, id);
  }
  return out;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c) {
  Tensor<S> out(a.shape());
  out.vec_mut() = a.vec() * c;
  if (Tape<S>* tape = detail::common_tape<S>({&a})) {
    int an = a.node();
    int id = tape->push_op([an, c](Tape<S>& tp, const Tensor<S>& g) {
      Tensor<S> ga(g.shape());
      ga.vec_mut() = g.vec() * c;
      tp.accumulate(an, ga);
    });
    out.attach(tape, id);
  }
  return out;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor<S> out(a.shape());
  out.vec_mut() = a.vec().cwiseProduct(b.vec());
  if (Tape<S>* tape = detail::common_tape<S>({&a, &b})) {
    int an = a.on_tape() ? a.node() : -1;
    int bn = b.on_tape() ? b.node() : -1;
    Tensor<S> av = a, bv = b;
    int id = tape->push_op([an, bn, av, bv](Tape<S>& tp, const Tensor<S>& g) {
      if (an >= 0) {
        Tensor<S> ga(g.shape());
        ga.vec_mut() = g.vec().cwiseProduct(bv.vec());
        tp.accumulate(an, ga);
      }
      if (bn >= 0) {
        Tensor<S> gb(g.shape());
        gb.vec_mut() = g.vec().cwiseProduct(av.vec());
        tp.accumulate(bn, gb);
      }
    });
    out.attach(tape, id);
  }
  return out;
}

// out[r, :] = a[r, :] + bias
template <typename S>
Tensor<S> add_bias_rows(const Tensor<S>& a, const Tensor<S>& bias) {
  if (bias.rank() != 1 || bias.dim(0) != a.cols())
    throw ShapeError("add_bias_rows: bias " + shape_str(bias.shape()) + " does not match " +
                     shape_str(a.shape()));
  Tensor<S> out(a.shape());
  out.mat_mut() = a.mat().rowwise() + bias.vec().transpose();
  if (Tape<S>* tape = detail::common_tape<S>({&a, &bias})) {
    int an = a.on_tape() ? a.node() : -1;
    int bn = bias.on_tape() ? bias.node() : -1;
    int id = tape->push_op([an, bn](Tape<S>& tp, const Tensor<S>& g) {
      if (an >= 0) tp.accumulate(an, g);
      if (bn >= 0) {
        Tensor<S> gb({g.cols()});
        gb.vec_mut() = g.mat().colwise().sum().transpose();
        tp.accumulate(bn, gb);
      }
    });
    out.attach(tape, id);
  }
  return out;
}

// ---- nonlinearities ---------------------------------------------------------

// Numerically stable softmax over the last dimension.
template <typename S>
Tensor<S> softmax_lastdim(const Tensor<S>& a) {
  if (a.rank() < 1 || a.cols() < 1) throw ShapeError("softmax_lastdim: empty last dimension");
  const i64 rows = a.rows(), n = a.cols();
  Tensor<S> out(a.shape());
  auto src = a.mat(rows, n);
  auto dst = out.mat_mut();
  for (i64 r = 0; r < rows; ++r) {
    S m = src(r, 0);
    for (i64 j = 1; j < n; ++j) m = std::max(m, src(r, j));
    if (!std::isfinite(static_cast<double>(m)))
      throw NumericError("softmax_lastdim: non-finite input");
    S sum = S(0);
    for (i64 j = 0; j < n; ++j) {
      S e = std::exp(src(r, j) - m);
      dst(r, j) = e;
      sum += e;
    }
    for (i64 j = 0; j < n; ++j) dst(r, j) /= sum;
  }
  if (Tape<S>* tape = detail::common_tape<S>({&a})) {
    int an = a.node();
    Tensor<S> saved = out;
    int id = tape->push_op([an, saved, rows, n](Tape<S>& tp, const Tensor<S>& g) {
      Tensor<S> ga(saved.shape());
      auto sm = saved.mat(rows, n);
      auto gm = g.mat(rows, n);
      auto out_g = ga.mat_mut();
      for (i64 r = 0; r < rows; ++r) {
        S dot = S(0);
        for (i64 j = 0; j < n; ++j) dot += gm(r, j) * sm(r, j);
        for (i64 j = 0; j < n; ++j) out_g(r, j) = sm(r, j) * (gm(r, j) - dot);
      }
      tp.accumulate(an, ga);
    });
    out.attach(tape, id);
  }
  return out;
}

// Per-vector normalization over the last dimension followed by an affine map.
template <typename S>
Tensor<S> layernorm(const Tensor<S>& a, const Tensor<S>& gamma, const Tensor<S>& beta, S eps) {
  const i64 d = a.cols();
  if (gamma.numel() != d || beta.numel() != d)
    throw ShapeError("layernorm: gamma/beta of " + shape_str(gamma.shape()) + "/" +
                     shape_str(beta.shape()) + " do not match last dim " + std::to_string(d));
  const i64 rows = a.rows();
  Tensor<S> out(a.shape());
  Tensor<S> normed(a.shape());  // saved (x - mu) * inv_sigma
  Tensor<S> inv_sigma({rows});
  auto src = a.mat(rows, d);
  auto dst = out.mat_mut();
  auto nm = normed.mat_mut();
  auto is = inv_sigma.vec_mut();
  auto gv = gamma.vec();
  auto bv = beta.vec();
  for (i64 r = 0; r < rows; ++r) {
    S mean = S(0);
    for (i64 j = 0; j < d; ++j) mean += src(r, j);
    mean /= static_cast<S>(d);
    S var = S(0);
    for (i64 j = 0; j < d; ++j) {
      S c = src(r, j) - mean;
      var += c * c;
    }
    var /= static_cast<S>(d);
    S inv = S(1) / std::sqrt(var + eps);
    is(r) = inv;
    for (i64 j = 0; j < d; ++j) {
      S y = (src(r, j) - mean) * inv;
      nm(r, j) = y;
      dst(r, j) = gv(j) * y + bv(j);
    }
  }
  if (Tape<S>* tape = detail::common_tape<S>({&a, &gamma, &beta})) {
    int an = a.on_tape() ? a.node() : -1;
    int gn = gamma.on_tape() ? gamma.node() : -1;
    int bn = beta.on_tape() ? beta.node() : -1;
    Tensor<S> gsaved = gamma;
    int id = tape->push_op([an, gn, bn, normed, inv_sigma, gsaved, rows, d](
                               Tape<S>& tp, const Tensor<S>& g) {
      auto gm = g.mat(rows, d);
      auto nm2 = normed.mat(rows, d);
      if (gn >= 0) {
        Tensor<S> gg({d});
        auto v = gg.vec_mut();
        for (i64 j = 0; j < d; ++j) {
          S s = S(0);
          for (i64 r = 0; r < rows; ++r) s += gm(r, j) * nm2(r, j);
          v(j) = s;
        }
        tp.accumulate(gn, gg);
      }
      if (bn >= 0) {
        Tensor<S> gb({d});
        auto v = gb.vec_mut();
        for (i64 j = 0; j < d; ++j) {
          S s = S(0);
          for (i64 r = 0; r < rows; ++r) s += gm(r, j);
          v(j) = s;
        }
        tp.accumulate(bn, gb);
      }
      if (an >= 0) {
        Tensor<S> ga(normed.shape());
        auto out_g = ga.mat_mut();
        auto gv2 = gsaved.vec();
        auto is2 = inv_sigma.vec();
        for (i64 r = 0; r < rows; ++r) {
          S mean_gy = S(0), mean_gyy = S(0);
          for (i64 j = 0; j < d; ++j) {
            S gy = gm(r, j) * gv2(j);
            mean_gy += gy;
            mean_gyy += gy * nm2(r, j);
          }
          mean_gy /= static_cast<S>(d);
          mean_gyy /= static_cast<S>(d);
          for (i64 j = 0; j < d; ++j) {
            S gy = gm(r, j) * gv2(j);
            out_g(r, j) = is2(r) * (gy - mean_gy - nm2(r, j) * mean_gyy);
          }
        }
        tp.accumulate(an, ga);
      }
    });
    out.attach(tape, id);
  }
  return out;
}

template <typename S>
Tensor<S> gelu(const Tensor<S>& a) {
  Tensor<S> out(a.shape());
  const S inv_sqrt2 = S(M_SQRT1_2);
  for (i64 i = 0; i < a.numel(); ++i) {
    S x = a.at(i);
    out.mutable_data()[static_cast<std::size_t>(i)] =
        S(0.5) * x * (S(1) + std::erf(x * inv_sqrt2));
  }
  if (Tape<S>* tape = detail::common_tape<S>({&a})) {
    int an = a.node();
    Tensor<S> av = a;
    int id = tape->push_op([an, av, inv_sqrt2](Tape<S>& tp, const Tensor<S>& g) {
      Tensor<S> ga(av.shape());
      const S inv_sqrt2pi = S(1) / std::sqrt(S(2) * S(M_PI));
      for (i64 i = 0; i < av.numel(); ++i) {
        S x = av.at(i);
        S cdf = S(0.5) * (S(1) + std::erf(x * inv_sqrt2));
        S pdf = std::exp(S(-0.5) * x * x) * inv_sqrt2pi;
        ga.mutable_data()[static_cast<std::size_t>(i)] = g.at(i) * (cdf + x * pdf);
      }
      tp.accumulate(an, ga);
    });
    out.attach(tape, id);
  }
  return out;
}

// ---- selection / reduction --------------------------------------------------

// Single row as a [1 x n] tensor.
template <typename S>
Tensor<S> row(const Tensor<S>& a, i64 r) {
  if (a.rank() != 2 || r < 0 || r >= a.dim(0))
    throw ContractError("row: index " + std::to_string(r) + " out of range for " +
                        shape_str(a.shape()));
  const i64 n = a.cols();
  Tensor<S> out({1, n});
  out.mat_mut() = a.mat().row(r);
  if (Tape<S>* tape = detail::common_tape<S>({&a})) {
    int an = a.node();
    std::vector<i64> ashape = a.shape();
    int id = tape->push_op([an, ashape, r](Tape<S>& tp, const Tensor<S>& g) {
      Tensor<S> ga(ashape);
      ga.mat_mut().row(r) = g.mat();
      tp.accumulate(an, ga);
    });
    out.attach(tape, id);
  }
  return out;
}

// Column-wise mean as a [1 x n] tensor.
template <typename S>
Tensor<S> mean_rows(const Tensor<S>& a) {
  if (a.rank() != 2) throw ShapeError("mean_rows: expects 2-D, got " + shape_str(a.shape()));
  const i64 m = a.dim(0), n = a.cols();
  Tensor<S> out({1, n});
  auto src = a.mat();
  auto dst = out.mat_mut();
  for (i64 j = 0; j < n; ++j) {
    S s = S(0);
    for (i64 r = 0; r < m; ++r) s += src(r, j);
    dst(0, j) = s / static_cast<S>(m);
  }
  if (Tape<S>* tape = detail::common_tape<S>({&a})) {
    int an = a.node();
    std::vector<i64> ashape = a.shape();
    int id = tape->push_op([an, ashape, m](Tape<S>& tp, const Tensor<S>& g) {
      Tensor<S> ga(ashape);
      ga.mat_mut() = (g.mat() / static_cast<S>(m)).replicate(m, 1);
      tp.accumulate(an, ga);
    });
    out.attach(tape, id);
  }
  return out;
}

template <typename S>
Tensor<S> sum_all(const Tensor<S>& a) {
  S s = S(0);
  for (i64 i = 0; i < a.numel(); ++i) s += a.at(i);
  Tensor<S> out = Tensor<S>::scalar(s);
  if (Tape<S>* tape = detail::common_tape<S>({&a})) {
    int an = a.node();
    std::vector<i64> ashape = a.shape();
    int id = tape->push_op([an, ashape](Tape<S>& tp, const Tensor<S>& g) {
      tp.accumulate(an, Tensor<S>::full(ashape, g.value()));
    });
    out.attach(tape, id);
  }
  return out;
}

// Cross entropy of a single sample from raw logits ([C] or [1 x C]).
template <typename S>
Tensor<S> cross_entropy_logits(const Tensor<S>& logits, i64 target) {
  const i64 c = logits.numel();
  if (logits.rank() > 2 || (logits.rank() == 2 && logits.dim(0) != 1))
    throw ShapeError("cross_entropy_logits: expects [C] or [1 x C], got " +
                     shape_str(logits.shape()));
  if (target < 0 || target >= c)
    throw ContractError("cross_entropy_logits: target " + std::to_string(target) +
                        " out of range for " + std::to_string(c) + " classes");
  auto lv = logits.vec();
  S m = lv(0);
  for (i64 j = 1; j < c; ++j) m = std::max(m, lv(j));
  if (!std::isfinite(static_cast<double>(m)))
    throw NumericError("cross_entropy_logits: non-finite logits");
  S sum = S(0);
  Tensor<S> probs(logits.shape());
  for (i64 j = 0; j < c; ++j) {
    S e = std::exp(lv(j) - m);
    probs.mutable_data()[static_cast<std::size_t>(j)] = e;
    sum += e;
  }
  for (i64 j = 0; j < c; ++j) probs.mutable_data()[static_cast<std::size_t>(j)] /= sum;
  Tensor<S> out = Tensor<S>::scalar(std::log(sum) + m - lv(target));
  if (Tape<S>* tape = detail::common_tape<S>({&logits})) {
    int ln = logits.node();
    int id = tape->push_op([ln, probs, target](Tape<S>& tp, const Tensor<S>& g) {
      Tensor<S> gl = probs.clone();
      gl.mutable_data()[static_cast<std::size_t>(target)] -= S(1);
      gl.vec_mut() *= g.value();
      tp.accumulate(ln, gl);
    });
    out.attach(tape, id);
  }
  return out;
}

// ---- depthwise 3x3 over the patch-token grid ---------------------------------
// Row 0 is the class token and passes through as zero output (the caller's skip
// connection leaves it unchanged). Rows 1..T-1 are laid out as a gh x gw grid.
template <typename S>
Tensor<S> dwconv3x3_tokens(const Tensor<S>& a, const Tensor<S>& kernel, const Tensor<S>& bias,
                           i64 gh, i64 gw) {
  const i64 t = a.rows(), d = a.cols();
  if (t != gh * gw + 1)
    throw ShapeError("dwconv3x3_tokens: token count " + std::to_string(t) +
                     " does not match grid " + std::to_string(gh) + "x" + std::to_string(gw));
  if (kernel.rank() != 2 || kernel.dim(0) != 9 || kernel.dim(1) != d || bias.numel() != d)
    throw ShapeError("dwconv3x3_tokens: kernel must be [9 x d], bias [d]");
  Tensor<S> out(a.shape());
  auto src = a.mat();
  auto km = kernel.mat();
  auto bv = bias.vec();
  auto dst = out.mat_mut();
  dst.setZero();
  for (i64 y = 0; y < gh; ++y) {
    for (i64 x = 0; x < gw; ++x) {
      const i64 o = 1 + y * gw + x;
      for (i64 c = 0; c < d; ++c) {
        S acc = S(0);
        for (i64 tap = 0; tap < 9; ++tap) {
          const i64 ny = y + tap / 3 - 1, nx = x + tap % 3 - 1;
          const S v = (ny >= 0 && ny < gh && nx >= 0 && nx < gw) ? src(1 + ny * gw + nx, c) : S(0);
          acc += km(tap, c) * v;
        }
        dst(o, c) = acc + bv(c);
      }
    }
  }
  macs::add(static_cast<u64>(9) * static_cast<u64>(gh * gw) * static_cast<u64>(d));
  if (Tape<S>* tape = detail::common_tape<S>({&a, &kernel, &bias})) {
    int an = a.on_tape() ? a.node() : -1;
    int kn = kernel.on_tape() ? kernel.node() : -1;
    int bn = bias.on_tape() ? bias.node() : -1;
    Tensor<S> av = a, kv = kernel;
    int id = tape->push_op([an, kn, bn, av, kv, gh, gw, d](Tape<S>& tp, const Tensor<S>& g) {
      auto gm = g.mat(gh * gw + 1, d);
      if (bn >= 0) {
        Tensor<S> gb({d});
        auto v = gb.vec_mut();
        for (i64 c = 0; c < d; ++c) {
          S s = S(0);
          for (i64 i = 0; i < gh * gw; ++i) s += gm(1 + i, c);
          v(c) = s;
        }
        tp.accumulate(bn, gb);
      }
      if (kn >= 0) {
        Tensor<S> gk({9, d});
        auto gkm = gk.mat_mut();
        auto src2 = av.mat();
        gkm.setZero();
        for (i64 y = 0; y < gh; ++y)
          for (i64 x = 0; x < gw; ++x)
            for (i64 tap = 0; tap < 9; ++tap) {
              const i64 ny = y + tap / 3 - 1, nx = x + tap % 3 - 1;
              if (ny < 0 || ny >= gh || nx < 0 || nx >= gw) continue;
              for (i64 c = 0; c < d; ++c)
                gkm(tap, c) += src2(1 + ny * gw + nx, c) * gm(1 + y * gw + x, c);
            }
        tp.accumulate(kn, gk);
      }
      if (an >= 0) {
        Tensor<S> ga(av.shape());
        auto gam = ga.mat_mut();
        auto km2 = kv.mat();
        gam.setZero();
        for (i64 y = 0; y < gh; ++y)
          for (i64 x = 0; x < gw; ++x)
            for (i64 tap = 0; tap < 9; ++tap) {
              const i64 ny = y + tap / 3 - 1, nx = x + tap % 3 - 1;
              if (ny < 0 || ny >= gh || nx < 0 || nx >= gw) continue;
              for (i64 c = 0; c < d; ++c)
                gam(1 + ny * gw + nx, c) += km2(tap, c) * gm(1 + y * gw + x, c);
            }
        tp.accumulate(an, ga);
      }
    });
    out.attach(tape, id);
  }
  return out;
}

// ---- forward-only helpers ----------------------------------------------------

// Columns [c0, c1) as a copy; no tape support (backbone inference only).
template <typename S>
Tensor<S> col_slice(const Tensor<S>& a, i64 c0, i64 c1) {
  if (a.rank() != 2 || c0 < 0 || c1 > a.dim(1) || c0 >= c1)
    throw ShapeError("col_slice: bad range on " + shape_str(a.shape()));
  if (a.on_tape()) throw ContractError("col_slice: not differentiable");
  Tensor<S> out({a.dim(0), c1 - c0});
  out.mat_mut() = a.mat().middleCols(c0, c1 - c0);
  return out;
}

template <typename S>
Tensor<S> concat_cols(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no parts");
  i64 rows = parts[0].dim(0), cols = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != rows) throw ShapeError("concat_cols: row mismatch");
    if (p.on_tape()) throw ContractError("concat_cols: not differentiable");
    cols += p.dim(1);
  }
  Tensor<S> out({rows, cols});
  i64 c = 0;
  for (const auto& p : parts) {
    out.mat_mut().middleCols(c, p.dim(1)) = p.mat();
    c += p.dim(1);
  }
  return out;
}

template <typename S>
i64 argmax(const Tensor<S>& a) {
  i64 best = 0;
  for (i64 i = 1; i < a.numel(); ++i)
    if (a.at(i) > a.at(best)) best = i;
  return best;
}

}  // namespace edgetune
