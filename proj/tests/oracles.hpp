#pragma once

// Independent oracles used by the test suites. Everything here is coded
// directly from the defining formulas (plain loops, no Eigen, no library
// code paths shared with the implementation under test).

#include <algorithm>
#include <cmath>
#include <vector>

#include "edgetune/edge_net.hpp"
#include "edgetune/rng.hpp"
#include "edgetune/tensor.hpp"

namespace oracles {

using edgetune::CounterRng;
using edgetune::i64;
using edgetune::LraParams;
using edgetune::Tensor;

template <typename S>
void fill_random(Tensor<S>& t, edgetune::u64 seed, double scale = 1.0,
                 const char* stream = "test") {
  CounterRng rng(seed, stream);
  auto d = t.mutable_data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<S>(rng.normal(i) * scale);
}

template <typename S>
Tensor<S> random_tensor(std::vector<i64> shape, edgetune::u64 seed, double scale = 1.0,
                        const char* stream = "test") {
  Tensor<S> t(std::move(shape));
  fill_random(t, seed, scale, stream);
  return t;
}

template <typename S>
double max_abs_err(const Tensor<S>& a, const Tensor<S>& b) {
  double m = 0.0;
  for (i64 i = 0; i < a.numel(); ++i)
    m = std::max(m, std::fabs(static_cast<double>(a.at(i)) - static_cast<double>(b.at(i))));
  return m;
}

template <typename S>
double max_rel_err(const Tensor<S>& a, const Tensor<S>& b, double floor = 1e-12) {
  double m = 0.0;
  for (i64 i = 0; i < a.numel(); ++i) {
    double x = static_cast<double>(a.at(i)), y = static_cast<double>(b.at(i));
    m = std::max(m, std::fabs(x - y) / std::max({std::fabs(x), std::fabs(y), floor}));
  }
  return m;
}

// Naive triple-loop matrix product.
template <typename S>
Tensor<S> matmul_oracle(const Tensor<S>& a, const Tensor<S>& b) {
  const i64 m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<S> out({m, n});
  auto dst = out.mutable_data();
  for (i64 i = 0; i < m; ++i)
    for (i64 j = 0; j < n; ++j) {
      S acc = S(0);
      for (i64 l = 0; l < k; ++l) acc += a.at(i, l) * b.at(l, j);
      dst[static_cast<std::size_t>(i * n + j)] = acc;
    }
  return out;
}

// Direct exp/sum softmax of one row in extended precision.
inline std::vector<double> softmax_oracle(const std::vector<double>& row) {
  long double sum = 0.0L;
  std::vector<long double> e(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) {
    e[i] = expl(static_cast<long double>(row[i]));
    sum += e[i];
  }
  std::vector<double> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) out[i] = static_cast<double>(e[i] / sum);
  return out;
}

// Two-pass mean/variance layer norm of one row.
inline std::vector<double> layernorm_oracle(const std::vector<double>& x,
                                            const std::vector<double>& gamma,
                                            const std::vector<double>& beta, double eps) {
  const std::size_t d = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(d);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(d);
  std::vector<double> out(d);
  for (std::size_t i = 0; i < d; ++i)
    out[i] = gamma[i] * (x[i] - mean) / std::sqrt(var + eps) + beta[i];
  return out;
}

inline LraParams<double> random_lra(i64 d, i64 r, edgetune::u64 seed, double scale = 0.3) {
  return LraParams<double>{random_tensor<double>({d, r}, seed, scale, "wq"),
                           random_tensor<double>({r}, seed, scale, "bq"),
                           random_tensor<double>({d, r}, seed, scale, "wk"),
                           random_tensor<double>({r}, seed, scale, "bk"),
                           random_tensor<double>({d, r}, seed, scale, "wv"),
                           random_tensor<double>({r}, seed, scale, "bv"),
                           random_tensor<double>({r, d}, seed, scale, "wo"),
                           random_tensor<double>({d}, seed, scale, "bo")};
}

// Dense single-head attention computed directly from the defining formulas.
inline Tensor<double> attention_oracle(const Tensor<double>& z, const LraParams<double>& p) {
  const i64 t = z.dim(0), d = z.dim(1), r = p.w_q.dim(1);
  auto lin = [&](const Tensor<double>& w, const Tensor<double>& b) {
    Tensor<double> out({t, w.dim(1)});
    for (i64 i = 0; i < t; ++i)
      for (i64 j = 0; j < w.dim(1); ++j) {
        double acc = b.at(j);
        for (i64 l = 0; l < d; ++l) acc += z.at(i, l) * w.at(l, j);
        out.mutable_data()[static_cast<std::size_t>(i * w.dim(1) + j)] = acc;
      }
    return out;
  };
  auto q = lin(p.w_q, p.b_q), k = lin(p.w_k, p.b_k), v = lin(p.w_v, p.b_v);
  Tensor<double> out({t, d});
  for (i64 i = 0; i < t; ++i) {
    std::vector<double> scores(static_cast<std::size_t>(t));
    double mx = -1e300;
    for (i64 j = 0; j < t; ++j) {
      double acc = 0;
      for (i64 l = 0; l < r; ++l) acc += q.at(i, l) * k.at(j, l);
      scores[static_cast<std::size_t>(j)] = acc / std::sqrt(static_cast<double>(r));
      mx = std::max(mx, scores[static_cast<std::size_t>(j)]);
    }
    double denom = 0;
    for (i64 j = 0; j < t; ++j) {
      scores[static_cast<std::size_t>(j)] = std::exp(scores[static_cast<std::size_t>(j)] - mx);
      denom += scores[static_cast<std::size_t>(j)];
    }
    std::vector<double> ctx(static_cast<std::size_t>(r), 0.0);
    for (i64 j = 0; j < t; ++j)
      for (i64 l = 0; l < r; ++l)
        ctx[static_cast<std::size_t>(l)] +=
            scores[static_cast<std::size_t>(j)] / denom * v.at(j, l);
    for (i64 c = 0; c < d; ++c) {
      double acc = p.b_o.at(c);
      for (i64 l = 0; l < r; ++l) acc += ctx[static_cast<std::size_t>(l)] * p.w_o.at(l, c);
      out.mutable_data()[static_cast<std::size_t>(i * d + c)] = acc;
    }
  }
  return out;
}

}  // namespace oracles
