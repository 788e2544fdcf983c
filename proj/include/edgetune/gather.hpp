#pragma once

#include "edgetune/vit.hpp"

namespace edgetune {

// Gather functions: compress the backbone activation set into what actually
// crosses the wire. Pure functions, safe for unrestricted concurrent use.

enum class GatherMode : u8 {
  sum = 0,         // element-wise sum of z_0..z_k
  stack = 1,       // all activations, stacked on a new leading axis
  windowed = 2,    // all modified side inputs z^_i = z_i - z_{i-g}
  last_only = 3,   // z_N alone
  head_vector = 4  // class-token row of z_N (linear-probing transfer)
};

inline const char* gather_mode_name(GatherMode m) {
  switch (m) {
    case GatherMode::sum: return "sum";
    case GatherMode::stack: return "stack";
    case GatherMode::windowed: return "windowed";
    case GatherMode::last_only: return "last_only";
    case GatherMode::head_vector: return "head_vector";
  }
  return "?";
}

struct GatherSpec {
  GatherMode mode = GatherMode::sum;
  i64 k = 0;  // layer cutoff, sum mode
  i64 g = 1;  // window size, windowed mode

  // `normalize` divides the sum by k+1. Off by default: the gather is a plain
  // sum, which is what the cost model and all identities assume.
  bool normalize = false;
};

// Sum of z_0..z_k, accumulated in layer order.
template <typename S>
Tensor<S> gather_sum(const FeatureSet<S>& fs, i64 k, bool normalize = false) {
  const i64 n = fs.n_blocks();
  if (k < 0 || k > n)
    throw ContractError("gather_sum: k=" + std::to_string(k) + " out of range 0.." +
                        std::to_string(n));
  Tensor<S> acc = fs.features[0].clone();
  for (i64 l = 1; l <= k; ++l) acc.vec_mut() += fs.features[static_cast<std::size_t>(l)].vec();
  if (normalize) acc.vec_mut() *= S(1) / static_cast<S>(k + 1);
  return acc;
}

// Concatenation along a new leading axis, order preserving: [(N+1) x T x d].
template <typename S>
Tensor<S> gather_stack(const FeatureSet<S>& fs) {
  fs.validate();
  const i64 n1 = static_cast<i64>(fs.features.size());
  const i64 t = fs.features[0].dim(0), d = fs.features[0].dim(1);
  Tensor<S> out({n1, t, d});
  auto dst = out.mutable_data();
  const std::size_t slice = static_cast<std::size_t>(t * d);
  for (i64 i = 0; i < n1; ++i) {
    auto src = fs.features[static_cast<std::size_t>(i)].data();
    std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::size_t>(i) * slice);
  }
  return out;
}

// Windowed side inputs: z^_i = z_i for i < g, z_i - z_{i-g} for i >= g.
template <typename S>
std::vector<Tensor<S>> gather_windowed(const FeatureSet<S>& fs, i64 g) {
  const i64 n = fs.n_blocks();
  if (g < 1 || g > n + 1)
    throw ContractError("gather_windowed: g=" + std::to_string(g) + " out of range 1.." +
                        std::to_string(n + 1));
  std::vector<Tensor<S>> out;
  out.reserve(fs.features.size());
  for (i64 i = 0; i <= n; ++i) {
    if (i < g) {
      out.push_back(fs.features[static_cast<std::size_t>(i)].clone());
    } else {
      Tensor<S> z(fs.features[static_cast<std::size_t>(i)].shape());
      z.vec_mut() = fs.features[static_cast<std::size_t>(i)].vec() -
                    fs.features[static_cast<std::size_t>(i - g)].vec();
      out.push_back(std::move(z));
    }
  }
  return out;
}

// Class-token row of z_N as [1 x d].
template <typename S>
Tensor<S> gather_head_vector(const FeatureSet<S>& fs) {
  const Tensor<S>& zn = fs.features.back();
  Tensor<S> out({1, zn.dim(1)});
  out.mat_mut() = zn.mat().row(0);
  return out;
}

// Dispatch on a GatherSpec. Windowed output is the stacked [(N+1) x T x d].
template <typename S>
Tensor<S> gather_apply(const FeatureSet<S>& fs, const GatherSpec& spec) {
  switch (spec.mode) {
    case GatherMode::sum: return gather_sum(fs, spec.k, spec.normalize);
    case GatherMode::stack: return gather_stack(fs);
    case GatherMode::windowed: {
      FeatureSet<S> hat;
      hat.features = gather_windowed(fs, spec.g);
      return gather_stack(hat);
    }
    case GatherMode::last_only: return fs.features.back().clone();
    case GatherMode::head_vector: return gather_head_vector(fs);
  }
  throw ContractError("gather_apply: unknown mode");
}

// Exact per-image payload bytes on the wire (frame headers excluded).
inline u64 bytes_per_image(const GatherSpec& spec, const ViTConfig& cfg, Dtype dtype) {
  cfg.validate();
  const u64 t = static_cast<u64>(cfg.tokens());
  const u64 d = static_cast<u64>(cfg.d);
  const u64 s = static_cast<u64>(dtype_size(dtype));
  const u64 layers = static_cast<u64>(cfg.n_blocks + 1);
  switch (spec.mode) {
    case GatherMode::sum:
    case GatherMode::last_only: return t * d * s;
    case GatherMode::stack:
    case GatherMode::windowed: return layers * t * d * s;
    case GatherMode::head_vector: return d * s;
  }
  throw ContractError("bytes_per_image: unknown mode");
}

// Transfer overhead is reported in MB = 2^20 bytes.
inline double bytes_to_mb(u64 bytes) { return static_cast<double>(bytes) / (1024.0 * 1024.0); }

}  // namespace edgetune
