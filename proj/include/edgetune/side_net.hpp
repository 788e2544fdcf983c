#pragma once

#include "edgetune/edge_net.hpp"
#include "edgetune/gather.hpp"

namespace edgetune {

// Reference ladder side-tuning network. Each side block computes
//   o_i = F_i(o_{i-1} + z_{i-1}) + o_{i-1} + z_{i-1},   o_0 = 0,
// so block 1 sees exactly z_0. F_i is the same layernorm + low-rank-attention
// function the edge network uses. This module exists to verify the recursion
// identities; it is not a training path.

template <typename S>
struct SideBlock {
  Tensor<S> norm_gamma, norm_beta;
  LraParams<S> attn;

  Tensor<S> apply(const Tensor<S>& x) const {
    return low_rank_attention(
        layernorm(x, norm_gamma, norm_beta, S(EdgeNetConfig::layernorm_eps)), attn);
  }

  std::vector<Tensor<S>*> params() {
    return {&norm_gamma, &norm_beta, &attn.w_q, &attn.b_q, &attn.w_k, &attn.b_k,
            &attn.w_v,   &attn.b_v,  &attn.w_o, &attn.b_o};
  }
};

template <typename S>
struct SideNetwork {
  i64 d = 0;
  i64 r = 0;
  std::vector<SideBlock<S>> blocks;

  i64 n_blocks() const { return static_cast<i64>(blocks.size()); }

  static SideNetwork init(i64 n_blocks, i64 d, i64 r, u64 seed, double scale = 0.02) {
    SideNetwork net;
    net.d = d;
    net.r = r;
    for (i64 b = 0; b < n_blocks; ++b) {
      const std::string p = "side." + std::to_string(b) + ".";
      auto trunc = [&](std::vector<i64> shape, const std::string& stream) {
        Tensor<S> t(std::move(shape));
        CounterRng rng(seed, stream);
        auto data = t.mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i)
          data[i] = static_cast<S>(rng.trunc_normal(i) * scale);
        return t;
      };
      SideBlock<S> blk;
      blk.norm_gamma = Tensor<S>::ones({d});
      blk.norm_beta = Tensor<S>::zeros({d});
      blk.attn = LraParams<S>{trunc({d, r}, p + "wq"), Tensor<S>::zeros({r}),
                              trunc({d, r}, p + "wk"), Tensor<S>::zeros({r}),
                              trunc({d, r}, p + "wv"), Tensor<S>::zeros({r}),
                              trunc({r, d}, p + "wo"), Tensor<S>::zeros({d})};
      net.blocks.push_back(std::move(blk));
    }
    return net;
  }

  void zero_blocks() {
    for (auto& blk : blocks)
      for (Tensor<S>* t : blk.params()) {
        auto data = t->mutable_data();
        std::fill(data.begin(), data.end(), S(0));
      }
  }

  std::vector<Tensor<S>*> params() {
    std::vector<Tensor<S>*> out;
    for (auto& blk : blocks) {
      auto bp = blk.params();
      out.insert(out.end(), bp.begin(), bp.end());
    }
    return out;
  }
};

// Everything decompose_input needs: the side inputs used for the run plus the
// recorded per-block inputs and outputs.
template <typename S>
struct LadderTrace {
  std::vector<Tensor<S>> side_inputs;  // z_0..z_N as consumed by the run
  std::vector<Tensor<S>> inputs;       // in_1..in_{N+1}; inputs[i-1] feeds block i
  std::vector<Tensor<S>> outputs;      // o_1..o_N
};

namespace detail {

template <typename S>
Tensor<S> run_ladder(const std::vector<Tensor<S>>& z, const SideNetwork<S>& net, LadderTrace<S>* trace) {
  const i64 n = net.n_blocks();
  if (static_cast<i64>(z.size()) != n + 1)
    throw ContractError("ladder_forward: feature count " + std::to_string(z.size()) +
                        " does not match " + std::to_string(n) + " side blocks");
  if (trace) {
    trace->side_inputs = z;
    trace->inputs.clear();
    trace->outputs.clear();
  }
  Tensor<S> o = Tensor<S>::zeros(z[0].shape());  // o_0
  for (i64 i = 1; i <= n; ++i) {
    Tensor<S> in = add(o, z[static_cast<std::size_t>(i - 1)]);
    if (trace) trace->inputs.push_back(in);
    o = add(net.blocks[static_cast<std::size_t>(i - 1)].apply(in), in);
    if (trace) trace->outputs.push_back(o);
  }
  if (trace) trace->inputs.push_back(add(o, z[static_cast<std::size_t>(n)]));  // in_{N+1}
  return o;
}

}  // namespace detail

// Eq-style recursion over the unmodified activations; returns o_N.
template <typename S>
Tensor<S> ladder_forward(const FeatureSet<S>& fs, const SideNetwork<S>& net,
                         LadderTrace<S>* trace = nullptr) {
  return detail::run_ladder(fs.features, net, trace);
}

// Same recursion with the windowed side inputs z^ substituted for z.
template <typename S>
Tensor<S> windowed_run(const FeatureSet<S>& fs, const SideNetwork<S>& net, i64 g,
                       LadderTrace<S>* trace = nullptr) {
  auto hat = gather_windowed(fs, g);
  return detail::run_ladder(hat, net, trace);
}

template <typename S>
struct InputDecomposition {
  Tensor<S> side_terms;     // F_1(z_0) + sum_{l=2..i} F_l(o_{l-1} + z_{l-1})
  Tensor<S> external_term;  // sum_{l=0..i} z_l; depends on the backbone alone
};

// Split the recorded input of block i+1 into the side-network part and the
// external feature term. side_terms is recomputed from the recorded block
// inputs; external_term touches nothing but the side inputs.
template <typename S>
InputDecomposition<S> decompose_input(const SideNetwork<S>& net, const LadderTrace<S>& trace, i64 i) {
  const i64 n = net.n_blocks();
  if (i < 1 || i > n)
    throw ContractError("decompose_input: i=" + std::to_string(i) + " out of range 1.." +
                        std::to_string(n));
  if (static_cast<i64>(trace.inputs.size()) != n + 1)
    throw ContractError("decompose_input: trace does not match the network");
  InputDecomposition<S> out;
  out.side_terms = Tensor<S>::zeros(trace.side_inputs[0].shape());
  for (i64 l = 1; l <= i; ++l) {
    Tensor<S> f = net.blocks[static_cast<std::size_t>(l - 1)].apply(
        trace.inputs[static_cast<std::size_t>(l - 1)]);
    out.side_terms.vec_mut() += f.vec();
  }
  out.external_term = trace.side_inputs[0].clone();
  for (i64 l = 1; l <= i; ++l)
    out.external_term.vec_mut() += trace.side_inputs[static_cast<std::size_t>(l)].vec();
  return out;
}

}  // namespace edgetune
