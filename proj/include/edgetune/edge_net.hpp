#pragma once

#include <variant>

#include "edgetune/ops.hpp"
#include "edgetune/rng.hpp"
#include "edgetune/weight_io.hpp"

namespace edgetune {

// Trainable edge network: L blocks of (layernorm -> block function -> skip)
// over the gathered feature map, then a linear head on the pooled tokens.
// The reference block function is single-head attention with a low QKV hidden
// dimension r; MLP and depthwise-conv blocks are alternates for ablations.

enum class BlockFn : u8 { low_rank_attention = 0, mlp = 1, dwconv = 2 };
enum class HeadPool : u8 { class_token = 0, mean = 1 };

inline const char* block_fn_name(BlockFn f) {
  switch (f) {
    case BlockFn::low_rank_attention: return "low_rank_attention";
    case BlockFn::mlp: return "mlp";
    case BlockFn::dwconv: return "dwconv";
  }
  return "?";
}

struct EdgeNetConfig {
  i64 L = 4;
  i64 r = 32;
  i64 d = 768;
  BlockFn block_fn = BlockFn::low_rank_attention;
  i64 num_classes = 2;
  HeadPool head_pool = HeadPool::class_token;
  i64 grid_h = 0;  // dwconv token grid; 0 = square inferred from T-1
  i64 grid_w = 0;
  static constexpr double layernorm_eps = 1e-6;

  void validate() const {
    if (L < 0 || r < 1 || d < 1 || num_classes < 1) throw ContractError("EdgeNetConfig: bad field");
    if (r > d) throw ContractError("EdgeNetConfig: r must not exceed d");
    // dwconv never writes the class-token row, so a class-token head would
    // be blind to the whole body
    if (block_fn == BlockFn::dwconv && L > 0 && head_pool == HeadPool::class_token)
      throw ContractError("EdgeNetConfig: dwconv blocks require mean pooling");
  }

  // MLP hidden width solved so an MLP block matches the attention block's
  // parameter count: h*(2d+1) = r*(4d+3).
  i64 mlp_hidden() const {
    const double h = static_cast<double>(r) * (4.0 * static_cast<double>(d) + 3.0) /
                     (2.0 * static_cast<double>(d) + 1.0);
    return std::max<i64>(1, static_cast<i64>(std::llround(h)));
  }
};

// Single-head attention with QKV hidden dimension r, scale 1/sqrt(r).
template <typename S>
struct LraParams {
  Tensor<S> w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;
};

template <typename S>
Tensor<S> low_rank_attention(const Tensor<S>& z, const LraParams<S>& p) {
  if (z.rank() != 2 || z.dim(1) != p.w_q.dim(0))
    throw ContractError("low_rank_attention: input " + shape_str(z.shape()) +
                        " does not match W_q " + shape_str(p.w_q.shape()));
  const i64 r = p.w_q.dim(1);
  Tensor<S> q = add_bias_rows(matmul(z, p.w_q), p.b_q);
  Tensor<S> k = add_bias_rows(matmul(z, p.w_k), p.b_k);
  Tensor<S> v = add_bias_rows(matmul(z, p.w_v), p.b_v);
  Tensor<S> attn = softmax_lastdim(scale(matmul(q, transpose(k)), S(1) / std::sqrt(static_cast<S>(r))));
  return add_bias_rows(matmul(matmul(attn, v), p.w_o), p.b_o);
}

template <typename S>
struct MlpParams {
  Tensor<S> w1, b1, w2, b2;
};

template <typename S>
struct DwParams {
  Tensor<S> kernel, bias;  // [9 x d], [d]
};

template <typename S>
struct EdgeBlock {
  Tensor<S> norm_gamma, norm_beta;
  std::variant<LraParams<S>, MlpParams<S>, DwParams<S>> fn;
};

template <typename S>
struct EdgeNetwork {
  EdgeNetConfig cfg;
  std::vector<EdgeBlock<S>> blocks;
  Tensor<S> head_w, head_b;

  // Truncated normal (std 0.02) projections, zero biases, identity norms.
  // The head stream is independent of L and block_fn so degenerate configs
  // stay comparable to a bare linear probe with the same seed.
  static EdgeNetwork init(const EdgeNetConfig& cfg, u64 seed) {
    cfg.validate();
    EdgeNetwork net;
    net.cfg = cfg;
    auto trunc = [&](std::vector<i64> shape, const std::string& stream) {
      Tensor<S> t(std::move(shape));
      CounterRng rng(seed, stream);
      auto data = t.mutable_data();
      for (std::size_t i = 0; i < data.size(); ++i)
        data[i] = static_cast<S>(rng.trunc_normal(i) * 0.02);
      return t;
    };
    for (i64 b = 0; b < cfg.L; ++b) {
      const std::string p = "blocks." + std::to_string(b) + ".";
      EdgeBlock<S> blk;
      blk.norm_gamma = Tensor<S>::ones({cfg.d});
      blk.norm_beta = Tensor<S>::zeros({cfg.d});
      switch (cfg.block_fn) {
        case BlockFn::low_rank_attention:
          blk.fn = LraParams<S>{trunc({cfg.d, cfg.r}, p + "wq"), Tensor<S>::zeros({cfg.r}),
                                trunc({cfg.d, cfg.r}, p + "wk"), Tensor<S>::zeros({cfg.r}),
                                trunc({cfg.d, cfg.r}, p + "wv"), Tensor<S>::zeros({cfg.r}),
                                trunc({cfg.r, cfg.d}, p + "wo"), Tensor<S>::zeros({cfg.d})};
          break;
        case BlockFn::mlp: {
          const i64 h = cfg.mlp_hidden();
          blk.fn = MlpParams<S>{trunc({cfg.d, h}, p + "w1"), Tensor<S>::zeros({h}),
                                trunc({h, cfg.d}, p + "w2"), Tensor<S>::zeros({cfg.d})};
          break;
        }
        case BlockFn::dwconv:
          blk.fn = DwParams<S>{trunc({9, cfg.d}, p + "kernel"), Tensor<S>::zeros({cfg.d})};
          break;
      }
      net.blocks.push_back(std::move(blk));
    }
    net.head_w = trunc({cfg.d, cfg.num_classes}, "head.weight");
    net.head_b = Tensor<S>::zeros({cfg.num_classes});
    return net;
  }

  void zero_blocks() {
    for (auto& blk : blocks) {
      for (Tensor<S>* t : block_params(blk)) {
        auto d = t->mutable_data();
        std::fill(d.begin(), d.end(), S(0));
      }
    }
  }

  static std::vector<Tensor<S>*> block_params(EdgeBlock<S>& blk) {
    std::vector<Tensor<S>*> out = {&blk.norm_gamma, &blk.norm_beta};
    std::visit(
        [&](auto& fn) {
          using T = std::decay_t<decltype(fn)>;
          if constexpr (std::is_same_v<T, LraParams<S>>) {
            out.insert(out.end(), {&fn.w_q, &fn.b_q, &fn.w_k, &fn.b_k, &fn.w_v, &fn.b_v, &fn.w_o,
                                   &fn.b_o});
          } else if constexpr (std::is_same_v<T, MlpParams<S>>) {
            out.insert(out.end(), {&fn.w1, &fn.b1, &fn.w2, &fn.b2});
          } else {
            out.insert(out.end(), {&fn.kernel, &fn.bias});
          }
        },
        blk.fn);
    return out;
  }

  // The allocation walk: every trainable tensor, in a fixed order.
  std::vector<Tensor<S>*> params() {
    std::vector<Tensor<S>*> out;
    for (auto& blk : blocks) {
      auto bp = block_params(blk);
      out.insert(out.end(), bp.begin(), bp.end());
    }
    out.push_back(&head_w);
    out.push_back(&head_b);
    return out;
  }

  // Parameters with a nonzero gradient for generic inputs. The attention key
  // bias is allocated and counted but has an identically zero gradient:
  // softmax is invariant to the per-row constant q_i . b_k it adds to the
  // score rows.
  std::vector<Tensor<S>*> live_params() {
    std::vector<Tensor<S>*> out;
    for (auto& blk : blocks) {
      for (Tensor<S>* t : block_params(blk)) {
        bool is_key_bias =
            std::holds_alternative<LraParams<S>>(blk.fn) && t == &std::get<LraParams<S>>(blk.fn).b_k;
        if (!is_key_bias) out.push_back(t);
      }
    }
    out.push_back(&head_w);
    out.push_back(&head_b);
    return out;
  }

  void watch(Tape<S>& tape) {
    for (Tensor<S>* p : params()) tape.watch(*p);
  }

  void detach() {
    for (Tensor<S>* p : params()) p->detach();
  }
};

inline std::pair<i64, i64> dw_grid(const EdgeNetConfig& cfg, i64 tokens) {
  i64 gh = cfg.grid_h, gw = cfg.grid_w;
  if (gh <= 0 || gw <= 0) {
    gh = gw = static_cast<i64>(std::llround(std::sqrt(static_cast<double>(tokens - 1))));
  }
  if (gh * gw + 1 != tokens)
    throw ContractError("dwconv grid " + std::to_string(gh) + "x" + std::to_string(gw) +
                        " does not match " + std::to_string(tokens) + " tokens");
  return {gh, gw};
}

// h_0 = z_mix; h_i = h_{i-1} + block_fn(layernorm(h_{i-1})).
template <typename S>
Tensor<S> lae_body(const Tensor<S>& z_mix, const EdgeNetwork<S>& net) {
  if (z_mix.rank() != 2 || z_mix.dim(1) != net.cfg.d)
    throw ContractError("lae_body: input " + shape_str(z_mix.shape()) +
                        " does not match d=" + std::to_string(net.cfg.d));
  const S eps = S(EdgeNetConfig::layernorm_eps);
  Tensor<S> h = z_mix;
  for (const auto& blk : net.blocks) {
    Tensor<S> normed = layernorm(h, blk.norm_gamma, blk.norm_beta, eps);
    Tensor<S> out = std::visit(
        [&](const auto& fn) -> Tensor<S> {
          using T = std::decay_t<decltype(fn)>;
          if constexpr (std::is_same_v<T, LraParams<S>>) {
            return low_rank_attention(normed, fn);
          } else if constexpr (std::is_same_v<T, MlpParams<S>>) {
            return add_bias_rows(matmul(gelu(add_bias_rows(matmul(normed, fn.w1), fn.b1)), fn.w2),
                                 fn.b2);
          } else {
            auto [gh, gw] = dw_grid(net.cfg, h.dim(0));
            return dwconv3x3_tokens(normed, fn.kernel, fn.bias, gh, gw);
          }
        },
        blk.fn);
    h = add(h, out);
  }
  return h;
}

template <typename S>
Tensor<S> lae_forward(const Tensor<S>& z_mix, const EdgeNetwork<S>& net) {
  Tensor<S> h = lae_body(z_mix, net);
  Tensor<S> pooled = net.cfg.head_pool == HeadPool::class_token ? row(h, 0) : mean_rows(h);
  return add_bias_rows(matmul(pooled, net.head_w), net.head_b);
}

struct ParamCount {
  u64 body = 0;
  u64 head = 0;
  u64 total() const { return body + head; }
};

// Closed-form trainable parameter count; equals the allocation walk exactly.
inline ParamCount count_params(const EdgeNetConfig& cfg) {
  cfg.validate();
  const u64 d = static_cast<u64>(cfg.d), r = static_cast<u64>(cfg.r);
  u64 per_block = 0;
  switch (cfg.block_fn) {
    case BlockFn::low_rank_attention:
      per_block = 2 * d + 3 * (d * r + r) + (r * d + d);
      break;
    case BlockFn::mlp: {
      const u64 h = static_cast<u64>(cfg.mlp_hidden());
      per_block = 2 * d + (d * h + h) + (h * d + d);
      break;
    }
    case BlockFn::dwconv:
      per_block = 2 * d + 9 * d + d;
      break;
  }
  ParamCount c;
  c.body = static_cast<u64>(cfg.L) * per_block;
  c.head = d * static_cast<u64>(cfg.num_classes) + static_cast<u64>(cfg.num_classes);
  return c;
}

// Closed-form per-image forward MACs of the edge network with T tokens;
// equals the instrumented forward exactly.
inline u64 count_macs_edge(const EdgeNetConfig& cfg, i64 tokens) {
  cfg.validate();
  const u64 t = static_cast<u64>(tokens), d = static_cast<u64>(cfg.d), r = static_cast<u64>(cfg.r);
  u64 per_block = 0;
  switch (cfg.block_fn) {
    case BlockFn::low_rank_attention:
      per_block = 3 * t * d * r + 2 * t * t * r + t * r * d;
      break;
    case BlockFn::mlp:
      per_block = 2 * t * d * static_cast<u64>(cfg.mlp_hidden());
      break;
    case BlockFn::dwconv:
      per_block = 9 * (t - 1) * d;
      break;
  }
  return static_cast<u64>(cfg.L) * per_block + d * static_cast<u64>(cfg.num_classes);
}

// ETW1 checkpoint io; same format as the backbone weight files.
template <typename S>
void save_checkpoint(const std::string& path, EdgeNetwork<S>& net) {
  std::vector<RawTensor> raw;
  auto ps = net.params();
  for (std::size_t i = 0; i < ps.size(); ++i)
    raw.push_back(to_raw("param." + std::to_string(i), *ps[i]));
  write_etw1(path, raw);
}

template <typename S>
void load_checkpoint(const std::string& path, EdgeNetwork<S>& net) {
  auto raw = read_etw1(path);
  auto ps = net.params();
  if (raw.size() != ps.size())
    throw IoError("checkpoint has " + std::to_string(raw.size()) + " tensors, network expects " +
                  std::to_string(ps.size()));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Tensor<S> t = from_raw<S>(raw[i]);
    if (t.shape() != ps[i]->shape()) throw IoError("checkpoint tensor shape mismatch");
    *ps[i] = std::move(t);
  }
}

}  // namespace edgetune
