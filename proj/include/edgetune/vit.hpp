#pragma once

#include <map>
#include <string>

#include "edgetune/ops.hpp"
#include "edgetune/rng.hpp"
#include "edgetune/sha256.hpp"

namespace edgetune {

// Frozen vision-transformer backbone: maps an image to the ordered activation
// set z_0..z_N. Inference-only; nothing in this module records tape nodes or
// mutates weights after load.

struct ViTConfig {
  i64 image_size = 224;
  i64 patch_size = 16;
  i64 d = 768;
  i64 n_blocks = 12;  // N
  i64 heads = 12;
  i64 mlp_ratio = 4;
  i64 channels = 3;

  i64 grid() const { return image_size / patch_size; }
  i64 patch_tokens() const { return grid() * grid(); }
  i64 tokens() const { return patch_tokens() + 1; }  // + class token
  i64 patch_dim() const { return patch_size * patch_size * channels; }
  i64 head_dim() const { return d / heads; }

  void validate() const {
    if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0)
      throw ContractError("ViTConfig: image_size must be a positive multiple of patch_size");
    if (heads <= 0 || d % heads != 0)
      throw ContractError("ViTConfig: d must be divisible by heads");
    if (n_blocks < 0 || mlp_ratio <= 0 || channels <= 0) throw ContractError("ViTConfig: bad field");
  }

  std::string summary() const {
    return "image=" + std::to_string(image_size) + " patch=" + std::to_string(patch_size) +
           " d=" + std::to_string(d) + " N=" + std::to_string(n_blocks) +
           " heads=" + std::to_string(heads) + " mlp_ratio=" + std::to_string(mlp_ratio) +
           " channels=" + std::to_string(channels);
  }
};

inline ViTConfig vit_b16() { return ViTConfig{}; }

// Default backbone for desk-scale experiments; keeps N=12 so the k candidate
// set {6, 9, 12} is the literal one.
inline ViTConfig desk_vit() { return ViTConfig{32, 8, 64, 12, 4, 4, 3}; }

// Named read-only weights. Shapes follow the x*W row-vector convention:
// weight [in x out], bias [out].
template <typename S>
class WeightStore {
 public:
  WeightStore() = default;

  void put(const std::string& name, Tensor<S> t) { tensors_[name] = std::move(t); }

  const Tensor<S>& get(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw ContractError("WeightStore: missing tensor '" + name + "'");
    return it->second;
  }

  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const std::map<std::string, Tensor<S>>& tensors() const { return tensors_; }

  // Expected name -> shape table for a config.
  static std::map<std::string, std::vector<i64>> required_shapes(const ViTConfig& cfg) {
    std::map<std::string, std::vector<i64>> req;
    req["patch_embed.weight"] = {cfg.patch_dim(), cfg.d};
    req["patch_embed.bias"] = {cfg.d};
    req["pos_embed"] = {cfg.tokens(), cfg.d};
    req["cls_token"] = {cfg.d};
    for (i64 b = 0; b < cfg.n_blocks; ++b) {
      std::string p = "blocks." + std::to_string(b) + ".";
      req[p + "norm1.gamma"] = {cfg.d};
      req[p + "norm1.beta"] = {cfg.d};
      req[p + "attn.qkv.weight"] = {cfg.d, 3 * cfg.d};
      req[p + "attn.qkv.bias"] = {3 * cfg.d};
      req[p + "attn.proj.weight"] = {cfg.d, cfg.d};
      req[p + "attn.proj.bias"] = {cfg.d};
      req[p + "norm2.gamma"] = {cfg.d};
      req[p + "norm2.beta"] = {cfg.d};
      req[p + "mlp.fc1.weight"] = {cfg.d, cfg.mlp_ratio * cfg.d};
      req[p + "mlp.fc1.bias"] = {cfg.mlp_ratio * cfg.d};
      req[p + "mlp.fc2.weight"] = {cfg.mlp_ratio * cfg.d, cfg.d};
      req[p + "mlp.fc2.bias"] = {cfg.d};
    }
    // Final norm ships with the weights but the feature path never applies it:
    // z_N stays structurally homogeneous with the other activations.
    req["final_norm.gamma"] = {cfg.d};
    req["final_norm.beta"] = {cfg.d};
    return req;
  }

  void validate(const ViTConfig& cfg) const {
    for (const auto& [name, shape] : required_shapes(cfg)) {
      auto it = tensors_.find(name);
      if (it == tensors_.end()) throw ContractError("WeightStore: missing tensor '" + name + "'");
      if (it->second.shape() != shape)
        throw ShapeError("WeightStore: tensor '" + name + "' has shape " +
                         shape_str(it->second.shape()) + ", expected " + shape_str(shape));
    }
  }

  // Identifier covering config and full weight content; cache keys include it
  // so weight changes invalidate correctly.
  Digest256 content_hash(const ViTConfig& cfg) const {
    Sha256 h;
    std::string s = cfg.summary();
    h.update({reinterpret_cast<const u8*>(s.data()), s.size()});
    for (const auto& [name, t] : tensors_) {  // std::map: deterministic order
      h.update({reinterpret_cast<const u8*>(name.data()), name.size()});
      h.update({reinterpret_cast<const u8*>(t.data().data()), t.data().size_bytes()});
    }
    return h.finish();
  }

 private:
  std::map<std::string, Tensor<S>> tensors_;
};

// Seeded random weights; the 64-bit seed and tensor name fully determine every
// value through the counter-based generator.
template <typename S>
WeightStore<S> random_weights(const ViTConfig& cfg, u64 seed) {
  cfg.validate();
  WeightStore<S> w;
  for (const auto& [name, shape] : WeightStore<S>::required_shapes(cfg)) {
    Tensor<S> t(shape);
    auto data = t.mutable_data();
    CounterRng rng(seed, name);
    const bool is_bias = name.ends_with("bias") || name.ends_with("beta");
    const bool is_gamma = name.ends_with("gamma");
    if (is_gamma) {
      for (auto& x : data) x = S(1);
    } else if (is_bias) {
      // zeros
    } else if (name == "pos_embed" || name == "cls_token") {
      for (std::size_t i = 0; i < data.size(); ++i) data[i] = S(rng.normal(i));
    } else {
      // Xavier scale so random blocks transform the stream substantially
      const auto& sh = shape;
      const double fan_in = static_cast<double>(sh[0]);
      const double fan_out = static_cast<double>(sh.size() > 1 ? sh[1] : sh[0]);
      const double std = std::sqrt(2.0 / (fan_in + fan_out));
      for (std::size_t i = 0; i < data.size(); ++i) data[i] = S(rng.normal(i) * std);
    }
    w.put(name, std::move(t));
  }
  return w;
}

// Ordered activations of one input: features[0] = z_0 (patch embedding after
// positional addition), features[i] = output of transformer block i.
template <typename S>
struct FeatureSet {
  std::vector<Tensor<S>> features;
  Digest256 config_hash{};
  Digest256 input_id{};

  i64 n_blocks() const { return static_cast<i64>(features.size()) - 1; }

  void validate() const {
    if (features.empty()) throw ContractError("FeatureSet: empty");
    for (const auto& f : features)
      if (f.shape() != features[0].shape())
        throw ShapeError("FeatureSet: inhomogeneous activation shapes");
  }
};

// Patchify -> linear projection -> prepend class token -> add positions.
template <typename S>
Tensor<S> embed(const Tensor<S>& image, const WeightStore<S>& w, const ViTConfig& cfg) {
  if (image.rank() != 3 || image.dim(0) != cfg.channels || image.dim(1) != cfg.image_size ||
      image.dim(2) != cfg.image_size)
    throw ShapeError("embed: image " + shape_str(image.shape()) + " does not match config " +
                     std::to_string(cfg.channels) + "x" + std::to_string(cfg.image_size) + "x" +
                     std::to_string(cfg.image_size));
  const i64 g = cfg.grid(), p = cfg.patch_size, c = cfg.channels, hw = cfg.image_size;
  Tensor<S> patches({cfg.patch_tokens(), cfg.patch_dim()});
  auto pm = patches.mat_mut();
  auto img = image.data();
  for (i64 py = 0; py < g; ++py)
    for (i64 px = 0; px < g; ++px) {
      const i64 prow = py * g + px;
      i64 col = 0;
      for (i64 ch = 0; ch < c; ++ch)
        for (i64 y = 0; y < p; ++y)
          for (i64 x = 0; x < p; ++x)
            pm(prow, col++) = img[static_cast<std::size_t>(ch * hw * hw + (py * p + y) * hw +
                                                           (px * p + x))];
    }
  Tensor<S> projected = add_bias_rows(matmul(patches, w.get("patch_embed.weight")),
                                      w.get("patch_embed.bias"));
  Tensor<S> z0({cfg.tokens(), cfg.d});
  z0.mat_mut().row(0) = w.get("cls_token").vec().transpose();
  z0.mat_mut().bottomRows(cfg.patch_tokens()) = projected.mat();
  z0.mat_mut() += w.get("pos_embed").mat();
  return z0;
}

// One pre-norm transformer block: z + MHA(LN1(z)), then + FFN(LN2(.)).
template <typename S>
Tensor<S> vit_block(const Tensor<S>& z, const WeightStore<S>& w, const ViTConfig& cfg, i64 block) {
  const std::string p = "blocks." + std::to_string(block) + ".";
  const i64 d = cfg.d, dh = cfg.head_dim();
  const S eps = S(1e-6);

  Tensor<S> h = layernorm(z, w.get(p + "norm1.gamma"), w.get(p + "norm1.beta"), eps);
  Tensor<S> qkv = add_bias_rows(matmul(h, w.get(p + "attn.qkv.weight")), w.get(p + "attn.qkv.bias"));
  Tensor<S> q = col_slice(qkv, 0, d), k = col_slice(qkv, d, 2 * d), v = col_slice(qkv, 2 * d, 3 * d);
  std::vector<Tensor<S>> ctx;
  ctx.reserve(static_cast<std::size_t>(cfg.heads));
  const S inv_scale = S(1) / std::sqrt(static_cast<S>(dh));
  for (i64 hd = 0; hd < cfg.heads; ++hd) {
    Tensor<S> qh = col_slice(q, hd * dh, (hd + 1) * dh);
    Tensor<S> kh = col_slice(k, hd * dh, (hd + 1) * dh);
    Tensor<S> vh = col_slice(v, hd * dh, (hd + 1) * dh);
    Tensor<S> attn = softmax_lastdim(scale(matmul(qh, transpose(kh)), inv_scale));
    ctx.push_back(matmul(attn, vh));
  }
  Tensor<S> merged = concat_cols(ctx);
  Tensor<S> attn_out =
      add_bias_rows(matmul(merged, w.get(p + "attn.proj.weight")), w.get(p + "attn.proj.bias"));
  Tensor<S> z1 = add(z, attn_out);

  Tensor<S> h2 = layernorm(z1, w.get(p + "norm2.gamma"), w.get(p + "norm2.beta"), eps);
  Tensor<S> f =
      gelu(add_bias_rows(matmul(h2, w.get(p + "mlp.fc1.weight")), w.get(p + "mlp.fc1.bias")));
  Tensor<S> ffn =
      add_bias_rows(matmul(f, w.get(p + "mlp.fc2.weight")), w.get(p + "mlp.fc2.bias"));
  return add(z1, ffn);
}

template <typename S>
FeatureSet<S> extract_features(const Tensor<S>& image, const WeightStore<S>& w,
                               const ViTConfig& cfg) {
  if (image.on_tape()) throw ContractError("extract_features: backbone is frozen, no tape input");
  FeatureSet<S> fs;
  fs.features.reserve(static_cast<std::size_t>(cfg.n_blocks + 1));
  fs.features.push_back(embed(image, w, cfg));
  for (i64 b = 0; b < cfg.n_blocks; ++b)
    fs.features.push_back(vit_block(fs.features.back(), w, cfg, b));
  return fs;
}

// Config + validated weights + cached content hash, ready to serve.
template <typename S>
struct Backbone {
  ViTConfig cfg;
  WeightStore<S> weights;
  Digest256 hash{};

  static Backbone make(ViTConfig cfg, WeightStore<S> w) {
    cfg.validate();
    w.validate(cfg);
    Digest256 h = w.content_hash(cfg);
    return Backbone{std::move(cfg), std::move(w), h};
  }

  static Backbone seeded(const ViTConfig& cfg, u64 seed) {
    return make(cfg, random_weights<S>(cfg, seed));
  }

  FeatureSet<S> extract(const Tensor<S>& image) const {
    FeatureSet<S> fs = extract_features(image, weights, cfg);
    fs.config_hash = hash;
    return fs;
  }
};

// Closed-form multiply-accumulate count of one backbone forward pass: patch
// projection plus every attention/FFN matmul (QK^T and AV included); norms,
// softmax, bias adds and activations excluded.
inline u64 count_macs_backbone(const ViTConfig& cfg) {
  cfg.validate();
  const u64 t = static_cast<u64>(cfg.tokens());
  const u64 d = static_cast<u64>(cfg.d);
  const u64 patch = static_cast<u64>(cfg.patch_tokens()) * static_cast<u64>(cfg.patch_dim()) * d;
  const u64 per_block = (4 + 2 * static_cast<u64>(cfg.mlp_ratio)) * t * d * d + 2 * t * t * d;
  return patch + static_cast<u64>(cfg.n_blocks) * per_block;
}

}  // namespace edgetune
