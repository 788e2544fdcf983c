#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "edgetune/macs.hpp"
#include "edgetune/vit.hpp"
#include "edgetune/weight_io.hpp"
#include "oracles.hpp"

using namespace edgetune;

namespace {

// Independently coded patch embedding: explicit per-patch gather + matvec.
template <typename S>
Tensor<S> embed_oracle(const Tensor<S>& image, const WeightStore<S>& w, const ViTConfig& cfg) {
  const i64 g = cfg.grid(), p = cfg.patch_size, c = cfg.channels, hw = cfg.image_size;
  const i64 pd = cfg.patch_dim(), d = cfg.d;
  Tensor<S> z0({cfg.tokens(), d});
  auto out = z0.mutable_data();
  const auto& pw = w.get("patch_embed.weight");
  const auto& pb = w.get("patch_embed.bias");
  const auto& pos = w.get("pos_embed");
  const auto& cls = w.get("cls_token");
  for (i64 j = 0; j < d; ++j) out[static_cast<std::size_t>(j)] = cls.at(j);
  for (i64 py = 0; py < g; ++py)
    for (i64 px = 0; px < g; ++px) {
      std::vector<S> patch(static_cast<std::size_t>(pd));
      i64 idx = 0;
      for (i64 ch = 0; ch < c; ++ch)
        for (i64 y = 0; y < p; ++y)
          for (i64 x = 0; x < p; ++x)
            patch[static_cast<std::size_t>(idx++)] =
                image.at(ch * hw * hw + (py * p + y) * hw + px * p + x);
      const i64 tok = 1 + py * g + px;
      for (i64 j = 0; j < d; ++j) {
        S acc = pb.at(j);
        for (i64 i = 0; i < pd; ++i) acc += patch[static_cast<std::size_t>(i)] * pw.at(i, j);
        out[static_cast<std::size_t>(tok * d + j)] = acc;
      }
    }
  for (i64 t = 0; t < cfg.tokens(); ++t)
    for (i64 j = 0; j < d; ++j) out[static_cast<std::size_t>(t * d + j)] += pos.at(t, j);
  return z0;
}

std::vector<double> ln_rows(const std::vector<double>& x, i64 rows, i64 d,
                            const Tensor<double>& gamma, const Tensor<double>& beta) {
  std::vector<double> out(x.size());
  for (i64 r = 0; r < rows; ++r) {
    double mean = 0, var = 0;
    for (i64 j = 0; j < d; ++j) mean += x[static_cast<std::size_t>(r * d + j)];
    mean /= static_cast<double>(d);
    for (i64 j = 0; j < d; ++j) {
      double c = x[static_cast<std::size_t>(r * d + j)] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    double inv = 1.0 / std::sqrt(var + 1e-6);
    for (i64 j = 0; j < d; ++j)
      out[static_cast<std::size_t>(r * d + j)] =
          gamma.at(j) * (x[static_cast<std::size_t>(r * d + j)] - mean) * inv + beta.at(j);
  }
  return out;
}

// Hand-unrolled pre-norm block: norm -> multi-head attention -> add,
// norm -> FFN -> add. Plain loops throughout.
Tensor<double> block_oracle(const Tensor<double>& z, const WeightStore<double>& w,
                            const ViTConfig& cfg, i64 block) {
  const std::string p = "blocks." + std::to_string(block) + ".";
  const i64 t = cfg.tokens(), d = cfg.d, dh = cfg.head_dim(), heads = cfg.heads;
  std::vector<double> zin(z.data().begin(), z.data().end());

  auto h1 = ln_rows(zin, t, d, w.get(p + "norm1.gamma"), w.get(p + "norm1.beta"));
  const auto& qkvw = w.get(p + "attn.qkv.weight");
  const auto& qkvb = w.get(p + "attn.qkv.bias");
  std::vector<double> qkv(static_cast<std::size_t>(t * 3 * d));
  for (i64 r = 0; r < t; ++r)
    for (i64 j = 0; j < 3 * d; ++j) {
      double acc = qkvb.at(j);
      for (i64 i = 0; i < d; ++i) acc += h1[static_cast<std::size_t>(r * d + i)] * qkvw.at(i, j);
      qkv[static_cast<std::size_t>(r * 3 * d + j)] = acc;
    }
  std::vector<double> merged(static_cast<std::size_t>(t * d));
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (i64 head = 0; head < heads; ++head) {
    for (i64 r = 0; r < t; ++r) {
      std::vector<double> scores(static_cast<std::size_t>(t));
      double mx = -1e300;
      for (i64 s = 0; s < t; ++s) {
        double acc = 0;
        for (i64 i = 0; i < dh; ++i)
          acc += qkv[static_cast<std::size_t>(r * 3 * d + head * dh + i)] *
                 qkv[static_cast<std::size_t>(s * 3 * d + d + head * dh + i)];
        scores[static_cast<std::size_t>(s)] = acc * inv_scale;
        mx = std::max(mx, scores[static_cast<std::size_t>(s)]);
      }
      double denom = 0;
      for (i64 s = 0; s < t; ++s) {
        scores[static_cast<std::size_t>(s)] = std::exp(scores[static_cast<std::size_t>(s)] - mx);
        denom += scores[static_cast<std::size_t>(s)];
      }
      for (i64 i = 0; i < dh; ++i) {
        double acc = 0;
        for (i64 s = 0; s < t; ++s)
          acc += scores[static_cast<std::size_t>(s)] / denom *
                 qkv[static_cast<std::size_t>(s * 3 * d + 2 * d + head * dh + i)];
        merged[static_cast<std::size_t>(r * d + head * dh + i)] = acc;
      }
    }
  }
  const auto& projw = w.get(p + "attn.proj.weight");
  const auto& projb = w.get(p + "attn.proj.bias");
  std::vector<double> z1(static_cast<std::size_t>(t * d));
  for (i64 r = 0; r < t; ++r)
    for (i64 j = 0; j < d; ++j) {
      double acc = projb.at(j);
      for (i64 i = 0; i < d; ++i) acc += merged[static_cast<std::size_t>(r * d + i)] * projw.at(i, j);
      z1[static_cast<std::size_t>(r * d + j)] = zin[static_cast<std::size_t>(r * d + j)] + acc;
    }

  auto h2 = ln_rows(z1, t, d, w.get(p + "norm2.gamma"), w.get(p + "norm2.beta"));
  const i64 hidden = cfg.mlp_ratio * d;
  const auto& f1w = w.get(p + "mlp.fc1.weight");
  const auto& f1b = w.get(p + "mlp.fc1.bias");
  const auto& f2w = w.get(p + "mlp.fc2.weight");
  const auto& f2b = w.get(p + "mlp.fc2.bias");
  std::vector<double> f(static_cast<std::size_t>(t * hidden));
  for (i64 r = 0; r < t; ++r)
    for (i64 j = 0; j < hidden; ++j) {
      double acc = f1b.at(j);
      for (i64 i = 0; i < d; ++i) acc += h2[static_cast<std::size_t>(r * d + i)] * f1w.at(i, j);
      f[static_cast<std::size_t>(r * hidden + j)] = 0.5 * acc * (1.0 + std::erf(acc * M_SQRT1_2));
    }
  Tensor<double> out({t, d});
  auto od = out.mutable_data();
  for (i64 r = 0; r < t; ++r)
    for (i64 j = 0; j < d; ++j) {
      double acc = f2b.at(j);
      for (i64 i = 0; i < hidden; ++i)
        acc += f[static_cast<std::size_t>(r * hidden + i)] * f2w.at(i, j);
      od[static_cast<std::size_t>(r * d + j)] = z1[static_cast<std::size_t>(r * d + j)] + acc;
    }
  return out;
}

ViTConfig tiny_vit() { return ViTConfig{12, 4, 8, 2, 2, 2, 3}; }

}  // namespace

TEST_CASE("embed with zero image and zero projection reproduces positions") {
  ViTConfig cfg = tiny_vit();
  WeightStore<double> w;
  w.put("patch_embed.weight", Tensor<double>::zeros({cfg.patch_dim(), cfg.d}));
  w.put("patch_embed.bias", Tensor<double>::zeros({cfg.d}));
  w.put("cls_token", Tensor<double>::zeros({cfg.d}));
  auto pos = oracles::random_tensor<double>({cfg.tokens(), cfg.d}, 3, 1.0, "pos");
  w.put("pos_embed", pos.clone());
  auto image = Tensor<double>::zeros({cfg.channels, cfg.image_size, cfg.image_size});
  auto z0 = embed(image, w, cfg);
  CHECK(z0.same_values(pos));
}

TEST_CASE("embed output shape for the ViT-B/16 reference config") {
  ViTConfig cfg = vit_b16();
  CHECK(cfg.tokens() == 197);
  CHECK(cfg.d == 768);
  WeightStore<float> w;
  CounterRng rng(17, "embed_shape");
  auto mk = [&](std::vector<i64> shape, const char* stream) {
    auto t = oracles::random_tensor<float>(std::move(shape), 17, 0.05, stream);
    return t;
  };
  w.put("patch_embed.weight", mk({cfg.patch_dim(), cfg.d}, "pw"));
  w.put("patch_embed.bias", mk({cfg.d}, "pb"));
  w.put("cls_token", mk({cfg.d}, "cls"));
  w.put("pos_embed", mk({cfg.tokens(), cfg.d}, "pos"));
  auto image = oracles::random_tensor<float>({3, 224, 224}, 17, 1.0, "img");
  auto z0 = embed(image, w, cfg);
  CHECK(z0.shape() == std::vector<i64>{197, 768});
}

TEST_CASE("embed matches the per-patch oracle") {
  ViTConfig cfg = tiny_vit();
  auto w = random_weights<double>(cfg, 11);
  auto image = oracles::random_tensor<double>({cfg.channels, cfg.image_size, cfg.image_size}, 12,
                                              1.0, "img");
  CHECK(oracles::max_rel_err(embed(image, w, cfg), embed_oracle(image, w, cfg), 1e-9) <= 1e-12);
}

TEST_CASE("embed rejects wrong image size") {
  ViTConfig cfg = tiny_vit();
  auto w = random_weights<double>(cfg, 11);
  auto image = Tensor<double>::zeros({3, 8, 8});
  CHECK_THROWS_AS(embed(image, w, cfg), ShapeError);
}

TEST_CASE("extract_features returns N+1 activations") {
  ViTConfig cfg = desk_vit();
  auto w = random_weights<float>(cfg, 5);
  auto image = oracles::random_tensor<float>({3, 32, 32}, 6, 1.0, "img");
  auto fs = extract_features(image, w, cfg);
  CHECK(fs.features.size() == 13);
  CHECK(fs.n_blocks() == 12);
  for (const auto& z : fs.features) CHECK(z.shape() == std::vector<i64>{cfg.tokens(), cfg.d});
}

TEST_CASE("extract_features is pure: bit-identical across calls") {
  ViTConfig cfg = tiny_vit();
  auto w = random_weights<float>(cfg, 7);
  auto image = oracles::random_tensor<float>({3, 12, 12}, 8, 1.0, "img");
  auto a = extract_features(image, w, cfg);
  auto b = extract_features(image, w, cfg);
  REQUIRE(a.features.size() == b.features.size());
  for (std::size_t i = 0; i < a.features.size(); ++i)
    CHECK(a.features[i].same_values(b.features[i]));
}

TEST_CASE("z_1 matches a hand-unrolled block computation") {
  ViTConfig cfg = tiny_vit();
  auto w = random_weights<double>(cfg, 21);
  auto image = oracles::random_tensor<double>({3, 12, 12}, 22, 1.0, "img");
  auto fs = extract_features(image, w, cfg);
  auto expect = block_oracle(fs.features[0], w, cfg, 0);
  CHECK(oracles::max_rel_err(fs.features[1], expect, 1e-6) <= 1e-10);
}

TEST_CASE("backbone refuses tape-attached inputs") {
  ViTConfig cfg = tiny_vit();
  auto w = random_weights<double>(cfg, 3);
  Tape<double> tape;
  auto image = Tensor<double>::zeros({3, 12, 12});
  tape.watch(image);
  CHECK_THROWS_AS(extract_features(image, w, cfg), ContractError);
}

TEST_CASE("weights are untouched by extraction") {
  ViTConfig cfg = tiny_vit();
  auto backbone = Backbone<float>::seeded(cfg, 9);
  auto image = oracles::random_tensor<float>({3, 12, 12}, 10, 1.0, "img");
  auto before = backbone.weights.content_hash(cfg);
  (void)backbone.extract(image);
  CHECK(backbone.weights.content_hash(cfg) == before);
}

TEST_CASE("count_macs_backbone: ViT-B/16 within 2% of 17.57e9") {
  const double macs = static_cast<double>(count_macs_backbone(vit_b16()));
  CHECK(std::fabs(macs - 17.57e9) / 17.57e9 <= 0.02);
}

TEST_CASE("count_macs_backbone: N=0 counts patch projection only") {
  ViTConfig cfg = tiny_vit();
  cfg.n_blocks = 0;
  const u64 expect = static_cast<u64>(cfg.patch_tokens()) *
                     static_cast<u64>(cfg.patch_dim()) * static_cast<u64>(cfg.d);
  CHECK(count_macs_backbone(cfg) == expect);
}

TEST_CASE("count_macs_backbone equals the instrumented forward exactly") {
  // desk config plus a sweep of random small configs
  std::vector<ViTConfig> cfgs = {desk_vit()};
  CounterRng rng(99, "cfg_sweep");
  for (u64 i = 0; i < 8; ++i) {
    ViTConfig c;
    c.patch_size = 2 + 2 * static_cast<i64>(rng.uniform_int(6 * i, 2));      // 2 or 4
    c.image_size = c.patch_size * (2 + static_cast<i64>(rng.uniform_int(6 * i + 1, 2)));
    c.heads = 1 + static_cast<i64>(rng.uniform_int(6 * i + 2, 3));
    c.d = c.heads * (4 + 4 * static_cast<i64>(rng.uniform_int(6 * i + 3, 2)));
    c.n_blocks = static_cast<i64>(rng.uniform_int(6 * i + 4, 4));
    c.mlp_ratio = 1 + static_cast<i64>(rng.uniform_int(6 * i + 5, 4));
    c.channels = 1 + 2 * static_cast<i64>(rng.uniform_int(6 * i + 6, 2) == 0);
    cfgs.push_back(c);
  }
  for (const auto& cfg : cfgs) {
    auto w = random_weights<float>(cfg, 31);
    auto image = oracles::random_tensor<float>({cfg.channels, cfg.image_size, cfg.image_size},
                                               32, 1.0, "img");
    macs::Scoped counter;
    (void)extract_features(image, w, cfg);
    INFO(cfg.summary());
    CHECK(counter.count() == count_macs_backbone(cfg));
  }
}

TEST_CASE("ETW1 round-trips bit-exactly") {
  std::vector<RawTensor> tensors;
  tensors.push_back(to_raw("a", oracles::random_tensor<float>({3, 4}, 1, 1.0, "etw_a")));
  tensors.push_back(to_raw("b.weight", oracles::random_tensor<double>({2, 2, 2}, 2, 1.0, "etw_b")));
  tensors.push_back(to_raw("empty", Tensor<float>::zeros({0})));
  tensors.push_back(to_raw("scalarish", Tensor<double>::scalar(-1.5)));
  auto bytes = encode_etw1(tensors);
  auto back = decode_etw1(bytes);
  REQUIRE(back.size() == tensors.size());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    CHECK(back[i].name == tensors[i].name);
    CHECK(back[i].dims == tensors[i].dims);
    CHECK(back[i].dtype == tensors[i].dtype);
    CHECK(back[i].bytes == tensors[i].bytes);
  }
  CHECK(encode_etw1(back) == bytes);
}

TEST_CASE("ETW1 weight store file round trip") {
  ViTConfig cfg = tiny_vit();
  auto w = random_weights<float>(cfg, 13);
  const std::string path = "/tmp/edgetune_test_weights.etw1";
  save_weights(path, w);
  auto loaded = load_weights<float>(path);
  loaded.validate(cfg);
  CHECK(loaded.content_hash(cfg) == w.content_hash(cfg));
  std::remove(path.c_str());
}

TEST_CASE("ETW1 rejects corrupted input") {
  auto bytes = encode_etw1({to_raw("t", Tensor<float>::ones({2, 2}))});
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_etw1(bad_magic), IoError);
  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  CHECK_THROWS_AS(decode_etw1(truncated), IoError);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_etw1(trailing), IoError);
  CHECK_THROWS_AS(read_etw1("/tmp/edgetune_missing_file.etw1"), IoError);
}

TEST_CASE("seeded weights are deterministic and validated") {
  ViTConfig cfg = tiny_vit();
  auto a = random_weights<float>(cfg, 42);
  auto b = random_weights<float>(cfg, 42);
  CHECK(a.content_hash(cfg) == b.content_hash(cfg));
  auto c = random_weights<float>(cfg, 43);
  CHECK(a.content_hash(cfg) != c.content_hash(cfg));
  a.validate(cfg);
}
