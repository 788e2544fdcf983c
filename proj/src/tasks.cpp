#include "edgetune/tasks.hpp"

#include "edgetune/rng.hpp"

namespace edgetune {

namespace {

// Patch-sized texture with unit-variance entries.
std::vector<float> make_texture(const ViTConfig& vit, u64 seed, const std::string& stream) {
  CounterRng rng(seed, stream);
  std::vector<float> t(static_cast<std::size_t>(vit.patch_dim()));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.normal(i));
  return t;
}

// Balanced two-way splits of the patch grid.
//
// Fine patterns (the late-task classes) differ only in the phase of
// cell-level structure: every position carries each texture in exactly half
// the classes, so no per-position marginal separates them and a classifier
// has to relate neighboring positions. Coarse patterns (the early-task
// distractor) are halves and quadrant blocks.
std::vector<int> arrangement_pattern(i64 grid, i64 which, u64 seed, bool fine) {
  const i64 cells = grid * grid;
  std::vector<int> a(static_cast<std::size_t>(cells), 0);
  auto at = [&](i64 y, i64 x) -> int& { return a[static_cast<std::size_t>(y * grid + x)]; };
  if (which < 4) {
    for (i64 y = 0; y < grid; ++y)
      for (i64 x = 0; x < grid; ++x) {
        int v = 0;
        if (fine) {
          switch (which) {
            case 0: v = static_cast<int>((y + x) % 2); break;
            case 1: v = static_cast<int>((y + x + 1) % 2); break;
            case 2: v = static_cast<int>(y % 2); break;
            case 3: v = static_cast<int>((y + 1) % 2); break;
          }
        } else {
          switch (which) {
            case 0: v = x < grid / 2 ? 0 : 1; break;
            case 1: v = y < grid / 2 ? 0 : 1; break;
            case 2: v = static_cast<int>((2 * y / grid + 2 * x / grid) % 2); break;
            case 3: v = static_cast<int>((2 * y / grid + 2 * x / grid + 1) % 2); break;
          }
        }
        at(y, x) = v;
      }
    return a;
  }
  // seeded balanced permutation for class counts beyond four
  for (i64 i = 0; i < cells; ++i) a[static_cast<std::size_t>(i)] = i < cells / 2 ? 0 : 1;
  CounterRng rng(seed, "pattern" + std::to_string(which));
  for (i64 i = cells - 1; i > 0; --i) {
    const i64 j = static_cast<i64>(rng.uniform_int(static_cast<u64>(i), static_cast<u64>(i + 1)));
    std::swap(a[static_cast<std::size_t>(i)], a[static_cast<std::size_t>(j)]);
  }
  return a;
}

}  // namespace

TaskData make_task(const SyntheticTaskConfig& cfg) {
  cfg.vit.validate();
  if (cfg.classes < 2) throw ContractError("make_task: need at least two classes");
  const ViTConfig& vit = cfg.vit;
  const i64 grid = vit.grid(), p = vit.patch_size, c = vit.channels, hw = vit.image_size;
  const i64 pd = vit.patch_dim();

  std::vector<std::vector<float>> class_textures, pool;
  for (i64 cl = 0; cl < cfg.classes; ++cl)
    class_textures.push_back(make_texture(vit, cfg.seed, "class_texture" + std::to_string(cl)));
  pool.push_back(make_texture(vit, cfg.seed, "pool0"));
  pool.push_back(make_texture(vit, cfg.seed, "pool1"));
  std::vector<std::vector<int>> patterns;
  const bool fine = cfg.level == SignalLevel::late;
  for (i64 cl = 0; cl < std::max<i64>(cfg.classes, 4); ++cl)
    patterns.push_back(arrangement_pattern(grid, cl, cfg.seed, fine));

  TaskData task;
  task.cfg = cfg;
  task.images.reserve(static_cast<std::size_t>(cfg.total()));
  task.labels.reserve(static_cast<std::size_t>(cfg.total()));

  for (i64 idx = 0; idx < cfg.total(); ++idx) {
    const i64 label = idx % cfg.classes;
    CounterRng rng(cfg.seed, "image" + std::to_string(idx));
    std::vector<float> pixels(static_cast<std::size_t>(c * hw * hw), 0.0f);
    u64 ctr = 0;
    const i64 distract_pattern = static_cast<i64>(rng.uniform_int(ctr++, 4));
    for (i64 py = 0; py < grid; ++py)
      for (i64 px = 0; px < grid; ++px) {
        const i64 cell = py * grid + px;
        const double gain = 0.5 + rng.uniform(ctr++);
        const float* tex;
        double amp;
        const float* extra = nullptr;
        double extra_amp = 0.0;
        if (cfg.level == SignalLevel::late) {
          const int side = patterns[static_cast<std::size_t>(label)][static_cast<std::size_t>(cell)];
          tex = pool[static_cast<std::size_t>(side)].data();
          amp = cfg.texture_amp * gain;
        } else {
          tex = class_textures[static_cast<std::size_t>(label)].data();
          amp = cfg.texture_amp * gain;
          const int side =
              patterns[static_cast<std::size_t>(distract_pattern)][static_cast<std::size_t>(cell)];
          extra = pool[static_cast<std::size_t>(side)].data();
          extra_amp = cfg.distract_amp * (0.5 + rng.uniform(ctr++));
        }
        i64 t = 0;
        for (i64 ch = 0; ch < c; ++ch)
          for (i64 y = 0; y < p; ++y)
            for (i64 x = 0; x < p; ++x) {
              const std::size_t pix =
                  static_cast<std::size_t>(ch * hw * hw + (py * p + y) * hw + (px * p + x));
              double v = amp * tex[t];
              if (extra) v += extra_amp * extra[t];
              v += cfg.noise_amp * rng.normal(ctr + static_cast<u64>(t));
              pixels[pix] = static_cast<float>(v);
              ++t;
            }
        ctr += static_cast<u64>(pd);
      }
    Tensor<float> img({c, hw, hw}, std::move(pixels));
    task.images.push_back(encode_raster(raster_from_tensor(img)));
    task.labels.push_back(label);
  }

  for (i64 i = 0; i < cfg.n_train; ++i) task.train_idx.push_back(i);
  for (i64 i = 0; i < cfg.n_val; ++i) task.val_idx.push_back(cfg.n_train + i);
  for (i64 i = 0; i < cfg.n_test; ++i) task.test_idx.push_back(cfg.n_train + cfg.n_val + i);
  return task;
}

SyntheticTaskConfig task_preset(const std::string& name, u64 seed) {
  SyntheticTaskConfig cfg;
  cfg.seed = seed;
  if (name == "late" || name == "suite") {
    cfg.level = SignalLevel::late;
  } else if (name == "early") {
    cfg.level = SignalLevel::early;
  } else {
    throw ContractError("unknown task preset '" + name + "' (expected early|late|suite)");
  }
  return cfg;
}

}  // namespace edgetune
