#pragma once

#include "edgetune/image.hpp"
#include "edgetune/vit.hpp"

namespace edgetune {

// Desk-scale synthetic classification tasks. The "level" knob controls where
// the discriminative signal lives:
//   early — every patch carries a class-specific texture; a strong
//           class-irrelevant global arrangement of pool textures is mixed in
//           as a distractor. The signal is local and present from z_0 on;
//           deep activations mostly re-encode the distractor.
//   late  — all patches draw from a shared texture pool; the class is the
//           spatial arrangement of pool textures. Per-patch statistics are
//           class-independent, so nothing local separates the classes.
enum class SignalLevel : u8 { early = 0, late = 1 };

inline const char* signal_level_name(SignalLevel s) {
  return s == SignalLevel::early ? "early" : "late";
}

struct SyntheticTaskConfig {
  SignalLevel level = SignalLevel::late;
  i64 classes = 4;
  i64 n_train = 800;  // VTAB-1K split shape
  i64 n_val = 200;
  i64 n_test = 200;
  u64 seed = 0;
  ViTConfig vit = desk_vit();
  double texture_amp = 1.0;
  double distract_amp = 1.0;  // early level only
  double noise_amp = 0.25;

  i64 total() const { return n_train + n_val + n_test; }
};

struct TaskData {
  SyntheticTaskConfig cfg;
  std::vector<std::vector<u8>> images;  // encoded rasters, the exact wire bytes
  std::vector<i64> labels;
  std::vector<i64> train_idx, val_idx, test_idx;
};

TaskData make_task(const SyntheticTaskConfig& cfg);

// "early" | "late" presets for the CLI and the acceptance suite.
SyntheticTaskConfig task_preset(const std::string& name, u64 seed);

}  // namespace edgetune
