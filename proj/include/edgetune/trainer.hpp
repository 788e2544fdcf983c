#pragma once

#include "edgetune/client.hpp"
#include "edgetune/edge_net.hpp"
#include "edgetune/optim.hpp"
#include "edgetune/tasks.hpp"

namespace edgetune {

struct TrainingDiverged : Error {
  using Error::Error;
};

// Adam with batch size 32 and a cosine schedule decaying to zero. The same
// (config, data, initial weights) always yields the identical loss trajectory.
struct TrainConfig {
  i64 batch_size = 32;
  i64 epochs = 30;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  i64 warmup_epochs = 0;
  u64 seed = 0;
};

struct EpochStats {
  i64 epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double val_acc = 0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  double final_val_acc = 0.0;
  double final_test_acc = -1.0;  // -1 when the test split was not evaluated
  std::vector<TransferRecord> transfers;
};

// Edge-side per-run feature store: each distinct image is fetched through the
// source exactly once and memoized locally.
class FeatureBank {
 public:
  FeatureBank(const TaskData& task, FeatureSource& source, GatherSpec spec)
      : task_(task), source_(source), spec_(spec),
        cached_(task.images.size()) {}

  const Tensor<float>& get(i64 index);

  const std::vector<TransferRecord>& transfers() const { return transfers_; }
  const GatherSpec& spec() const { return spec_; }

 private:
  const TaskData& task_;
  FeatureSource& source_;
  GatherSpec spec_;
  std::vector<Tensor<float>> cached_;
  std::vector<TransferRecord> transfers_;
};

double evaluate(const EdgeNetwork<float>& net, FeatureBank& bank, const TaskData& task,
                std::span<const i64> indices);

TrainResult train_edge(EdgeNetwork<float>& net, const TaskData& task, FeatureSource& source,
                       const GatherSpec& spec, const TrainConfig& cfg, bool eval_test = false);

// Deterministic per-epoch index shuffle.
std::vector<i64> shuffled_indices(std::span<const i64> indices, u64 seed, i64 epoch);

void write_metrics_csv(const std::string& path, const TrainResult& result);

}  // namespace edgetune
