#include "edgetune/trainer.hpp"

#include <cstdio>

#include "edgetune/rng.hpp"
#include "edgetune/weight_io.hpp"

namespace edgetune {

const Tensor<float>& FeatureBank::get(i64 index) {
  auto& slot = cached_[static_cast<std::size_t>(index)];
  if (!slot.defined()) {
    TransferRecord rec;
    slot = source_.fetch(task_.images[static_cast<std::size_t>(index)], spec_, &rec);
    transfers_.push_back(rec);
  }
  return slot;
}

double evaluate(const EdgeNetwork<float>& net, FeatureBank& bank, const TaskData& task,
                std::span<const i64> indices) {
  if (indices.empty()) throw ContractError("evaluate: empty split");
  i64 correct = 0;
  for (i64 idx : indices) {
    const Tensor<float> logits = lae_forward(bank.get(idx), net);
    if (argmax(logits) == task.labels[static_cast<std::size_t>(idx)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

std::vector<i64> shuffled_indices(std::span<const i64> indices, u64 seed, i64 epoch) {
  std::vector<i64> out(indices.begin(), indices.end());
  CounterRng rng(seed, "shuffle" + std::to_string(epoch));
  for (i64 i = static_cast<i64>(out.size()) - 1; i > 0; --i) {
    const i64 j = static_cast<i64>(rng.uniform_int(static_cast<u64>(i), static_cast<u64>(i + 1)));
    std::swap(out[static_cast<std::size_t>(i)], out[static_cast<std::size_t>(j)]);
  }
  return out;
}

TrainResult train_edge(EdgeNetwork<float>& net, const TaskData& task, FeatureSource& source,
                       const GatherSpec& spec, const TrainConfig& cfg, bool eval_test) {
  if (cfg.batch_size < 1 || cfg.epochs < 0) throw ContractError("train_edge: bad config");
  for (i64 idx : task.train_idx)
    if (task.labels[static_cast<std::size_t>(idx)] >= net.cfg.num_classes)
      throw ContractError("train_edge: label exceeds the head's class count");

  FeatureBank bank(task, source, spec);
  auto params = net.params();
  Adam<float> adam(params, cfg.beta1, cfg.beta2, cfg.adam_eps);
  const i64 batches_per_epoch =
      (static_cast<i64>(task.train_idx.size()) + cfg.batch_size - 1) / cfg.batch_size;
  const i64 total_steps = cfg.epochs * batches_per_epoch;
  const i64 warmup_steps = cfg.warmup_epochs * batches_per_epoch;

  TrainResult result;
  i64 step = 0;
  for (i64 epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<i64> order = shuffled_indices(task.train_idx, cfg.seed, epoch);
    double loss_sum = 0.0;
    double first_lr = cosine_lr(cfg.lr, step, total_steps, warmup_steps);
    for (i64 b = 0; b < batches_per_epoch; ++b) {
      const i64 lo = b * cfg.batch_size;
      const i64 hi = std::min<i64>(lo + cfg.batch_size, static_cast<i64>(order.size()));
      Tape<float> tape;
      net.watch(tape);
      Tensor<float> total = Tensor<float>::scalar(0.0f);
      for (i64 s = lo; s < hi; ++s) {
        const i64 idx = order[static_cast<std::size_t>(s)];
        total = add(total, cross_entropy_logits(lae_forward(bank.get(idx), net),
                                                task.labels[static_cast<std::size_t>(idx)]));
      }
      Tensor<float> loss = scale(total, 1.0f / static_cast<float>(hi - lo));
      const double loss_value = static_cast<double>(loss.value());
      if (!std::isfinite(loss_value))
        throw TrainingDiverged("train_edge: non-finite loss at epoch " + std::to_string(epoch) +
                               ", step " + std::to_string(step));
      auto grads = backward(loss, tape);
      adam.step(grads, cosine_lr(cfg.lr, step, total_steps, warmup_steps));
      net.detach();
      loss_sum += loss_value * static_cast<double>(hi - lo);
      ++step;
    }
    EpochStats es;
    es.epoch = epoch;
    es.lr = first_lr;
    es.train_loss = loss_sum / static_cast<double>(task.train_idx.size());
    es.val_acc = evaluate(net, bank, task, task.val_idx);
    result.history.push_back(es);
  }
  result.final_val_acc =
      result.history.empty() ? evaluate(net, bank, task, task.val_idx) : result.history.back().val_acc;
  if (eval_test) result.final_test_acc = evaluate(net, bank, task, task.test_idx);
  result.transfers = bank.transfers();
  return result;
}

void write_metrics_csv(const std::string& path, const TrainResult& result) {
  std::string out = "epoch,lr,train_loss,val_acc\n";
  char line[160];
  for (const EpochStats& e : result.history) {
    std::snprintf(line, sizeof(line), "%lld,%.17g,%.17g,%.17g\n", static_cast<long long>(e.epoch),
                  e.lr, e.train_loss, e.val_acc);
    out += line;
  }
  write_file(path, {reinterpret_cast<const u8*>(out.data()), out.size()});
}

}  // namespace edgetune
