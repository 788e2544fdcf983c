#pragma once

#include "edgetune/trainer.hpp"

namespace edgetune {

// Experiment drivers: k selection on the validation split, the ablation
// baselines, and the cost + accuracy report.

enum class BaselineKind : u8 { linear_probe = 0, gather_probe = 1, lae_only = 2, miet = 3 };

inline const char* baseline_name(BaselineKind b) {
  switch (b) {
    case BaselineKind::linear_probe: return "linear_probe";
    case BaselineKind::gather_probe: return "gather_probe";
    case BaselineKind::lae_only: return "lae_only";
    case BaselineKind::miet: return "miet";
  }
  return "?";
}

// {N/2, 3N/4, N}, ascending.
std::vector<i64> k_candidates(i64 n_blocks);

// Trains one edge network per candidate (same seed and schedule) and returns
// the k with the best validation accuracy; ties go to the larger k. The test
// split is never touched.
i64 select_k(const TaskData& task, FeatureSource& source, const EdgeNetConfig& edge_cfg,
             const TrainConfig& train_cfg, std::span<const i64> candidates);

struct BaselineOptions {
  EdgeNetConfig edge;       // d/num_classes filled by the harness
  TrainConfig train;
  i64 k = -1;               // -1 = select on validation (miet only)
  bool select_lr = false;   // grid {3e-3, 1e-3, 3e-4} by validation accuracy
};

struct BaselineResult {
  BaselineKind kind;
  GatherSpec spec;
  EdgeNetConfig edge;
  i64 chosen_k = -1;
  double chosen_lr = 0;
  double val_acc = 0;
  double test_acc = 0;
  TrainResult detail;
};

BaselineResult run_baseline(BaselineKind kind, const TaskData& task, FeatureSource& source,
                            const BaselineOptions& opts);

// One row of the cost + accuracy table. Every cell comes from the module
// counters (count_params, count_macs_*, bytes_per_image) plus the run.
struct ReportRow {
  std::string method;
  std::string task;
  u64 seed = 0;
  i64 k = -1;
  double lr = 0;
  u64 params_body = 0;
  u64 params_head = 0;
  u64 macs_cloud = 0;
  u64 macs_edge = 0;
  double transfer_mb = 0;
  double val_acc = 0;
  double test_acc = 0;
  u64 peak_rss_bytes = 0;
};

ReportRow make_report_row(const BaselineResult& result, const TaskData& task,
                          const std::string& task_name);

u64 peak_rss_bytes();

void write_summary_csv(const std::string& path, std::span<const ReportRow> rows);
std::vector<ReportRow> read_summary_csv(const std::string& path);

// Scans run directories for summary.csv files and renders the joint table.
std::vector<ReportRow> collect_runs(const std::string& runs_dir);
std::string report_table(std::span<const ReportRow> rows);

// Table-1-style static overhead table for a config: one row per gather mode
// plus the raw input image accounted both as u8 and as f32.
std::string overhead_table(const ViTConfig& cfg);

}  // namespace edgetune
