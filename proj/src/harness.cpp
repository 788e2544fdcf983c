#include "edgetune/harness.hpp"

#include <sys/resource.h>

#include <cstdio>
#include <cstring>
#include <dirent.h>
#include <sstream>

#include "edgetune/weight_io.hpp"

namespace edgetune {

std::vector<i64> k_candidates(i64 n_blocks) {
  if (n_blocks < 1) throw ContractError("k_candidates: need at least one block");
  std::vector<i64> cand = {n_blocks / 2, 3 * n_blocks / 4, n_blocks};
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  return cand;
}

i64 select_k(const TaskData& task, FeatureSource& source, const EdgeNetConfig& edge_cfg,
             const TrainConfig& train_cfg, std::span<const i64> candidates) {
  if (task.val_idx.empty()) throw ContractError("select_k: empty validation split");
  if (candidates.empty()) throw ContractError("select_k: no candidates");
  i64 best_k = -1;
  double best_acc = -1.0;
  for (i64 k : candidates) {  // ascending; >= hands ties to the larger k
    EdgeNetwork<float> net = EdgeNetwork<float>::init(edge_cfg, train_cfg.seed);
    TrainResult r = train_edge(net, task, source, {GatherMode::sum, k}, train_cfg);
    if (r.final_val_acc >= best_acc) {
      best_acc = r.final_val_acc;
      best_k = k;
    }
  }
  return best_k;
}

namespace {

GatherSpec spec_for(BaselineKind kind, i64 k, i64 n_blocks) {
  switch (kind) {
    case BaselineKind::linear_probe: return {GatherMode::head_vector};
    case BaselineKind::gather_probe: return {GatherMode::sum, n_blocks};
    case BaselineKind::lae_only: return {GatherMode::last_only};
    case BaselineKind::miet: return {GatherMode::sum, k};
  }
  throw ContractError("spec_for: unknown baseline");
}

constexpr double kLrGrid[] = {3e-3, 1e-3, 3e-4};

}  // namespace

BaselineResult run_baseline(BaselineKind kind, const TaskData& task, FeatureSource& source,
                            const BaselineOptions& opts) {
  const i64 n = task.cfg.vit.n_blocks;
  EdgeNetConfig edge = opts.edge;
  edge.d = task.cfg.vit.d;
  edge.num_classes = task.cfg.classes;
  if (kind == BaselineKind::linear_probe || kind == BaselineKind::gather_probe) edge.L = 0;
  edge.validate();

  BaselineResult result;
  result.kind = kind;
  result.edge = edge;

  auto run_once = [&](const TrainConfig& tc, i64 k_fixed) {
    GatherSpec spec = spec_for(kind, k_fixed, n);
    EdgeNetwork<float> net = EdgeNetwork<float>::init(edge, tc.seed);
    TrainResult r = train_edge(net, task, source, spec, tc, /*eval_test=*/true);
    return std::pair<GatherSpec, TrainResult>(spec, std::move(r));
  };

  auto select_lr_value = [&](i64 k_fixed) {
    double best_lr = kLrGrid[0];
    double best_acc = -1.0;
    for (double lr : kLrGrid) {  // descending; strict > keeps the larger lr on ties
      TrainConfig tc = opts.train;
      tc.lr = lr;
      GatherSpec spec = spec_for(kind, k_fixed, n);
      EdgeNetwork<float> net = EdgeNetwork<float>::init(edge, tc.seed);
      TrainResult r = train_edge(net, task, source, spec, tc);
      if (r.final_val_acc > best_acc) {
        best_acc = r.final_val_acc;
        best_lr = lr;
      }
    }
    return best_lr;
  };

  TrainConfig tc = opts.train;
  i64 k = opts.k;
  if (kind == BaselineKind::miet && k < 0)
    k = select_k(task, source, edge, tc, k_candidates(n));
  if (kind != BaselineKind::miet) k = -1;
  if (opts.select_lr) tc.lr = select_lr_value(kind == BaselineKind::miet ? k : -1);

  auto [spec, detail] = run_once(tc, kind == BaselineKind::miet ? k : -1);
  result.spec = spec;
  result.chosen_k = kind == BaselineKind::miet ? k : spec.k;
  result.chosen_lr = tc.lr;
  result.val_acc = detail.final_val_acc;
  result.test_acc = detail.final_test_acc;
  result.detail = std::move(detail);
  return result;
}

ReportRow make_report_row(const BaselineResult& result, const TaskData& task,
                          const std::string& task_name) {
  ReportRow row;
  row.method = baseline_name(result.kind);
  row.task = task_name;
  row.seed = result.detail.history.empty() ? 0 : 0;
  row.k = result.chosen_k;
  row.lr = result.chosen_lr;
  const ParamCount pc = count_params(result.edge);
  row.params_body = pc.body;
  row.params_head = pc.head;
  row.macs_cloud = count_macs_backbone(task.cfg.vit);
  const i64 tokens = result.spec.mode == GatherMode::head_vector ? 1 : task.cfg.vit.tokens();
  row.macs_edge = count_macs_edge(result.edge, tokens);
  row.transfer_mb = bytes_to_mb(bytes_per_image(result.spec, task.cfg.vit, Dtype::f32));
  row.val_acc = result.val_acc;
  row.test_acc = result.test_acc;
  row.peak_rss_bytes = peak_rss_bytes();
  return row;
}

u64 peak_rss_bytes() {
  rusage usage{};
  getrusage(RUSAGE_SELF, &usage);
  return static_cast<u64>(usage.ru_maxrss) * 1024;  // ru_maxrss is KiB on Linux
}

namespace {

std::string csv_header() {
  return "method,task,seed,k,lr,params_body,params_head,macs_cloud,macs_edge,transfer_mb,"
         "val_acc,test_acc,peak_rss_bytes";
}

std::string row_to_csv(const ReportRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%s,%s,%llu,%lld,%.17g,%llu,%llu,%llu,%llu,%.17g,%.17g,%.17g,%llu",
                r.method.c_str(), r.task.c_str(), static_cast<unsigned long long>(r.seed),
                static_cast<long long>(r.k), r.lr, static_cast<unsigned long long>(r.params_body),
                static_cast<unsigned long long>(r.params_head),
                static_cast<unsigned long long>(r.macs_cloud),
                static_cast<unsigned long long>(r.macs_edge), r.transfer_mb, r.val_acc, r.test_acc,
                static_cast<unsigned long long>(r.peak_rss_bytes));
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

void write_summary_csv(const std::string& path, std::span<const ReportRow> rows) {
  std::string out = csv_header() + "\n";
  for (const ReportRow& r : rows) out += row_to_csv(r) + "\n";
  write_file(path, {reinterpret_cast<const u8*>(out.data()), out.size()});
}

std::vector<ReportRow> read_summary_csv(const std::string& path) {
  const auto bytes = read_file(path);
  std::stringstream ss(std::string(bytes.begin(), bytes.end()));
  std::string line;
  std::vector<ReportRow> rows;
  bool first = true;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line != csv_header()) throw IoError("summary csv '" + path + "' has an unknown header");
      continue;
    }
    auto cells = split_csv(line);
    if (cells.size() != 13) throw IoError("summary csv '" + path + "' has a malformed row");
    ReportRow r;
    r.method = cells[0];
    r.task = cells[1];
    r.seed = std::stoull(cells[2]);
    r.k = std::stoll(cells[3]);
    r.lr = std::stod(cells[4]);
    r.params_body = std::stoull(cells[5]);
    r.params_head = std::stoull(cells[6]);
    r.macs_cloud = std::stoull(cells[7]);
    r.macs_edge = std::stoull(cells[8]);
    r.transfer_mb = std::stod(cells[9]);
    r.val_acc = std::stod(cells[10]);
    r.test_acc = std::stod(cells[11]);
    r.peak_rss_bytes = std::stoull(cells[12]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ReportRow> collect_runs(const std::string& runs_dir) {
  std::vector<std::string> files;
  DIR* dir = ::opendir(runs_dir.c_str());
  if (!dir) throw IoError("cannot open runs directory '" + runs_dir + "'");
  while (dirent* entry = ::readdir(dir)) {
    const std::string name = entry->d_name;
    if (name == "." || name == "..") continue;
    const std::string sub = runs_dir + "/" + name;
    if (name.size() > 4 && name.substr(name.size() - 4) == ".csv") {
      files.push_back(sub);
    } else {
      const std::string nested = sub + "/summary.csv";
      if (FILE* f = std::fopen(nested.c_str(), "rb")) {
        std::fclose(f);
        files.push_back(nested);
      }
    }
  }
  ::closedir(dir);
  std::sort(files.begin(), files.end());
  std::vector<ReportRow> rows;
  for (const auto& f : files) {
    auto part = read_summary_csv(f);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  return rows;
}

std::string report_table(std::span<const ReportRow> rows) {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%-13s %-6s %5s %3s %9s %10s %12s %12s %9s %8s %8s %9s\n",
                "method", "task", "seed", "k", "lr", "params", "macs_cloud", "macs_edge",
                "mb/img", "val", "test", "rss_mb");
  out += buf;
  for (const ReportRow& r : rows) {
    std::snprintf(buf, sizeof(buf),
                  "%-13s %-6s %5llu %3lld %9.2e %10llu %12llu %12llu %9.3f %8.4f %8.4f %9.1f\n",
                  r.method.c_str(), r.task.c_str(), static_cast<unsigned long long>(r.seed),
                  static_cast<long long>(r.k), r.lr,
                  static_cast<unsigned long long>(r.params_body + r.params_head),
                  static_cast<unsigned long long>(r.macs_cloud),
                  static_cast<unsigned long long>(r.macs_edge), r.transfer_mb, r.val_acc,
                  r.test_acc, static_cast<double>(r.peak_rss_bytes) / (1024.0 * 1024.0));
    out += buf;
  }
  return out;
}

std::string overhead_table(const ViTConfig& cfg) {
  cfg.validate();
  char buf[160];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%-22s %14s %10s\n", "payload", "bytes", "MB/img");
  out += buf;
  auto line = [&](const std::string& name, u64 bytes) {
    std::snprintf(buf, sizeof(buf), "%-22s %14llu %10.3f\n", name.c_str(),
                  static_cast<unsigned long long>(bytes), bytes_to_mb(bytes));
    out += buf;
  };
  line("sum", bytes_per_image({GatherMode::sum, cfg.n_blocks}, cfg, Dtype::f32));
  line("stack", bytes_per_image({GatherMode::stack}, cfg, Dtype::f32));
  line("windowed", bytes_per_image({GatherMode::windowed, 0, 1}, cfg, Dtype::f32));
  line("last_only", bytes_per_image({GatherMode::last_only}, cfg, Dtype::f32));
  line("head_vector", bytes_per_image({GatherMode::head_vector}, cfg, Dtype::f32));
  const u64 pixels = static_cast<u64>(cfg.channels * cfg.image_size * cfg.image_size);
  line("input image (u8)", pixels);
  line("input image (f32)", pixels * 4);
  return out;
}

}  // namespace edgetune
