#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ocil/config.hpp"
#include "ocil/data.hpp"
#include "ocil/learner.hpp"
#include "ocil/metrics.hpp"

namespace ocil {

struct ExperimentData {
  StreamPartition partition;
  std::vector<ClassId> classes;
  std::size_t dim = 0;
};

// Per-class sizes drawn uniformly from [lo, hi].
inline std::vector<std::size_t> draw_class_counts(std::size_t classes, std::size_t lo,
                                                  std::size_t hi, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> u(lo, hi);
  std::vector<std::size_t> out(classes);
  for (auto& c : out) c = u(rng);
  return out;
}

inline ExperimentData load_data(const DataConfig& d) {
  ExperimentData out;
  switch (d.source) {
    case DataSource::blobs: {
      BlobOptions opts;
      opts.modes_per_class = d.modes;
      opts.mode_offset = d.mode_offset;
      opts.min_separation = d.min_separation;
      opts.test_fraction = d.test_fraction;
      const auto counts = draw_class_counts(d.classes, d.count_min, d.count_max, d.seed + 1);
      out.partition = generate_blob_stream(d.classes, d.dim, counts, d.spread, d.seed, opts);
      break;
    }
    case DataSource::csv:
      out.partition = ingest_feature_csv(d.path, d.test_fraction, d.seed);
      break;
    case DataSource::idx:
      out.partition = ingest_idx_images(d.images, d.labels, d.test_fraction, d.seed);
      break;
  }
  out.classes = out.partition.classes();
  out.dim = out.partition.payload_dim();
  return out;
}

struct CellResult {
  RunMetrics metrics;
  UpdateAudit audit;
  std::vector<Classifier> checkpoints;  // model after each step
};

// One (method, seed) cell: class order, stream order and initialization all
// derive from the seed.
inline CellResult run_cell(const ExperimentData& data, std::size_t initial_classes,
                           std::size_t step_size, LearnerConfig cfg, std::size_t top_k,
                           Averaging averaging, bool include_initial, bool keep_checkpoints) {
  CellResult out;
  out.metrics.method = to_string(cfg.method);
  out.metrics.seed = cfg.seed;
  out.metrics.top_k = top_k;
  const auto schedule = build_schedule(data.classes, initial_classes, step_size, cfg.seed);
  const auto streams = arrange_stream(data.partition, schedule, cfg.seed);
  Learner learner(cfg, data.dim, data.classes.size());
  for (std::size_t t = 0; t < schedule.task_count(); ++t) {
    if (t == 0) {
      learner.run_initial_task(streams.tasks[0], schedule.initial_classes);
    } else {
      learner.run_incremental_step(streams.tasks[t], schedule.steps[t - 1]);
    }
    const auto test = collect_test(data.partition, schedule.seen_through(t));
    out.metrics.per_step_accuracy.push_back(learner.evaluate(test, top_k, averaging));
    if (keep_checkpoints) out.checkpoints.push_back(learner.model());
  }
  out.metrics.finalize(include_initial);
  out.audit = learner.audit();
  return out;
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> workers;
  for (std::size_t w = 0; w < jobs; ++w)
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
}

struct ExperimentReport {
  std::filesystem::path directory;
  std::vector<RunMetrics> runs;
  std::vector<AggregateMetrics> aggregates;
  std::size_t failed = 0;
};

inline std::string results_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("OCIL_RESULTS")) return env;
  return "results";
}

// Executes every (method, seed) cell and writes:
//   config.ini, metrics.json, metrics.csv, curves/<method>.dat,
//   checkpoints/<method>-seed<s>-step<k>.{bin,json}, losses/<method>-seed<s>.csv
// under <root>/<name>-<config hash>/.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg, const std::string& root) {
  namespace fs = std::filesystem;
  const auto data = load_data(cfg.data);

  struct Cell {
    Method method;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (auto m : cfg.methods)
    for (auto s : cfg.seeds) cells.push_back({m, s});

  ExperimentReport report;
  report.directory = fs::path(root) / (cfg.name + "-" + config_hash(cfg));
  fs::create_directories(report.directory);
  std::vector<CellResult> results(cells.size());

  parallel_for(cells.size(), cfg.jobs, [&](std::size_t i) {
    auto lc = method_preset(cells[i].method, cfg.learner);
    lc.seed = cells[i].seed;
    try {
      results[i] = run_cell(data, cfg.initial_classes, cfg.step_size, lc, cfg.top_k, cfg.averaging,
                            cfg.include_initial_in_avg, cfg.checkpoints);
    } catch (const Error& e) {
      results[i].metrics.method = to_string(cells[i].method);
      results[i].metrics.seed = cells[i].seed;
      results[i].metrics.top_k = cfg.top_k;
      results[i].metrics.failed = true;
      results[i].metrics.error = e.what();
    }
  });

  for (auto& r : results) {
    report.failed += r.metrics.failed ? 1 : 0;
    report.runs.push_back(r.metrics);
  }
  for (auto m : cfg.methods) {
    std::vector<RunMetrics> subset;
    for (const auto& r : report.runs)
      if (r.method == to_string(m)) subset.push_back(r);
    auto agg = aggregate_seeds(subset);
    agg.method = to_string(m);
    report.aggregates.push_back(std::move(agg));
  }

  const auto& dir = report.directory;
  std::ofstream(dir / "config.ini", std::ios::binary) << canonical_config(cfg);
  {
    std::ofstream csv(dir / "metrics.csv", std::ios::binary);
    write_metrics_csv(csv, report.runs);
  }
  {
    nlohmann::json j;
    j["config_hash"] = config_hash(cfg);
    j["runs"] = nlohmann::json::array();
    for (const auto& r : report.runs) j["runs"].push_back(to_json(r));
    j["aggregates"] = nlohmann::json::array();
    for (const auto& a : report.aggregates) j["aggregates"].push_back(to_json(a));
    std::ofstream(dir / "metrics.json", std::ios::binary) << j.dump(2) << '\n';
  }
  fs::create_directories(dir / "curves");
  for (const auto& a : report.aggregates) {
    std::ofstream out(dir / "curves" / (a.method + ".dat"), std::ios::binary);
    write_curve(out, a);
  }
  if (cfg.checkpoints) {
    fs::create_directories(dir / "checkpoints");
    for (const auto& r : results)
      for (std::size_t k = 0; k < r.checkpoints.size(); ++k) {
        const auto stem = r.metrics.method + "-seed" + std::to_string(r.metrics.seed) + "-step" +
                          std::to_string(k);
        save_checkpoint(r.checkpoints[k], (dir / "checkpoints" / (stem + ".bin")).string(),
                        (dir / "checkpoints" / (stem + ".json")).string());
      }
  }
  if (cfg.loss_trace) {
    fs::create_directories(dir / "losses");
    for (const auto& r : results) {
      std::ofstream out(dir / "losses" /
                            (r.metrics.method + "-seed" + std::to_string(r.metrics.seed) + ".csv"),
                        std::ios::binary);
      out << "step,batch,total,distillation,cross_entropy\n";
      for (const auto& l : r.audit.losses)
        out << l.step << ',' << l.batch << ',' << format_double(l.total) << ','
            << format_double(l.distillation) << ',' << format_double(l.cross_entropy) << '\n';
    }
  }
  {
    std::ofstream out(dir / "report.txt", std::ios::binary);
    out << "method            runs  avg(mean±std)      last(mean±std)\n";
    for (const auto& a : report.aggregates) {
      char line[160];
      std::snprintf(line, sizeof line, "%-16s  %4zu  %.4f ± %.4f    %.4f ± %.4f\n",
                    a.method.c_str(), a.runs, a.avg.mean, a.avg.std, a.last.mean, a.last.std);
      out << line;
    }
    for (const auto& r : report.runs)
      if (r.failed) out << "FAILED " << r.method << " seed " << r.seed << ": " << r.error << '\n';
  }
  return report;
}

struct SweepTable {
  std::vector<std::size_t> budgets;
  std::vector<std::string> methods;
  // avg[method][budget index]
  std::map<std::string, std::vector<MeanStd>> avg;
  std::size_t failed = 0;
};

inline void write_sweep_table(std::ostream& out, const SweepTable& t) {
  out << "method";
  for (auto q : t.budgets) out << ",q=" << q;
  out << '\n';
  for (const auto& m : t.methods) {
    out << m;
    for (const auto& v : t.avg.at(m)) out << ',' << format_double(v.mean);
    out << '\n';
  }
}

// One experiment per exemplar budget; rows are methods, columns budgets.
inline SweepTable run_budget_sweep(ExperimentConfig cfg, const std::vector<std::size_t>& budgets,
                                   const std::string& root) {
  SweepTable table;
  table.budgets = budgets;
  for (auto m : cfg.methods) table.methods.push_back(to_string(m));
  for (auto q : budgets) {
    cfg.learner.budget_q = q;
    const auto report = run_experiment(cfg, root);
    table.failed += report.failed;
    for (const auto& a : report.aggregates) table.avg[a.method].push_back(a.avg);
  }
  namespace fs = std::filesystem;
  fs::create_directories(root);
  std::ofstream out(fs::path(root) / (cfg.name + "-budget-sweep.csv"), std::ios::binary);
  write_sweep_table(out, table);
  return table;
}

}  // namespace ocil
