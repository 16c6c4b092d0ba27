#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ocil/errors.hpp"
#include "ocil/exemplar.hpp"
#include "ocil/linalg.hpp"
#include "ocil/ncm.hpp"
#include "ocil/nn.hpp"

namespace ocil {

// Maps class ids to head indices. Heads are allocated in the order classes
// are first seen.
class HeadMap {
 public:
  HeadMap() = default;
  explicit HeadMap(std::vector<ClassId> classes) : classes_(std::move(classes)) {}

  void append(std::span<const ClassId> classes) {
    classes_.insert(classes_.end(), classes.begin(), classes.end());
  }
  std::size_t size() const { return classes_.size(); }
  const std::vector<ClassId>& classes() const { return classes_; }
  ClassId class_of(std::size_t head) const { return classes_.at(head); }

  std::size_t head_of(ClassId c) const {
    auto it = std::find(classes_.begin(), classes_.end(), c);
    if (it == classes_.end()) throw LabelError("class " + std::to_string(c) + " has no head");
    return static_cast<std::size_t>(it - classes_.begin());
  }

  std::vector<std::size_t> heads_of(std::span<const Sample> batch) const {
    std::vector<std::size_t> out;
    out.reserve(batch.size());
    for (const auto& s : batch) out.push_back(head_of(s.label));
    return out;
  }

 private:
  std::vector<ClassId> classes_;
};

// Ranks of targets among score rows: hit when fewer than k entries beat the
// target (strictly higher score, or equal score at a lower index).
inline std::vector<bool> topk_hits(const Matrix& scores, std::span<const std::size_t> targets,
                                   std::size_t k) {
  std::vector<bool> hits(targets.size());
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    const auto t = static_cast<Eigen::Index>(targets[static_cast<std::size_t>(r)]);
    const double v = scores(r, t);
    std::size_t better = 0;
    for (Eigen::Index c = 0; c < scores.cols(); ++c)
      if (scores(r, c) > v || (scores(r, c) == v && c < t)) ++better;
    hits[static_cast<std::size_t>(r)] = better < k;
  }
  return hits;
}

enum class Averaging { micro, macro };

inline double hit_rate(const std::vector<bool>& hits, std::span<const Sample> test,
                       Averaging averaging) {
  if (averaging == Averaging::micro) {
    const auto n = std::count(hits.begin(), hits.end(), true);
    return static_cast<double>(n) / static_cast<double>(hits.size());
  }
  std::map<ClassId, std::pair<std::size_t, std::size_t>> per;
  for (std::size_t i = 0; i < test.size(); ++i) {
    auto& [hit, total] = per[test[i].label];
    hit += hits[i] ? 1 : 0;
    ++total;
  }
  double sum = 0.0;
  for (const auto& [_, ht] : per)
    sum += static_cast<double>(ht.first) / static_cast<double>(ht.second);
  return sum / static_cast<double>(per.size());
}

// Top-k accuracy of the softmax head over the seen-class test data.
inline double evaluate_step(const Classifier& model, const HeadMap& heads,
                            std::span<const Sample> test, std::size_t top_k = 1,
                            Averaging averaging = Averaging::micro) {
  if (test.empty()) throw InvalidEval("empty test set");
  if (top_k < 1) throw InvalidEval("top_k must be at least 1");
  const Matrix logits = forward(model, test);
  const auto targets = heads.heads_of(test);
  return hit_rate(topk_hits(logits, targets, top_k), test, averaging);
}

// Same protocol with nearest-class-mean predictions (scores = -distance).
inline double evaluate_step_ncm(const Classifier& model, const ExemplarSet& memory,
                                std::span<const Sample> test, std::size_t top_k = 1,
                                Averaging averaging = Averaging::micro) {
  if (test.empty()) throw InvalidEval("empty test set");
  if (top_k < 1) throw InvalidEval("top_k must be at least 1");
  const auto means = class_means(model, memory);
  const Matrix scores = -ncm_distances(means, extract_features(model, test));
  std::vector<std::size_t> targets;
  for (const auto& s : test) {
    auto it = std::find(means.classes.begin(), means.classes.end(), s.label);
    if (it == means.classes.end())
      throw InvalidEval("no exemplars for test class " + std::to_string(s.label));
    targets.push_back(static_cast<std::size_t>(it - means.classes.begin()));
  }
  return hit_rate(topk_hits(scores, targets, top_k), test, averaging);
}

struct Summary {
  double avg = 0.0;
  double last = 0.0;
};

// Avg over per-step accuracies (optionally skipping the initial task) and
// the final entry.
inline Summary summarize(std::span<const double> per_step, bool include_initial = true) {
  if (per_step.empty()) throw InvalidEval("no per-step accuracies");
  auto first = per_step.begin();
  if (!include_initial && per_step.size() > 1) ++first;
  Summary s;
  s.avg = std::accumulate(first, per_step.end(), 0.0) /
          static_cast<double>(std::distance(first, per_step.end()));
  s.last = per_step.back();
  return s;
}

struct RunMetrics {
  std::string method;
  std::uint64_t seed = 0;
  std::size_t top_k = 1;
  std::vector<double> per_step_accuracy;
  double avg = 0.0;
  double last = 0.0;
  bool failed = false;
  std::string error;

  void finalize(bool include_initial = true) {
    const auto s = summarize(per_step_accuracy, include_initial);
    avg = s.avg;
    last = s.last;
  }
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

inline MeanStd mean_std(std::span<const double> xs) {
  MeanStd out;
  if (xs.empty()) return out;
  out.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return out;
}

struct AggregateMetrics {
  std::string method;
  std::size_t runs = 0;
  std::vector<MeanStd> per_step;
  MeanStd avg;
  MeanStd last;
};

// Mean and sample standard deviation across seeds; failed runs are skipped.
inline AggregateMetrics aggregate_seeds(std::span<const RunMetrics> runs) {
  AggregateMetrics out;
  std::vector<const RunMetrics*> ok;
  for (const auto& r : runs)
    if (!r.failed) ok.push_back(&r);
  if (ok.empty()) return out;
  out.method = ok.front()->method;
  out.runs = ok.size();
  const std::size_t steps = ok.front()->per_step_accuracy.size();
  for (const auto* r : ok)
    if (r->per_step_accuracy.size() != steps)
      throw InvalidEval("runs disagree on the number of steps");
  std::vector<double> col;
  for (std::size_t s = 0; s < steps; ++s) {
    col.clear();
    for (const auto* r : ok) col.push_back(r->per_step_accuracy[s]);
    out.per_step.push_back(mean_std(col));
  }
  col.clear();
  for (const auto* r : ok) col.push_back(r->avg);
  out.avg = mean_std(col);
  col.clear();
  for (const auto* r : ok) col.push_back(r->last);
  out.last = mean_std(col);
  return out;
}

// ---------------------------------------------------------------------------
// Output formats.

// Shortest round-trip decimal form.
inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline nlohmann::json to_json(const RunMetrics& m) {
  nlohmann::json j = {{"method", m.method},
                      {"seed", m.seed},
                      {"top_k", m.top_k},
                      {"per_step_accuracy", m.per_step_accuracy},
                      {"avg", m.avg},
                      {"last", m.last},
                      {"failed", m.failed}};
  if (m.failed) j["error"] = m.error;
  return j;
}

inline nlohmann::json to_json(const AggregateMetrics& a) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : a.per_step) steps.push_back({{"mean", s.mean}, {"std", s.std}});
  return {{"method", a.method},
          {"runs", a.runs},
          {"per_step", steps},
          {"avg", {{"mean", a.avg.mean}, {"std", a.avg.std}}},
          {"last", {{"mean", a.last.mean}, {"std", a.last.std}}}};
}

// Flat rows `method,seed,step,accuracy`.
inline void write_metrics_csv(std::ostream& out, std::span<const RunMetrics> runs) {
  out << "method,seed,step,accuracy\n";
  for (const auto& r : runs) {
    if (r.failed) continue;
    for (std::size_t s = 0; s < r.per_step_accuracy.size(); ++s)
      out << r.method << ',' << r.seed << ',' << s << ',' << format_double(r.per_step_accuracy[s])
          << '\n';
  }
}

struct CsvRow {
  std::string method;
  std::uint64_t seed = 0;
  std::size_t step = 0;
  double accuracy = 0.0;
  friend bool operator==(const CsvRow&, const CsvRow&) = default;
};

inline std::vector<CsvRow> read_metrics_csv(std::istream& in) {
  std::vector<CsvRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (line != "method,seed,step,accuracy") throw ParseError(line_no, "unexpected header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i)
      if (i == line.size() || line[i] == ',') {
        f.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    if (f.size() != 4) throw ParseError(line_no, "expected 4 fields");
    CsvRow r;
    r.method = f[0];
    auto parse = [&](const std::string& s, auto& v) {
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size())
        throw ParseError(line_no, "bad field '" + s + "'");
    };
    parse(f[1], r.seed);
    parse(f[2], r.step);
    parse(f[3], r.accuracy);
    rows.push_back(std::move(r));
  }
  return rows;
}

// Whitespace-delimited `step mean std` rows for plotting accuracy per step.
inline void write_curve(std::ostream& out, const AggregateMetrics& a) {
  out << "# " << a.method << " (" << a.runs << " runs)\n# step mean std\n";
  for (std::size_t s = 0; s < a.per_step.size(); ++s)
    out << s << ' ' << format_double(a.per_step[s].mean) << ' '
        << format_double(a.per_step[s].std) << '\n';
}

}  // namespace ocil
