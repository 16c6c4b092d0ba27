#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ocil/clustering.hpp"
#include "ocil/data.hpp"
#include "ocil/errors.hpp"
#include "ocil/linalg.hpp"

namespace ocil {

enum class MemoryPolicy { cluster, herding, random, reservoir, greedy_balanced };

inline std::string to_string(MemoryPolicy p) {
  switch (p) {
    case MemoryPolicy::cluster: return "cluster";
    case MemoryPolicy::herding: return "herding";
    case MemoryPolicy::random: return "random";
    case MemoryPolicy::reservoir: return "reservoir";
    case MemoryPolicy::greedy_balanced: return "greedy_balanced";
  }
  return "unknown";
}

inline MemoryPolicy parse_memory_policy(const std::string& s) {
  if (s == "cluster") return MemoryPolicy::cluster;
  if (s == "herding") return MemoryPolicy::herding;
  if (s == "random") return MemoryPolicy::random;
  if (s == "reservoir") return MemoryPolicy::reservoir;
  if (s == "greedy_balanced") return MemoryPolicy::greedy_balanced;
  throw InvalidConfig("unknown exemplar policy '" + s + "'");
}

inline bool is_capacity_policy(MemoryPolicy p) {
  return p == MemoryPolicy::reservoir || p == MemoryPolicy::greedy_balanced;
}

// Retained samples under a per-class budget q (cluster, herding, random) or a
// total capacity K (reservoir, greedy_balanced). Stored as a flat slot array
// so reservoir replacement can address slots globally.
class ExemplarSet {
 public:
  ExemplarSet() = default;
  ExemplarSet(MemoryPolicy policy, std::size_t budget) : policy_(policy), budget_(budget) {}

  MemoryPolicy policy() const { return policy_; }
  std::size_t budget() const { return budget_; }
  std::size_t stream_counter() const { return stream_counter_; }
  std::size_t size() const { return slots_.size(); }
  bool empty() const { return slots_.empty(); }
  const std::vector<Sample>& slots() const { return slots_; }

  std::vector<Sample> per_class(ClassId c) const {
    std::vector<Sample> out;
    for (const auto& s : slots_)
      if (s.label == c) out.push_back(s);
    return out;
  }

  std::map<ClassId, std::size_t> class_counts() const {
    std::map<ClassId, std::size_t> out;
    for (const auto& s : slots_) ++out[s.label];
    return out;
  }

  std::vector<ClassId> classes() const {
    std::vector<ClassId> out;
    for (const auto& [c, _] : class_counts()) out.push_back(c);
    return out;
  }

  // Replaces everything stored for class c. Per-class policies only.
  void set_class(ClassId c, std::vector<Sample> samples) {
    if (is_capacity_policy(policy_))
      throw InvalidInput("set_class is not available for capacity policies");
    if (samples.size() > budget_) throw InvalidInput("exemplar list exceeds per-class budget");
    for (const auto& s : samples)
      if (s.label != c) throw LabelError("exemplar label does not match its class");
    std::erase_if(slots_, [c](const Sample& s) { return s.label == c; });
    slots_.insert(slots_.end(), std::make_move_iterator(samples.begin()),
                  std::make_move_iterator(samples.end()));
  }

  // Budget invariants: |E_c| <= q per class, or total <= K.
  bool satisfies_budget() const {
    if (is_capacity_policy(policy_)) return slots_.size() <= budget_;
    for (const auto& [_, n] : class_counts())
      if (n > budget_) return false;
    return true;
  }

 private:
  friend void reservoir_update(ExemplarSet&, const Sample&, Rng&);
  friend void greedy_balanced_update(ExemplarSet&, const Sample&, Rng&);
  friend void from_json(const nlohmann::json&, ExemplarSet&);

  MemoryPolicy policy_ = MemoryPolicy::cluster;
  std::size_t budget_ = 0;
  std::size_t stream_counter_ = 0;
  std::vector<Sample> slots_;
};

// Number of picks per cluster under Algorithm 1 with the small-cluster
// fallback: clusters smaller than the running even share are stored whole and
// the share is recomputed over what remains. Leftover budget is handed out one
// per cluster in decreasing size order, repeating while capacity remains.
inline std::vector<std::size_t> allocate_cluster_quota(std::span<const std::size_t> sizes,
                                                       std::size_t q) {
  const std::size_t n = sizes.size();
  std::vector<std::size_t> quota(n, 0);
  if (n == 0) return quota;

  std::vector<std::size_t> active(n);
  std::iota(active.begin(), active.end(), 0);
  std::size_t budget = q;
  std::size_t share = 0;
  while (!active.empty()) {
    share = budget / active.size();
    std::vector<std::size_t> keep;
    bool changed = false;
    for (auto i : active) {
      if (sizes[i] < share) {
        quota[i] = sizes[i];
        budget -= sizes[i];
        changed = true;
      } else {
        keep.push_back(i);
      }
    }
    active.swap(keep);
    if (!changed) break;
  }
  for (auto i : active) {
    quota[i] = share;
    budget -= share;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sizes[a] > sizes[b]; });
  while (budget > 0) {
    bool progress = false;
    for (auto i : order) {
      if (budget == 0) break;
      if (quota[i] < sizes[i]) {
        ++quota[i];
        --budget;
        progress = true;
      }
    }
    if (!progress) break;
  }
  return quota;
}

// Indices of the chosen exemplars: from each cluster, the quota nearest to
// that cluster's mean (mean computed once, picks removed as they are taken).
inline std::vector<std::size_t> select_from_clusters(const Matrix& features,
                                                     const ClusterAssignment& clusters,
                                                     std::size_t q) {
  std::vector<std::size_t> sizes;
  for (const auto& c : clusters.clusters) sizes.push_back(c.size());
  const auto quota = allocate_cluster_quota(sizes, q);

  std::vector<std::size_t> picks;
  for (std::size_t ci = 0; ci < clusters.size(); ++ci) {
    const auto& members = clusters.clusters[ci];
    RowVector mean = RowVector::Zero(features.cols());
    for (auto m : members) mean += features.row(static_cast<Eigen::Index>(m));
    mean /= static_cast<double>(members.size());

    std::vector<std::size_t> remaining = members;
    for (std::size_t j = 0; j < quota[ci]; ++j) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < remaining.size(); ++r) {
        const double d = (mean - features.row(static_cast<Eigen::Index>(remaining[r]))).norm();
        if (d < best_d) {
          best_d = d;
          best = r;
        }
      }
      picks.push_back(remaining[best]);
      remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best));
    }
  }
  return picks;
}

inline std::vector<Sample> select_cluster_exemplars(std::span<const Sample> class_data,
                                                    const Matrix& features, std::size_t q,
                                                    const PicConfig& pic = {}) {
  if (class_data.empty()) throw InvalidInput("no samples to select exemplars from");
  if (static_cast<std::size_t>(features.rows()) != class_data.size())
    throw ShapeError("one feature row per sample required");
  const auto clusters = cluster_class(features, pic);
  std::vector<Sample> out;
  for (auto i : select_from_clusters(features, clusters, q)) out.push_back(class_data[i]);
  return out;
}

// Herding: the k-th pick keeps the running mean of the picks closest to the
// class mean.
inline std::vector<std::size_t> herding_order(const Matrix& features, std::size_t q) {
  const auto n = static_cast<std::size_t>(features.rows());
  const RowVector mu = features.colwise().mean();
  std::vector<bool> taken(n, false);
  RowVector running = RowVector::Zero(features.cols());
  std::vector<std::size_t> picks;
  for (std::size_t k = 1; k <= std::min(q, n); ++k) {
    std::size_t best = n;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const double d =
          (mu - (running + features.row(static_cast<Eigen::Index>(i))) / static_cast<double>(k))
              .norm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    taken[best] = true;
    running += features.row(static_cast<Eigen::Index>(best));
    picks.push_back(best);
  }
  return picks;
}

inline std::vector<Sample> select_herding_exemplars(std::span<const Sample> class_data,
                                                    const Matrix& features, std::size_t q) {
  if (class_data.empty()) throw InvalidInput("no samples to select exemplars from");
  if (static_cast<std::size_t>(features.rows()) != class_data.size())
    throw ShapeError("one feature row per sample required");
  std::vector<Sample> out;
  for (auto i : herding_order(features, q)) out.push_back(class_data[i]);
  return out;
}

inline std::vector<Sample> select_random_exemplars(std::span<const Sample> class_data,
                                                   std::size_t q, Rng& rng) {
  if (class_data.empty()) throw InvalidInput("no samples to select exemplars from");
  std::vector<Sample> out;
  std::sample(class_data.begin(), class_data.end(), std::back_inserter(out), q, rng);
  return out;
}

inline void reservoir_update(ExemplarSet& memory, const Sample& sample, Rng& rng) {
  if (memory.policy_ != MemoryPolicy::reservoir)
    throw InvalidInput("reservoir_update needs a reservoir memory");
  ++memory.stream_counter_;
  if (memory.slots_.size() < memory.budget_) {
    memory.slots_.push_back(sample);
    return;
  }
  if (memory.budget_ == 0) return;
  std::uniform_int_distribution<std::size_t> pick(0, memory.stream_counter_ - 1);
  const std::size_t j = pick(rng);
  if (j < memory.budget_) memory.slots_[j] = sample;
}

// Stores the sample while under capacity or when its class holds fewer
// samples than the largest class, evicting a random sample of a (randomly
// chosen) largest class once full.
inline void greedy_balanced_update(ExemplarSet& memory, const Sample& sample, Rng& rng) {
  if (memory.policy_ != MemoryPolicy::greedy_balanced)
    throw InvalidInput("greedy_balanced_update needs a greedy_balanced memory");
  ++memory.stream_counter_;
  if (memory.slots_.size() < memory.budget_) {
    memory.slots_.push_back(sample);
    return;
  }
  if (memory.budget_ == 0) return;
  const auto counts = memory.class_counts();
  std::size_t max_count = 0;
  for (const auto& [_, n] : counts) max_count = std::max(max_count, n);
  const auto it = counts.find(sample.label);
  const std::size_t own = it == counts.end() ? 0 : it->second;
  if (own >= max_count) return;

  std::vector<ClassId> largest;
  for (const auto& [c, n] : counts)
    if (n == max_count) largest.push_back(c);
  const ClassId victim_class =
      largest[std::uniform_int_distribution<std::size_t>(0, largest.size() - 1)(rng)];
  std::vector<std::size_t> victims;
  for (std::size_t i = 0; i < memory.slots_.size(); ++i)
    if (memory.slots_[i].label == victim_class) victims.push_back(i);
  const std::size_t slot =
      victims[std::uniform_int_distribution<std::size_t>(0, victims.size() - 1)(rng)];
  memory.slots_[slot] = sample;
}

// Uniform draws over all stored exemplars, with replacement.
inline std::vector<Sample> draw_replay(const ExemplarSet& memory, std::size_t count, Rng& rng) {
  if (memory.empty()) throw EmptyMemory("cannot draw replay samples from an empty memory");
  std::uniform_int_distribution<std::size_t> pick(0, memory.size() - 1);
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(memory.slots()[pick(rng)]);
  return out;
}

// ---------------------------------------------------------------------------
// JSON: {"policy", "budget", "stream_counter", "classes": {"<id>": [...]}}

inline nlohmann::json sample_to_json(const Sample& s) {
  nlohmann::json j;
  j["payload"] = s.payload;
  j["arrival_index"] = s.arrival_index;
  if (s.shape.is_image()) j["shape"] = {s.shape.height, s.shape.width, s.shape.channels};
  return j;
}

inline void to_json(nlohmann::json& j, const ExemplarSet& m) {
  j = nlohmann::json::object();
  j["policy"] = to_string(m.policy());
  j["budget"] = m.budget();
  j["stream_counter"] = m.stream_counter();
  nlohmann::json classes = nlohmann::json::object();
  std::vector<ClassId> order;
  for (const auto& s : m.slots()) {
    classes[std::to_string(s.label)].push_back(sample_to_json(s));
    order.push_back(s.label);
  }
  j["classes"] = std::move(classes);
  // Slot order matters to replay draws; classes alone would lose it.
  j["slot_labels"] = std::move(order);
}

inline void from_json(const nlohmann::json& j, ExemplarSet& m) {
  m = ExemplarSet(parse_memory_policy(j.at("policy").get<std::string>()),
                  j.at("budget").get<std::size_t>());
  m.stream_counter_ = j.value("stream_counter", std::size_t{0});
  std::vector<ClassId> order;
  if (j.contains("slot_labels")) {
    order = j["slot_labels"].get<std::vector<ClassId>>();
  } else {
    for (const auto& [key, list] : j.at("classes").items())
      order.insert(order.end(), list.size(), std::stoi(key));
  }
  std::map<ClassId, std::size_t> cursor;
  for (ClassId label : order) {
    const auto& list = j.at("classes").at(std::to_string(label));
    const std::size_t idx = cursor[label]++;
    if (idx >= list.size()) throw FormatError("slot_labels inconsistent with classes");
    const auto& entry = list[idx];
    Sample s;
    s.label = label;
    s.payload = entry.at("payload").get<std::vector<double>>();
    s.arrival_index = entry.value("arrival_index", std::size_t{0});
    if (entry.contains("shape")) {
      const auto dims = entry["shape"].get<std::vector<std::size_t>>();
      if (dims.size() != 3) throw FormatError("exemplar shape must have 3 entries");
      s.shape = {dims[0], dims[1], dims[2]};
    }
    m.slots_.push_back(std::move(s));
  }
}

}  // namespace ocil
