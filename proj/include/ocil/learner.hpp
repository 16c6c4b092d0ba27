#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ocil/augment.hpp"
#include "ocil/clustering.hpp"
#include "ocil/data.hpp"
#include "ocil/errors.hpp"
#include "ocil/exemplar.hpp"
#include "ocil/metrics.hpp"
#include "ocil/ncm.hpp"
#include "ocil/nn.hpp"

namespace ocil {

enum class Method {
  ours,
  finetune,
  upper_bound,
  er,
  gdumb,
  icarl_ncm,
  baseline,         // herding + unbalanced replay + distillation on identical batches
  baseline_exp,     // baseline with cluster-based exemplar selection
  baseline_regime,  // baseline with balanced + contrastive batches
};

inline std::string to_string(Method m) {
  switch (m) {
    case Method::ours: return "ours";
    case Method::finetune: return "finetune";
    case Method::upper_bound: return "upper_bound";
    case Method::er: return "er";
    case Method::gdumb: return "gdumb";
    case Method::icarl_ncm: return "icarl_ncm";
    case Method::baseline: return "baseline";
    case Method::baseline_exp: return "baseline_exp";
    case Method::baseline_regime: return "baseline_regime";
  }
  return "unknown";
}

inline Method parse_method(const std::string& s) {
  for (auto m : {Method::ours, Method::finetune, Method::upper_bound, Method::er, Method::gdumb,
                 Method::icarl_ncm, Method::baseline, Method::baseline_exp,
                 Method::baseline_regime})
    if (to_string(m) == s) return m;
  throw InvalidConfig("unknown method '" + s + "'");
}

// How an incremental step trains. Replay methods other than ER/GDumb share
// one batch loop parameterized by these switches.
enum class StepKind { replay, finetune, upper_bound, er, gdumb };

struct LearnerConfig {
  Method method = Method::ours;
  StepKind kind = StepKind::replay;
  MemoryPolicy exemplar_policy = MemoryPolicy::cluster;
  // Exactly b/2 replayed exemplars per b/2 fresh samples; otherwise a random
  // number in [0, fresh] per batch.
  bool balanced = true;
  // Student sees augmented exemplars (B_c); teacher sees the originals (B_o).
  bool contrastive = true;
  bool distill = true;
  bool ncm_inference = false;

  std::size_t batch_size = 32;
  std::size_t budget_q = 20;
  // Total capacity for reservoir / greedy memories; 0 means q x total classes.
  std::size_t capacity = 0;
  // Memory retrievals per b/2 fresh samples for ER; 0 means b/2.
  std::size_t er_retrievals = 0;
  std::size_t gdumb_passes = 1;
  bool upper_bound_reinit = false;

  LossConfig loss;
  AugmentPolicy augment;
  PicConfig pic{.normalize = true};
  Architecture arch = Architecture::mlp;
  std::size_t hidden = 64;
  std::uint64_t seed = 0;

  void validate() const {
    loss.validate();
    augment.validate();
    if (batch_size < 2) throw InvalidConfig("batch size must be at least 2");
    if (kind == StepKind::replay && balanced && batch_size % 2 != 0)
      throw InvalidConfig("balanced batches need an even batch size");
    if (budget_q < 1) throw InvalidConfig("exemplar budget must be at least 1");
    if (kind == StepKind::er && exemplar_policy != MemoryPolicy::reservoir)
      throw InvalidConfig("er needs a reservoir memory");
    if (kind == StepKind::gdumb && exemplar_policy != MemoryPolicy::greedy_balanced)
      throw InvalidConfig("gdumb needs a greedy_balanced memory");
    if (kind == StepKind::replay && is_capacity_policy(exemplar_policy))
      throw InvalidConfig("replay methods need a per-class exemplar policy");
  }
};

// Applies the method's fixed switches on top of `base` (which supplies the
// shared hyperparameters).
inline LearnerConfig method_preset(Method m, LearnerConfig base = {}) {
  base.method = m;
  base.ncm_inference = false;
  switch (m) {
    case Method::ours:
      base.kind = StepKind::replay;
      base.exemplar_policy = MemoryPolicy::cluster;
      base.balanced = base.contrastive = base.distill = true;
      break;
    case Method::baseline:
      base.kind = StepKind::replay;
      base.exemplar_policy = MemoryPolicy::herding;
      base.balanced = base.contrastive = false;
      base.distill = true;
      break;
    case Method::baseline_exp:
      base.kind = StepKind::replay;
      base.exemplar_policy = MemoryPolicy::cluster;
      base.balanced = base.contrastive = false;
      base.distill = true;
      break;
    case Method::baseline_regime:
      base.kind = StepKind::replay;
      base.exemplar_policy = MemoryPolicy::herding;
      base.balanced = base.contrastive = base.distill = true;
      break;
    case Method::icarl_ncm:
      base.kind = StepKind::replay;
      base.exemplar_policy = MemoryPolicy::herding;
      base.balanced = base.contrastive = false;
      base.distill = true;
      base.ncm_inference = true;
      break;
    case Method::finetune:
      base.kind = StepKind::finetune;
      base.distill = base.balanced = base.contrastive = false;
      break;
    case Method::upper_bound:
      base.kind = StepKind::upper_bound;
      base.distill = base.balanced = base.contrastive = false;
      break;
    case Method::er:
      base.kind = StepKind::er;
      base.exemplar_policy = MemoryPolicy::reservoir;
      base.distill = base.balanced = base.contrastive = false;
      break;
    case Method::gdumb:
      base.kind = StepKind::gdumb;
      base.exemplar_policy = MemoryPolicy::greedy_balanced;
      base.distill = base.balanced = base.contrastive = false;
      break;
  }
  return base;
}

struct LossRecord {
  std::size_t step = 0;
  std::size_t batch = 0;
  double total = 0.0;
  double distillation = 0.0;
  double cross_entropy = 0.0;
};

// Bookkeeping for the online constraint: how many gradient updates each
// stream sample (by arrival index) took part in, and teacher checksums
// around every incremental step.
struct UpdateAudit {
  std::vector<LossRecord> losses;
  std::map<std::size_t, std::size_t> updates_per_arrival;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> teacher_checksums;
  std::vector<std::size_t> exemplar_positions_per_batch;
  std::vector<std::size_t> batch_sizes;
  std::size_t gradient_steps = 0;
};

struct BatchComposition {
  std::vector<Sample> batch;
  std::vector<bool> exemplar_mask;
};

// Pairs each fresh sample with one replay draw: new, exemplar, new, ...
// Fresh samples keep their arrival order.
inline BatchComposition compose_balanced_batch(std::span<const Sample> fresh,
                                               const ExemplarSet& memory, Rng& rng) {
  BatchComposition out;
  if (memory.empty()) {
    out.batch.assign(fresh.begin(), fresh.end());
    out.exemplar_mask.assign(fresh.size(), false);
    return out;
  }
  const auto replay = draw_replay(memory, fresh.size(), rng);
  for (std::size_t i = 0; i < fresh.size(); ++i) {
    out.batch.push_back(fresh[i]);
    out.exemplar_mask.push_back(false);
    out.batch.push_back(replay[i]);
    out.exemplar_mask.push_back(true);
  }
  return out;
}

// Fresh samples followed by a random number (0..fresh) of replay draws.
inline BatchComposition compose_unbalanced_batch(std::span<const Sample> fresh,
                                                 const ExemplarSet& memory, Rng& rng) {
  BatchComposition out;
  out.batch.assign(fresh.begin(), fresh.end());
  out.exemplar_mask.assign(fresh.size(), false);
  if (memory.empty()) return out;
  const std::size_t count = std::uniform_int_distribution<std::size_t>(0, fresh.size())(rng);
  for (auto& s : draw_replay(memory, count, rng)) {
    out.batch.push_back(std::move(s));
    out.exemplar_mask.push_back(true);
  }
  return out;
}

class Learner {
 public:
  Learner(LearnerConfig cfg, std::size_t input_dim, std::size_t total_classes)
      : cfg_(std::move(cfg)), input_dim_(input_dim), total_classes_(total_classes) {
    cfg_.validate();
    std::seed_seq seq{cfg_.seed, std::uint64_t{0x6f63696c}};
    std::vector<std::uint64_t> seeds(6);
    seq.generate(seeds.begin(), seeds.end());
    init_rng_.seed(seeds[0]);
    replay_rng_.seed(seeds[1]);
    augment_rng_.seed(seeds[2] ^ cfg_.augment.seed);
    memory_rng_.seed(seeds[3]);
    shuffle_rng_.seed(seeds[4]);
    gdumb_seed_ = seeds[5];

    const std::size_t budget =
        is_capacity_policy(cfg_.exemplar_policy)
            ? (cfg_.capacity > 0 ? cfg_.capacity : cfg_.budget_q * total_classes_)
            : cfg_.budget_q;
    memory_ = ExemplarSet(cfg_.exemplar_policy, budget);
  }

  const LearnerConfig& config() const { return cfg_; }
  const Classifier& model() const { return model_; }
  const ExemplarSet& memory() const { return memory_; }
  const HeadMap& heads() const { return heads_; }
  const UpdateAudit& audit() const { return audit_; }
  std::size_t steps_done() const { return steps_done_; }

  // Trains h^0 on D^0 with pure cross-entropy in one pass, then fills memory.
  void run_initial_task(std::span<const Sample> stream, std::span<const ClassId> classes) {
    if (stream.empty()) throw InvalidTask("initial task stream is empty");
    if (steps_done_ != 0) throw InvalidTask("initial task already run");
    heads_ = HeadMap({classes.begin(), classes.end()});
    model_ = make_classifier(cfg_.arch, input_dim_, cfg_.hidden, heads_.size(), init_rng_);
    if (cfg_.kind == StepKind::upper_bound) seen_.assign(stream.begin(), stream.end());

    if (cfg_.kind == StepKind::gdumb) {
      for (const auto& s : stream) greedy_balanced_update(memory_, s, memory_rng_);
      retrain_from_memory();
    } else {
      StreamCursor cursor(stream);
      while (!cursor.done()) {
        auto fresh = cursor.next(cfg_.batch_size);
        train_on(fresh, fresh, Matrix(), fresh.size());
        if (cfg_.kind == StepKind::er)
          for (const auto& s : fresh) reservoir_update(memory_, s, memory_rng_);
      }
      if (cfg_.kind == StepKind::replay) select_exemplars(stream, classes);
    }
    model_.version = 0;
    steps_done_ = 1;
  }

  // One incremental step over D^k introducing `new_classes`.
  void run_incremental_step(std::span<const Sample> stream,
                            std::span<const ClassId> new_classes) {
    if (steps_done_ == 0) throw InvalidTask("run the initial task first");
    if (stream.empty()) throw InvalidTask("incremental step stream is empty");
    if (new_classes.empty()) throw InvalidTask("incremental step without new classes");
    switch (cfg_.kind) {
      case StepKind::replay: run_incremental_step_replay(stream, new_classes); break;
      case StepKind::finetune: run_incremental_step_finetune(stream, new_classes); break;
      case StepKind::upper_bound: run_incremental_step_upper_bound(stream, new_classes); break;
      case StepKind::er: run_incremental_step_er(stream, new_classes); break;
      case StepKind::gdumb: run_incremental_step_gdumb(stream, new_classes); break;
    }
    model_.version = steps_done_;
    ++steps_done_;
  }

  double evaluate(std::span<const Sample> test, std::size_t top_k = 1,
                  Averaging averaging = Averaging::micro) const {
    if (cfg_.ncm_inference) return evaluate_step_ncm(model_, memory_, test, top_k, averaging);
    return evaluate_step(model_, heads_, test, top_k, averaging);
  }

 private:
  // The proposed method and its ablations: teacher snapshot, grown head,
  // balanced or unbalanced replay, optional contrastive batch, L_CD.
  void run_incremental_step_replay(std::span<const Sample> stream,
                                   std::span<const ClassId> new_classes) {
    const std::size_t old_heads = heads_.size();
    std::optional<TeacherSnapshot> teacher;
    if (cfg_.distill) teacher.emplace(model_);
    const auto teacher_sum = teacher ? parameter_checksum(teacher->model()) : 0;
    grow(new_classes);

    const std::size_t half = cfg_.batch_size / 2;
    StreamCursor cursor(stream);
    while (!cursor.done()) {
      auto fresh = cursor.next(half);
      auto comp = cfg_.balanced ? compose_balanced_batch(fresh, memory_, replay_rng_)
                                : compose_unbalanced_batch(fresh, memory_, replay_rng_);
      const bool has_replay = std::find(comp.exemplar_mask.begin(), comp.exemplar_mask.end(),
                                        true) != comp.exemplar_mask.end();
      std::vector<Sample> student =
          cfg_.contrastive ? make_contrastive_batch(comp.batch, comp.exemplar_mask, cfg_.augment,
                                                    augment_rng_)
                           : comp.batch;
      Matrix teacher_logits;
      // With an empty memory the step degrades to cross-entropy on new data.
      if (teacher && has_replay)
        teacher_logits = forward(teacher->model(), std::span<const Sample>(comp.batch))
                             .leftCols(static_cast<Eigen::Index>(old_heads));
      audit_.exemplar_positions_per_batch.push_back(static_cast<std::size_t>(
          std::count(comp.exemplar_mask.begin(), comp.exemplar_mask.end(), true)));
      train_on(student, fresh, teacher_logits, student.size());
    }
    if (teacher) audit_.teacher_checksums.emplace_back(teacher_sum, parameter_checksum(teacher->model()));
    select_exemplars(stream, new_classes);
  }

  void run_incremental_step_finetune(std::span<const Sample> stream,
                                     std::span<const ClassId> new_classes) {
    grow(new_classes);
    StreamCursor cursor(stream);
    while (!cursor.done()) {
      auto fresh = cursor.next(cfg_.batch_size);
      train_on(fresh, fresh, Matrix(), fresh.size());
    }
  }

  // One shuffled pass over everything seen so far.
  void run_incremental_step_upper_bound(std::span<const Sample> stream,
                                        std::span<const ClassId> new_classes) {
    grow(new_classes);
    seen_.insert(seen_.end(), stream.begin(), stream.end());
    if (cfg_.upper_bound_reinit)
      model_ = make_classifier(cfg_.arch, input_dim_, cfg_.hidden, heads_.size(), init_rng_);
    std::vector<Sample> pool = seen_;
    std::shuffle(pool.begin(), pool.end(), shuffle_rng_);
    StreamCursor cursor(pool);
    while (!cursor.done()) {
      auto batch = cursor.next(cfg_.batch_size);
      train_on(batch, {}, Matrix(), batch.size());
    }
  }

  // Each b/2 fresh samples train together with random memory retrievals;
  // the reservoir sees every fresh sample afterwards.
  void run_incremental_step_er(std::span<const Sample> stream,
                               std::span<const ClassId> new_classes) {
    grow(new_classes);
    const std::size_t half = cfg_.batch_size / 2;
    const std::size_t retrievals = cfg_.er_retrievals > 0 ? cfg_.er_retrievals : half;
    StreamCursor cursor(stream);
    while (!cursor.done()) {
      auto fresh = cursor.next(half);
      std::vector<Sample> batch(fresh.begin(), fresh.end());
      if (!memory_.empty()) {
        const std::size_t count = fresh.size() == half
                                      ? retrievals
                                      : std::max<std::size_t>(1, retrievals * fresh.size() / half);
        auto replay = draw_replay(memory_, count, replay_rng_);
        batch.insert(batch.end(), replay.begin(), replay.end());
      }
      train_on(batch, fresh, Matrix(), batch.size());
      for (const auto& s : fresh) reservoir_update(memory_, s, memory_rng_);
    }
  }

  // The stream only feeds the greedy-balanced memory; the evaluated model is
  // retrained from scratch on memory contents.
  void run_incremental_step_gdumb(std::span<const Sample> stream,
                                  std::span<const ClassId> new_classes) {
    heads_.append(new_classes);
    for (const auto& s : stream) greedy_balanced_update(memory_, s, memory_rng_);
    retrain_from_memory();
  }

  void retrain_from_memory() {
    Rng rng(gdumb_seed_ + steps_done_);
    model_ = make_classifier(cfg_.arch, input_dim_, cfg_.hidden, heads_.size(), rng);
    for (std::size_t pass = 0; pass < cfg_.gdumb_passes; ++pass) {
      std::vector<Sample> pool = memory_.slots();
      std::shuffle(pool.begin(), pool.end(), rng);
      StreamCursor cursor(pool);
      while (!cursor.done()) {
        auto batch = cursor.next(cfg_.batch_size);
        train_on(batch, {}, Matrix(), batch.size());
      }
    }
  }

  void grow(std::span<const ClassId> new_classes) {
    heads_.append(new_classes);
    grow_head(model_, new_classes.size());
  }

  // One SGD step on `batch`; `fresh` are the stream samples it consumes.
  void train_on(std::span<const Sample> batch, std::span<const Sample> fresh,
                const Matrix& teacher_logits, std::size_t size) {
    const auto labels = heads_.heads_of(batch);
    const auto loss = train_batch(model_, stack_payloads(batch), teacher_logits, labels, cfg_.loss);
    audit_.losses.push_back({steps_done_, audit_.gradient_steps, loss.total, loss.distillation,
                             loss.cross_entropy});
    ++audit_.gradient_steps;
    audit_.batch_sizes.push_back(size);
    for (const auto& s : fresh) ++audit_.updates_per_arrival[s.arrival_index];
  }

  // Picks exemplars for `classes` from this step's data using features of the
  // current model. Earlier classes keep their stored exemplars.
  void select_exemplars(std::span<const Sample> stream, std::span<const ClassId> classes) {
    for (ClassId c : classes) {
      std::vector<Sample> data;
      for (const auto& s : stream)
        if (s.label == c) data.push_back(s);
      if (data.empty()) continue;
      std::vector<Sample> picked;
      switch (cfg_.exemplar_policy) {
        case MemoryPolicy::cluster:
          picked = select_cluster_exemplars(data, extract_features(model_, std::span<const Sample>(data)),
                                            cfg_.budget_q, cfg_.pic);
          break;
        case MemoryPolicy::herding:
          picked = select_herding_exemplars(data, extract_features(model_, std::span<const Sample>(data)),
                                            cfg_.budget_q);
          break;
        case MemoryPolicy::random:
          picked = select_random_exemplars(data, cfg_.budget_q, memory_rng_);
          break;
        default:
          throw InvalidConfig("per-class selection with a capacity policy");
      }
      memory_.set_class(c, std::move(picked));
    }
  }

  LearnerConfig cfg_;
  std::size_t input_dim_;
  std::size_t total_classes_;
  Classifier model_;
  ExemplarSet memory_;
  HeadMap heads_;
  UpdateAudit audit_;
  std::vector<Sample> seen_;
  std::size_t steps_done_ = 0;
  Rng init_rng_, replay_rng_, augment_rng_, memory_rng_, shuffle_rng_;
  std::uint64_t gdumb_seed_ = 0;
};

}  // namespace ocil
