#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ocil/data.hpp"
#include "ocil/errors.hpp"
#include "ocil/linalg.hpp"

namespace ocil {

enum class Architecture { linear, mlp };

inline std::string to_string(Architecture a) { return a == Architecture::linear ? "linear" : "mlp"; }

inline Architecture parse_architecture(const std::string& s) {
  if (s == "linear") return Architecture::linear;
  if (s == "mlp") return Architecture::mlp;
  throw InvalidConfig("unknown architecture '" + s + "'");
}

// Growable softmax classifier. The linear variant maps input straight to the
// head; the mlp variant has one rectified hidden layer. The penultimate
// activations (hidden output, or the raw input for linear) are the features.
struct Classifier {
  Architecture arch = Architecture::mlp;
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
  std::size_t version = 0;

  Matrix hidden_w;  // hidden x input (mlp only)
  Vector hidden_b;
  Matrix head_w;  // heads x feature_dim
  Vector head_b;

  std::size_t head_count() const { return static_cast<std::size_t>(head_w.rows()); }
  std::size_t feature_dim() const { return arch == Architecture::mlp ? hidden : input_dim; }

  bool all_finite() const {
    return hidden_w.allFinite() && hidden_b.allFinite() && head_w.allFinite() &&
           head_b.allFinite();
  }
};

// Frozen copy of the model taken at the start of an incremental step.
class TeacherSnapshot {
 public:
  explicit TeacherSnapshot(Classifier model) : model_(std::move(model)) {}
  const Classifier& model() const { return model_; }
  std::size_t head_count() const { return model_.head_count(); }

 private:
  Classifier model_;
};

struct LossConfig {
  double temperature = 2.0;
  double beta = 0.5;
  double weight_decay = 1e-4;
  double learning_rate = 0.1;

  void validate() const {
    if (!(temperature > 1.0)) throw InvalidConfig("temperature must exceed 1");
    if (!(beta >= 0.0 && beta <= 1.0)) throw InvalidConfig("beta must lie in [0, 1]");
    if (!(weight_decay >= 0.0)) throw InvalidConfig("weight_decay must be non-negative");
    if (!(learning_rate > 0.0)) throw InvalidConfig("learning_rate must be positive");
  }
};

inline Classifier make_classifier(Architecture arch, std::size_t input_dim, std::size_t hidden,
                                  std::size_t heads, Rng& rng) {
  if (input_dim == 0) throw ShapeError("input dimension must be positive");
  if (arch == Architecture::mlp && hidden == 0) throw ShapeError("hidden width must be positive");
  Classifier m;
  m.arch = arch;
  m.input_dim = input_dim;
  m.hidden = arch == Architecture::mlp ? hidden : 0;
  const auto d = static_cast<Eigen::Index>(input_dim);
  const auto h = static_cast<Eigen::Index>(m.feature_dim());
  const auto k = static_cast<Eigen::Index>(heads);

  auto fill = [&rng](Matrix& w, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = u(rng);
  };
  if (arch == Architecture::mlp) {
    m.hidden_w.resize(h, d);
    fill(m.hidden_w, std::sqrt(6.0 / static_cast<double>(input_dim)));
    m.hidden_b = Vector::Zero(h);
  } else {
    m.hidden_w.resize(0, 0);
    m.hidden_b.resize(0);
  }
  m.head_w.resize(k, h);
  fill(m.head_w, 1.0 / std::sqrt(static_cast<double>(m.feature_dim())));
  m.head_b = Vector::Zero(k);
  return m;
}

// New head rows start at zero so new-class logits begin neutral.
inline void grow_head(Classifier& model, std::size_t new_classes) {
  if (new_classes < 1) throw InvalidInput("grow_head needs at least one new class");
  const auto old = model.head_w.rows();
  const auto add = static_cast<Eigen::Index>(new_classes);
  model.head_w.conservativeResize(old + add, Eigen::NoChange);
  model.head_w.bottomRows(add).setZero();
  model.head_b.conservativeResize(old + add);
  model.head_b.tail(add).setZero();
}

struct ForwardCache {
  Matrix input;
  Matrix pre_hidden;
  Matrix features;
  Matrix logits;
};

inline ForwardCache forward_cached(const Classifier& model, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != model.input_dim)
    throw ShapeError("input width " + std::to_string(x.cols()) + " does not match model input " +
                     std::to_string(model.input_dim));
  ForwardCache c;
  c.input = x;
  if (model.arch == Architecture::mlp) {
    c.pre_hidden = (x * model.hidden_w.transpose()).rowwise() + model.hidden_b.transpose();
    c.features = c.pre_hidden.cwiseMax(0.0);
  } else {
    c.features = x;
  }
  // One product per head, so a head's logits do not depend on how many
  // other heads exist (a single GEMM may block differently after growth).
  c.logits.resize(x.rows(), model.head_w.rows());
  for (Eigen::Index k = 0; k < model.head_w.rows(); ++k)
    c.logits.col(k) = (c.features * model.head_w.row(k).transpose()).array() + model.head_b[k];
  return c;
}

inline Matrix forward(const Classifier& model, const Matrix& x) {
  return forward_cached(model, x).logits;
}

inline Matrix forward(const Classifier& model, std::span<const Sample> batch) {
  return forward(model, stack_payloads(batch));
}

inline Matrix extract_features(const Classifier& model, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != model.input_dim)
    throw ShapeError("input width does not match model input");
  if (model.arch == Architecture::linear) return x;
  return ((x * model.hidden_w.transpose()).rowwise() + model.hidden_b.transpose()).cwiseMax(0.0);
}

inline Matrix extract_features(const Classifier& model, std::span<const Sample> batch) {
  return extract_features(model, stack_payloads(batch));
}

// ---------------------------------------------------------------------------
// Losses. Natural log throughout; batch losses are means over rows.

// Softmax of logits[0..n) / temperature.
inline Vector softened_softmax(const RowVector& logits, std::size_t n, double temperature) {
  const Vector z = logits.head(static_cast<Eigen::Index>(n)).transpose() / temperature;
  const Vector e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

inline Vector log_softened_softmax(const RowVector& logits, std::size_t n, double temperature) {
  const Vector z = logits.head(static_cast<Eigen::Index>(n)).transpose() / temperature;
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  return z.array() - lse;
}

inline double cross_entropy_loss(const RowVector& logits, std::size_t label) {
  if (label >= static_cast<std::size_t>(logits.size()))
    throw LabelError("label " + std::to_string(label) + " outside head of size " +
                     std::to_string(logits.size()));
  return -log_softened_softmax(logits, static_cast<std::size_t>(logits.size()), 1.0)(
      static_cast<Eigen::Index>(label));
}

// -sum_i softmax(teacher/T)_i log softmax(student[0..n)/T)_i, both
// normalized over the first n heads.
inline double distillation_loss(const RowVector& student_logits, const RowVector& teacher_logits,
                                std::size_t n, double temperature) {
  if (n == 0) throw InvalidInput("distillation loss is undefined for zero old classes");
  if (static_cast<std::size_t>(teacher_logits.size()) != n)
    throw ShapeError("teacher row width must equal n");
  if (static_cast<std::size_t>(student_logits.size()) < n)
    throw ShapeError("student row narrower than n");
  const Vector p_hat = softened_softmax(teacher_logits, n, temperature);
  const Vector log_p = log_softened_softmax(student_logits, n, temperature);
  return -p_hat.dot(log_p);
}

inline double cross_distillation_loss(const RowVector& student_logits,
                                      const RowVector& teacher_logits, std::size_t label,
                                      const LossConfig& cfg) {
  const auto n = static_cast<std::size_t>(teacher_logits.size());
  return cfg.beta * distillation_loss(student_logits, teacher_logits, n, cfg.temperature) +
         (1.0 - cfg.beta) * cross_entropy_loss(student_logits, label);
}

struct BatchLoss {
  double total = 0.0;
  double distillation = 0.0;
  double cross_entropy = 0.0;
  Matrix grad_logits;  // d total / d logits, batch-averaged
};

// Batch-averaged L_CD = beta L_D + (1 - beta) L_C. With an empty teacher
// matrix (no old classes) the loss is pure cross-entropy.
inline BatchLoss batch_loss(const Matrix& student_logits, const Matrix& teacher_logits,
                            std::span<const std::size_t> labels, const LossConfig& cfg) {
  const auto rows = student_logits.rows();
  if (static_cast<std::size_t>(rows) != labels.size())
    throw ShapeError("one label per logit row required");
  if (rows == 0) throw InvalidInput("empty batch");
  const bool distill = teacher_logits.size() > 0;
  if (distill && teacher_logits.rows() != rows)
    throw ShapeError("teacher and student batches differ in size");
  const auto n = static_cast<std::size_t>(distill ? teacher_logits.cols() : 0);
  const double beta = distill ? cfg.beta : 0.0;
  const double inv_b = 1.0 / static_cast<double>(rows);
  const double T = cfg.temperature;

  BatchLoss out;
  out.grad_logits = Matrix::Zero(rows, student_logits.cols());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const RowVector row = student_logits.row(r);
    const auto label = labels[static_cast<std::size_t>(r)];
    const double ce = cross_entropy_loss(row, label);
    out.cross_entropy += ce * inv_b;
    Vector p = softened_softmax(row, static_cast<std::size_t>(row.size()), 1.0);
    p(static_cast<Eigen::Index>(label)) -= 1.0;
    out.grad_logits.row(r) += (1.0 - beta) * inv_b * p.transpose();

    if (distill) {
      const RowVector t = teacher_logits.row(r);
      out.distillation += distillation_loss(row, t, n, T) * inv_b;
      const Vector diff = softened_softmax(row, n, T) - softened_softmax(t, n, T);
      out.grad_logits.row(r).head(static_cast<Eigen::Index>(n)) +=
          beta * inv_b / T * diff.transpose();
    }
  }
  out.total = beta * out.distillation + (1.0 - beta) * out.cross_entropy;
  return out;
}

struct Gradients {
  Matrix hidden_w;
  Vector hidden_b;
  Matrix head_w;
  Vector head_b;
};

inline Gradients backward(const Classifier& model, const ForwardCache& cache,
                          const Matrix& grad_logits) {
  Gradients g;
  g.head_w = grad_logits.transpose() * cache.features;
  g.head_b = grad_logits.colwise().sum().transpose();
  if (model.arch == Architecture::mlp) {
    Matrix grad_features = grad_logits * model.head_w;
    Matrix grad_pre = grad_features.cwiseProduct(
        (cache.pre_hidden.array() > 0.0).cast<double>().matrix());
    g.hidden_w = grad_pre.transpose() * cache.input;
    g.hidden_b = grad_pre.colwise().sum().transpose();
  } else {
    g.hidden_w.resize(0, 0);
    g.hidden_b.resize(0);
  }
  return g;
}

// w <- w - lr (g + decay w) on weights; biases take no decay.
inline void sgd_step(Classifier& model, const Gradients& grads, const LossConfig& cfg) {
  if (grads.head_w.rows() != model.head_w.rows() || grads.head_w.cols() != model.head_w.cols() ||
      grads.head_b.size() != model.head_b.size() ||
      grads.hidden_w.rows() != model.hidden_w.rows() ||
      grads.hidden_w.cols() != model.hidden_w.cols() ||
      grads.hidden_b.size() != model.hidden_b.size())
    throw ShapeError("gradient shapes do not match parameters");
  if (!grads.head_w.allFinite() || !grads.head_b.allFinite() || !grads.hidden_w.allFinite() ||
      !grads.hidden_b.allFinite())
    throw NumericError("non-finite gradient; step aborted");
  const double lr = cfg.learning_rate;
  const double wd = cfg.weight_decay;
  model.head_w -= lr * (grads.head_w + wd * model.head_w);
  model.head_b -= lr * grads.head_b;
  if (model.arch == Architecture::mlp) {
    model.hidden_w -= lr * (grads.hidden_w + wd * model.hidden_w);
    model.hidden_b -= lr * grads.hidden_b;
  }
}

// One forward/backward/update on a batch. The student sees `student_input`;
// `teacher_logits` (old heads only, possibly empty) comes from the teacher.
inline BatchLoss train_batch(Classifier& model, const Matrix& student_input,
                             const Matrix& teacher_logits, std::span<const std::size_t> labels,
                             const LossConfig& cfg) {
  const auto cache = forward_cached(model, student_input);
  auto loss = batch_loss(cache.logits, teacher_logits, labels, cfg);
  sgd_step(model, backward(model, cache, loss.grad_logits), cfg);
  return loss;
}

// ---------------------------------------------------------------------------
// Checkpoints: binary file of tensors, each prefixed by a (rows, cols) header
// of little-endian uint64, data as little-endian float64 row-major. A JSON
// sidecar records the architecture.

namespace detail {

inline void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw FormatError("truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
  return v;
}

inline void put_tensor(std::ostream& out, const double* data, std::uint64_t rows,
                       std::uint64_t cols) {
  put_u64(out, rows);
  put_u64(out, cols);
  for (std::uint64_t i = 0; i < rows * cols; ++i) put_u64(out, std::bit_cast<std::uint64_t>(data[i]));
}

inline Matrix get_tensor(std::istream& in) {
  const auto rows = get_u64(in);
  const auto cols = get_u64(in);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::uint64_t i = 0; i < rows * cols; ++i) m.data()[i] = std::bit_cast<double>(get_u64(in));
  return m;
}

}  // namespace detail

inline nlohmann::json architecture_json(const Classifier& m) {
  return {{"architecture", to_string(m.arch)},
          {"input_dim", m.input_dim},
          {"hidden", m.hidden},
          {"head_count", m.head_count()},
          {"version", m.version},
          {"tensors", {"hidden_w", "hidden_b", "head_w", "head_b"}},
          {"encoding", "u64le rows, u64le cols, f64le row-major data per tensor"}};
}

inline void write_checkpoint(std::ostream& out, const Classifier& m) {
  detail::put_tensor(out, m.hidden_w.data(), static_cast<std::uint64_t>(m.hidden_w.rows()),
                     static_cast<std::uint64_t>(m.hidden_w.cols()));
  detail::put_tensor(out, m.hidden_b.data(), static_cast<std::uint64_t>(m.hidden_b.size()), 1);
  detail::put_tensor(out, m.head_w.data(), static_cast<std::uint64_t>(m.head_w.rows()),
                     static_cast<std::uint64_t>(m.head_w.cols()));
  detail::put_tensor(out, m.head_b.data(), static_cast<std::uint64_t>(m.head_b.size()), 1);
}

inline void save_checkpoint(const Classifier& m, const std::string& bin_path,
                            const std::string& json_path) {
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw FormatError("cannot write " + bin_path);
  write_checkpoint(bin, m);
  std::ofstream js(json_path, std::ios::binary);
  if (!js) throw FormatError("cannot write " + json_path);
  js << architecture_json(m).dump(2) << '\n';
}

inline Classifier load_checkpoint(const std::string& bin_path, const std::string& json_path) {
  std::ifstream js(json_path);
  if (!js) throw FormatError("cannot open " + json_path);
  const auto meta = nlohmann::json::parse(js);
  Classifier m;
  m.arch = parse_architecture(meta.at("architecture").get<std::string>());
  m.input_dim = meta.at("input_dim").get<std::size_t>();
  m.hidden = meta.at("hidden").get<std::size_t>();
  m.version = meta.at("version").get<std::size_t>();

  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw FormatError("cannot open " + bin_path);
  m.hidden_w = detail::get_tensor(bin);
  m.hidden_b = detail::get_tensor(bin).reshaped();
  m.head_w = detail::get_tensor(bin);
  m.head_b = detail::get_tensor(bin).reshaped();
  if (m.head_count() != meta.at("head_count").get<std::size_t>())
    throw FormatError("checkpoint head count disagrees with sidecar");
  if (m.head_w.cols() != static_cast<Eigen::Index>(m.feature_dim()))
    throw FormatError("checkpoint tensor shapes disagree with sidecar");
  return m;
}

// FNV-1a over the raw parameter bytes.
inline std::uint64_t parameter_checksum(const Classifier& m) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const double* p, Eigen::Index n) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < static_cast<std::size_t>(n) * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  mix(m.hidden_w.data(), m.hidden_w.size());
  mix(m.hidden_b.data(), m.hidden_b.size());
  mix(m.head_w.data(), m.head_w.size());
  mix(m.head_b.data(), m.head_b.size());
  return h;
}

}  // namespace ocil
