#pragma once

// Central finite-difference check of the analytic L_CD gradients against an
// independent loop-based loss evaluation.

#include <cmath>
#include <random>
#include <vector>

#include "ocil/nn.hpp"

namespace ocil::oracle {

// -sum_i softmax(t/T)_i log softmax(z/T)_i over the first n entries, written
// with plain loops.
inline double soft_xent(const std::vector<double>& t, const std::vector<double>& z, std::size_t n,
                        double T) {
  auto log_softmax = [&](const std::vector<double>& v) {
    double m = -1e300;
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i] / T);
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] / T - m);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = v[i] / T - m - std::log(s);
    return out;
  };
  const auto lt = log_softmax(t), lz = log_softmax(z);
  double loss = 0;
  for (std::size_t i = 0; i < n; ++i) loss -= std::exp(lt[i]) * lz[i];
  return loss;
}

inline std::vector<double> logits_of(const Classifier& m, const std::vector<double>& x) {
  std::vector<double> f = x;
  if (m.arch == Architecture::mlp) {
    f.assign(m.hidden, 0.0);
    for (std::size_t h = 0; h < m.hidden; ++h) {
      double a = m.hidden_b[Eigen::Index(h)];
      for (std::size_t d = 0; d < x.size(); ++d) a += m.hidden_w(Eigen::Index(h), Eigen::Index(d)) * x[d];
      f[h] = a > 0 ? a : 0;
    }
  }
  std::vector<double> z(m.head_count());
  for (std::size_t k = 0; k < z.size(); ++k) {
    double a = m.head_b[Eigen::Index(k)];
    for (std::size_t j = 0; j < f.size(); ++j) a += m.head_w(Eigen::Index(k), Eigen::Index(j)) * f[j];
    z[k] = a;
  }
  return z;
}

// Batch-mean beta L_D + (1 - beta) L_C. An empty teacher list means pure CE.
inline double reference_loss(const Classifier& m, const std::vector<std::vector<double>>& xs,
                             const std::vector<std::vector<double>>& teacher,
                             const std::vector<std::size_t>& labels, double T, double beta) {
  double total = 0;
  for (std::size_t r = 0; r < xs.size(); ++r) {
    const auto z = logits_of(m, xs[r]);
    double mz = -1e300;
    for (double v : z) mz = std::max(mz, v);
    double s = 0;
    for (double v : z) s += std::exp(v - mz);
    const double ce = -(z[labels[r]] - mz - std::log(s));
    if (teacher.empty()) {
      total += ce;
    } else {
      const double ld = soft_xent(teacher[r], z, teacher[r].size(), T);
      total += beta * ld + (1 - beta) * ce;
    }
  }
  return total / double(xs.size());
}

struct GradCheck {
  double relative_error = 0;
  std::size_t parameters = 0;
};

// Relative error ||a - n|| / (||a|| + ||n||) over every parameter.
inline GradCheck check_gradients(const Classifier& model, const std::vector<std::vector<double>>& xs,
                                 const std::vector<std::vector<double>>& teacher,
                                 const std::vector<std::size_t>& labels, const LossConfig& cfg,
                                 double h = 1e-5) {
  const Matrix x = stack_rows(xs);
  Matrix t;
  if (!teacher.empty()) t = stack_rows(teacher);
  const auto cache = forward_cached(model, x);
  const auto loss = batch_loss(cache.logits, t, labels, cfg);
  const auto g = backward(model, cache, loss.grad_logits);

  double diff2 = 0, a2 = 0, n2 = 0;
  GradCheck out;
  auto probe = [&](auto get_param, auto analytic) {
    Classifier p = model;
    double& w = get_param(p);
    const double w0 = w;
    w = w0 + h;
    const double up = reference_loss(p, xs, teacher, labels, cfg.temperature, cfg.beta);
    w = w0 - h;
    const double down = reference_loss(p, xs, teacher, labels, cfg.temperature, cfg.beta);
    const double numeric = (up - down) / (2 * h);
    diff2 += (analytic - numeric) * (analytic - numeric);
    a2 += analytic * analytic;
    n2 += numeric * numeric;
    ++out.parameters;
  };
  for (Eigen::Index i = 0; i < model.head_w.rows(); ++i)
    for (Eigen::Index j = 0; j < model.head_w.cols(); ++j)
      probe([&](Classifier& p) -> double& { return p.head_w(i, j); }, g.head_w(i, j));
  for (Eigen::Index i = 0; i < model.head_b.size(); ++i)
    probe([&](Classifier& p) -> double& { return p.head_b[i]; }, g.head_b[i]);
  for (Eigen::Index i = 0; i < model.hidden_w.rows(); ++i)
    for (Eigen::Index j = 0; j < model.hidden_w.cols(); ++j)
      probe([&](Classifier& p) -> double& { return p.hidden_w(i, j); }, g.hidden_w(i, j));
  for (Eigen::Index i = 0; i < model.hidden_b.size(); ++i)
    probe([&](Classifier& p) -> double& { return p.hidden_b[i]; }, g.hidden_b[i]);
  const double denom = std::sqrt(a2) + std::sqrt(n2);
  out.relative_error = denom > 0 ? std::sqrt(diff2) / denom : 0.0;
  return out;
}

struct GradCase {
  Classifier model;
  std::vector<std::vector<double>> xs;
  std::vector<std::vector<double>> teacher;
  std::vector<std::size_t> labels;
  LossConfig cfg;
};

// Random small model and batch; teacher rows cover a random n < heads, or
// none at all for a pure cross-entropy case.
inline GradCase random_grad_case(std::mt19937_64& rng, bool with_teacher) {
  std::uniform_int_distribution<std::size_t> dim(1, 5), hidden(2, 6), heads(2, 6), batch(1, 6);
  std::uniform_real_distribution<double> u(-1.5, 1.5), temp(1.1, 5.0), beta(0.0, 1.0);
  GradCase c;
  const auto d = dim(rng), k = heads(rng);
  const auto arch = rng() % 2 ? Architecture::mlp : Architecture::linear;
  c.model = make_classifier(arch, d, hidden(rng), k, rng);
  for (Eigen::Index i = 0; i < c.model.head_b.size(); ++i) c.model.head_b[i] = u(rng);
  for (Eigen::Index i = 0; i < c.model.hidden_b.size(); ++i) c.model.hidden_b[i] = 0.3 * u(rng);
  const auto b = batch(rng);
  const auto n = std::uniform_int_distribution<std::size_t>(1, k - 1)(rng);
  for (std::size_t r = 0; r < b; ++r) {
    std::vector<double> x(d);
    for (auto& v : x) v = u(rng);
    c.xs.push_back(x);
    c.labels.push_back(std::uniform_int_distribution<std::size_t>(0, k - 1)(rng));
    if (with_teacher) {
      std::vector<double> t(n);
      for (auto& v : t) v = 2 * u(rng);
      c.teacher.push_back(t);
    }
  }
  c.cfg.temperature = temp(rng);
  c.cfg.beta = beta(rng);
  return c;
}

}  // namespace ocil::oracle
