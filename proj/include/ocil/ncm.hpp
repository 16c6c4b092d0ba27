#pragma once

#include <limits>
#include <span>
#include <vector>

#include "ocil/exemplar.hpp"
#include "ocil/linalg.hpp"
#include "ocil/nn.hpp"

namespace ocil {

// Nearest-class-mean classifier over exemplar features.
struct ClassMeans {
  std::vector<ClassId> classes;
  Matrix means;  // one row per class
};

inline ClassMeans class_means(const Classifier& model, const ExemplarSet& memory) {
  ClassMeans out;
  out.classes = memory.classes();
  if (out.classes.empty()) throw EmptyMemory("nearest-class-mean needs stored exemplars");
  out.means.resize(static_cast<Eigen::Index>(out.classes.size()),
                   static_cast<Eigen::Index>(model.feature_dim()));
  for (std::size_t i = 0; i < out.classes.size(); ++i) {
    const auto samples = memory.per_class(out.classes[i]);
    out.means.row(static_cast<Eigen::Index>(i)) =
        extract_features(model, std::span<const Sample>(samples)).colwise().mean();
  }
  return out;
}

// Squared distance from every query feature row to every class mean.
inline Matrix ncm_distances(const ClassMeans& means, const Matrix& features) {
  Matrix d(features.rows(), means.means.rows());
  for (Eigen::Index i = 0; i < features.rows(); ++i)
    for (Eigen::Index c = 0; c < means.means.rows(); ++c)
      d(i, c) = (features.row(i) - means.means.row(c)).squaredNorm();
  return d;
}

inline std::vector<ClassId> predict_ncm(const Classifier& model, const ExemplarSet& memory,
                                        std::span<const Sample> batch) {
  const auto means = class_means(model, memory);
  const Matrix d = ncm_distances(means, extract_features(model, batch));
  std::vector<ClassId> out;
  out.reserve(batch.size());
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    Eigen::Index best = 0;
    d.row(i).minCoeff(&best);
    out.push_back(means.classes[static_cast<std::size_t>(best)]);
  }
  return out;
}

}  // namespace ocil
