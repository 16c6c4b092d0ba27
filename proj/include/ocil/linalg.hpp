#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ocil/data.hpp"
#include "ocil/errors.hpp"

namespace ocil {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// Stacks sample payloads into one row per sample.
inline Matrix stack_payloads(std::span<const Sample> samples) {
  if (samples.empty()) return Matrix(0, 0);
  const auto d = static_cast<Eigen::Index>(samples.front().dim());
  Matrix out(static_cast<Eigen::Index>(samples.size()), d);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (static_cast<Eigen::Index>(samples[i].dim()) != d)
      throw ShapeError("payload dimension mismatch within batch");
    out.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const RowVector>(samples[i].payload.data(), d);
  }
  return out;
}

inline Matrix stack_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return Matrix(0, 0);
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) throw ShapeError("ragged feature rows");
    out.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const RowVector>(rows[i].data(), static_cast<Eigen::Index>(rows[i].size()));
  }
  return out;
}

}  // namespace ocil
