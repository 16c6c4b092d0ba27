#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ocil/data.hpp"

namespace ocil::testing {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::path(OCIL_TEST_TMP) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Sample make_sample(std::vector<double> payload, ClassId label, std::size_t arrival = 0) {
  Sample s;
  s.payload = std::move(payload);
  s.label = label;
  s.arrival_index = arrival;
  return s;
}

// Points on a line, one sample per value.
inline std::vector<Sample> line_samples(const std::vector<double>& xs, ClassId label = 0) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < xs.size(); ++i) out.push_back(make_sample({xs[i]}, label, i));
  return out;
}

}  // namespace ocil::testing
