#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ocil/errors.hpp"

namespace ocil {

using ClassId = int;
using Rng = std::mt19937_64;

// Raster geometry of an image payload. All zero for plain feature vectors.
struct ImageShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  bool is_image() const { return height * width * channels > 0; }
  std::size_t size() const { return height * width * channels; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

// One stream element. Image payloads are stored row-major as (H, W, C) with
// channel values in [0, 1].
struct Sample {
  std::vector<double> payload;
  ImageShape shape;
  ClassId label = 0;
  std::size_t arrival_index = 0;

  std::size_t dim() const { return payload.size(); }
  friend bool operator==(const Sample&, const Sample&) = default;
};

struct TaskSchedule {
  std::vector<ClassId> initial_classes;
  std::vector<std::vector<ClassId>> steps;
  std::uint64_t seed = 0;

  std::size_t task_count() const { return steps.size() + 1; }

  // Classes of task t, where task 0 is the initial task.
  const std::vector<ClassId>& task(std::size_t t) const {
    return t == 0 ? initial_classes : steps.at(t - 1);
  }

  // Every class seen up to and including task t, in schedule order.
  std::vector<ClassId> seen_through(std::size_t t) const {
    std::vector<ClassId> out;
    for (std::size_t i = 0; i <= t; ++i) {
      const auto& cls = task(i);
      out.insert(out.end(), cls.begin(), cls.end());
    }
    return out;
  }

  friend bool operator==(const TaskSchedule&, const TaskSchedule&) = default;
};

// Per-class train and test pools. Tasks are cut from the train pools by
// arrange_stream once a schedule is known.
struct StreamPartition {
  std::map<ClassId, std::vector<Sample>> train;
  std::map<ClassId, std::vector<Sample>> test;

  std::vector<ClassId> classes() const {
    std::vector<ClassId> out;
    for (const auto& [c, _] : train) out.push_back(c);
    return out;
  }

  std::map<ClassId, std::size_t> counts() const {
    std::map<ClassId, std::size_t> out;
    for (const auto& [c, v] : train) out[c] += v.size();
    for (const auto& [c, v] : test) out[c] += v.size();
    return out;
  }

  std::size_t payload_dim() const {
    for (const auto& [_, v] : train)
      if (!v.empty()) return v.front().dim();
    return 0;
  }
};

// Training sequences D^0..D^N in the order they are delivered.
struct TaskStreams {
  std::vector<std::vector<Sample>> tasks;
};

inline TaskSchedule build_schedule(std::vector<ClassId> class_ids, std::size_t initial_count,
                                   std::size_t step_size, std::uint64_t seed) {
  if (initial_count < 1 || step_size < 1)
    throw InvalidSchedule("initial_count and step_size must be at least 1");
  if (initial_count + step_size > class_ids.size())
    throw InvalidSchedule("need at least initial_count + step_size classes, got " +
                          std::to_string(class_ids.size()));
  std::set<ClassId> unique(class_ids.begin(), class_ids.end());
  if (unique.size() != class_ids.size()) throw InvalidSchedule("duplicate class ids");

  Rng rng(seed);
  std::shuffle(class_ids.begin(), class_ids.end(), rng);

  TaskSchedule schedule;
  schedule.seed = seed;
  schedule.initial_classes.assign(class_ids.begin(), class_ids.begin() + initial_count);
  for (std::size_t i = initial_count; i < class_ids.size(); i += step_size) {
    const std::size_t end = std::min(class_ids.size(), i + step_size);
    schedule.steps.emplace_back(class_ids.begin() + i, class_ids.begin() + end);
  }
  return schedule;
}

// Splits one class's samples into (train, test) with at least one of each.
inline std::pair<std::vector<Sample>, std::vector<Sample>> split_class(std::vector<Sample> samples,
                                                                       double test_fraction,
                                                                       Rng& rng) {
  if (samples.size() < 2) throw InvalidDataset("class needs at least 2 samples");
  std::shuffle(samples.begin(), samples.end(), rng);
  auto n_test = static_cast<std::size_t>(std::llround(test_fraction * samples.size()));
  n_test = std::clamp<std::size_t>(n_test, 1, samples.size() - 1);
  std::vector<Sample> test(samples.begin(), samples.begin() + n_test);
  std::vector<Sample> train(samples.begin() + n_test, samples.end());
  return {std::move(train), std::move(test)};
}

inline StreamPartition partition_samples(const std::vector<Sample>& samples, double test_fraction,
                                         std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw InvalidDataset("test fraction must lie in (0, 1)");
  std::map<ClassId, std::vector<Sample>> by_class;
  for (const auto& s : samples) by_class[s.label].push_back(s);
  Rng rng(seed);
  StreamPartition out;
  for (auto& [c, v] : by_class) {
    // A class with one sample cannot be split; it only feeds the stream.
    if (v.size() < 2) {
      out.train[c] = std::move(v);
      continue;
    }
    auto [train, test] = split_class(std::move(v), test_fraction, rng);
    out.train[c] = std::move(train);
    out.test[c] = std::move(test);
  }
  return out;
}

struct BlobOptions {
  std::size_t modes_per_class = 1;
  // Distance between sub-cluster means of the same class.
  double mode_offset = 3.0;
  // Minimum pairwise distance between class centers.
  double min_separation = 8.0;
  double test_fraction = 0.2;
};

// Draws class centers in random directions at a radius large enough to fit
// `count` points pairwise `min_separation` apart, rejecting close candidates.
inline std::vector<std::vector<double>> place_centers(std::size_t count, std::size_t dim,
                                                      double min_separation, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> centers;
  double radius = min_separation * std::max(1.0, std::sqrt(static_cast<double>(count)));
  std::size_t rejected = 0;
  while (centers.size() < count) {
    std::vector<double> c(dim);
    double norm = 0.0;
    for (auto& v : c) {
      v = normal(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    const double r = radius * std::uniform_real_distribution<double>(0.5, 1.0)(rng);
    for (auto& v : c) v = v / norm * r;
    bool ok = true;
    for (const auto& other : centers) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < dim; ++k) d2 += (c[k] - other[k]) * (c[k] - other[k]);
      if (d2 < min_separation * min_separation) {
        ok = false;
        break;
      }
    }
    if (ok) {
      centers.push_back(std::move(c));
    } else if (++rejected % 1000 == 0) {
      radius *= 1.25;
    }
  }
  return centers;
}

inline StreamPartition generate_blob_stream(std::size_t n_classes, std::size_t dim,
                                            const std::vector<std::size_t>& per_class_counts,
                                            double spread, std::uint64_t seed,
                                            const BlobOptions& opts = {}) {
  if (n_classes == 0 || dim == 0) throw InvalidDataset("need at least one class and dimension");
  if (per_class_counts.size() != n_classes)
    throw InvalidDataset("per_class_counts must have one entry per class");
  for (std::size_t c = 0; c < n_classes; ++c)
    if (per_class_counts[c] < 2)
      throw InvalidDataset("class " + std::to_string(c) + " needs at least 2 samples");
  if (spread < 0.0) throw InvalidDataset("spread must be non-negative");
  if (opts.modes_per_class < 1) throw InvalidDataset("modes_per_class must be at least 1");

  Rng rng(seed);
  const auto centers = place_centers(n_classes, dim, opts.min_separation, rng);
  std::normal_distribution<double> normal(0.0, 1.0);

  StreamPartition out;
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::vector<std::vector<double>> modes;
    for (std::size_t m = 0; m < opts.modes_per_class; ++m) {
      std::vector<double> mean = centers[c];
      if (opts.modes_per_class > 1) {
        std::vector<double> dir(dim);
        double norm = 0.0;
        for (auto& v : dir) {
          v = normal(rng);
          norm += v * v;
        }
        norm = std::sqrt(norm);
        for (std::size_t k = 0; k < dim; ++k) mean[k] += dir[k] / norm * opts.mode_offset;
      }
      modes.push_back(std::move(mean));
    }
    // Uneven mode weights give each class a dominant and a minor appearance.
    std::vector<double> weights(modes.size());
    for (std::size_t m = 0; m < modes.size(); ++m) weights[m] = 1.0 / static_cast<double>(m + 1);
    std::discrete_distribution<std::size_t> pick_mode(weights.begin(), weights.end());

    std::vector<Sample> samples;
    samples.reserve(per_class_counts[c]);
    for (std::size_t i = 0; i < per_class_counts[c]; ++i) {
      const auto& mean = modes[pick_mode(rng)];
      Sample s;
      s.label = static_cast<ClassId>(c);
      s.payload.resize(dim);
      for (std::size_t k = 0; k < dim; ++k) s.payload[k] = mean[k] + spread * normal(rng);
      samples.push_back(std::move(s));
    }
    auto [train, test] = split_class(std::move(samples), opts.test_fraction, rng);
    out.train[static_cast<ClassId>(c)] = std::move(train);
    out.test[static_cast<ClassId>(c)] = std::move(test);
  }
  return out;
}

// Cuts D^0..D^N out of the train pools: each task's samples are shuffled
// together and stamped with globally increasing arrival indices.
inline TaskStreams arrange_stream(const StreamPartition& part, const TaskSchedule& schedule,
                                  std::uint64_t seed) {
  Rng rng(seed);
  TaskStreams out;
  std::size_t arrival = 0;
  for (std::size_t t = 0; t < schedule.task_count(); ++t) {
    std::vector<Sample> task;
    for (ClassId c : schedule.task(t)) {
      auto it = part.train.find(c);
      if (it == part.train.end())
        throw InvalidSchedule("class " + std::to_string(c) + " has no training data");
      task.insert(task.end(), it->second.begin(), it->second.end());
    }
    std::shuffle(task.begin(), task.end(), rng);
    for (auto& s : task) s.arrival_index = arrival++;
    out.tasks.push_back(std::move(task));
  }
  return out;
}

// Test samples for every class in `classes`.
inline std::vector<Sample> collect_test(const StreamPartition& part,
                                        const std::vector<ClassId>& classes) {
  std::vector<Sample> out;
  for (ClassId c : classes) {
    auto it = part.test.find(c);
    if (it == part.test.end()) continue;
    out.insert(out.end(), it->second.begin(), it->second.end());
  }
  return out;
}

// Single-consumer cursor over one task's training sequence. Each sample is
// handed out exactly once.
class StreamCursor {
 public:
  explicit StreamCursor(std::span<const Sample> samples) : samples_(samples) {}

  bool done() const { return pos_ >= samples_.size(); }
  std::size_t remaining() const { return samples_.size() - pos_; }
  std::size_t consumed() const { return pos_; }

  std::span<const Sample> next(std::size_t max_count) {
    const std::size_t n = std::min(max_count, remaining());
    auto out = samples_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

 private:
  std::span<const Sample> samples_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Feature CSV: `label,f1,...,fd` per line.

inline std::vector<Sample> read_feature_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "cannot open " + path);
  std::vector<Sample> out;
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() < 2) throw ParseError(line_no, "expected label and at least one feature");
    if (dim == 0) dim = fields.size() - 1;
    if (fields.size() - 1 != dim)
      throw ParseError(line_no, "expected " + std::to_string(dim) + " features, got " +
                                    std::to_string(fields.size() - 1));
    auto trim = [](std::string_view s) {
      while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
      while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
      return s;
    };
    Sample s;
    auto label_sv = trim(fields[0]);
    auto [lp, lec] = std::from_chars(label_sv.data(), label_sv.data() + label_sv.size(), s.label);
    if (lec != std::errc() || lp != label_sv.data() + label_sv.size() || s.label < 0)
      throw ParseError(line_no, "invalid label '" + std::string(label_sv) + "'");
    s.payload.resize(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      auto f = trim(fields[k + 1]);
      auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), s.payload[k]);
      if (ec != std::errc() || p != f.data() + f.size() || !std::isfinite(s.payload[k]))
        throw ParseError(line_no, "non-numeric field '" + std::string(f) + "'");
    }
    s.arrival_index = out.size();
    out.push_back(std::move(s));
  }
  if (out.empty()) throw ParseError(line_no, "empty file " + path);
  return out;
}

inline void write_feature_csv(const std::string& path, std::span<const Sample> samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  char buf[64];
  for (const auto& s : samples) {
    out << s.label;
    for (double v : s.payload) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
      out << ',' << std::string_view(buf, p - buf);
    }
    out << '\n';
  }
}

inline StreamPartition ingest_feature_csv(const std::string& path, double test_fraction = 0.2,
                                          std::uint64_t seed = 0) {
  return partition_samples(read_feature_csv(path), test_fraction, seed);
}

// ---------------------------------------------------------------------------
// IDX files: big-endian magic (0x0000 type ndims) followed by ndims uint32
// dimensions and unsigned-byte data.

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated header in " + what);
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

inline void write_be32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

struct IdxArray {
  std::vector<std::uint32_t> dims;
  std::vector<unsigned char> data;
};

inline IdxArray read_idx(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  const std::uint32_t magic = read_be32(in, path);
  if ((magic >> 16) != 0 || ((magic >> 8) & 0xFF) != 0x08)
    throw FormatError("bad magic number in " + path + " (only unsigned-byte IDX supported)");
  const std::uint32_t ndims = magic & 0xFF;
  if (ndims == 0) throw FormatError("zero-dimensional IDX array in " + path);
  IdxArray arr;
  std::size_t total = 1;
  for (std::uint32_t i = 0; i < ndims; ++i) {
    arr.dims.push_back(read_be32(in, path));
    total *= arr.dims.back();
  }
  arr.data.resize(total);
  if (total > 0 && !in.read(reinterpret_cast<char*>(arr.data.data()),
                            static_cast<std::streamsize>(total)))
    throw FormatError("truncated data in " + path);
  return arr;
}

inline void write_idx(const std::string& path, const std::vector<std::uint32_t>& dims,
                      std::span<const unsigned char> data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  write_be32(out, 0x0800u | static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) write_be32(out, d);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

}  // namespace detail

// Reads an image/label IDX pair into samples. Image files may be 3-d
// (count, rows, cols) or 4-d (count, rows, cols, channels).
inline std::vector<Sample> read_idx_images(const std::string& images_path,
                                           const std::string& labels_path) {
  const auto images = detail::read_idx(images_path);
  const auto labels = detail::read_idx(labels_path);
  if (images.dims.size() != 3 && images.dims.size() != 4)
    throw FormatError("image file must be 3-d or 4-d: " + images_path);
  if (labels.dims.size() != 1) throw FormatError("label file must be 1-d: " + labels_path);
  if (images.dims[0] != labels.dims[0])
    throw FormatError("image count " + std::to_string(images.dims[0]) + " != label count " +
                      std::to_string(labels.dims[0]));
  ImageShape shape{images.dims[1], images.dims[2], images.dims.size() == 4 ? images.dims[3] : 1u};
  const std::size_t per = shape.size();
  std::vector<Sample> out(images.dims[0]);
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& s = out[i];
    s.shape = shape;
    s.label = labels.data[i];
    s.arrival_index = i;
    s.payload.resize(per);
    for (std::size_t k = 0; k < per; ++k) s.payload[k] = images.data[i * per + k] / 255.0;
  }
  return out;
}

inline StreamPartition ingest_idx_images(const std::string& images_path,
                                         const std::string& labels_path,
                                         double test_fraction = 0.2, std::uint64_t seed = 0) {
  return partition_samples(read_idx_images(images_path, labels_path), test_fraction, seed);
}

}  // namespace ocil
