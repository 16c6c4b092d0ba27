#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "ocil/errors.hpp"
#include "ocil/learner.hpp"

namespace ocil {

enum class DataSource { blobs, csv, idx };

struct DataConfig {
  DataSource source = DataSource::blobs;
  // blobs
  std::size_t classes = 10;
  std::size_t dim = 16;
  std::size_t count_min = 20;
  std::size_t count_max = 200;
  double spread = 1.0;
  std::size_t modes = 2;
  double mode_offset = 3.0;
  double min_separation = 8.0;
  std::uint64_t seed = 0;
  // csv / idx
  std::string path;
  std::string images;
  std::string labels;
  double test_fraction = 0.2;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::vector<Method> methods{Method::ours};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::size_t top_k = 1;
  bool include_initial_in_avg = true;
  Averaging averaging = Averaging::micro;
  std::size_t jobs = 1;
  bool checkpoints = true;
  bool loss_trace = false;
  std::size_t initial_classes = 2;
  std::size_t step_size = 2;
  DataConfig data;
  // Shared hyperparameters; method_preset fills in the per-method switches.
  LearnerConfig learner;
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    const auto b = cur.find_first_not_of(" \t");
    const auto e = cur.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(cur.substr(b, e - b + 1));
  }
  return out;
}

inline Interval parse_interval(const std::string& s) {
  const auto parts = split_list(s);
  try {
    if (parts.size() == 1) return {std::stod(parts[0]), std::stod(parts[0])};
    if (parts.size() == 2) return {std::stod(parts[0]), std::stod(parts[1])};
  } catch (const std::exception&) {
  }
  throw InvalidConfig("expected 'lo, hi' but got '" + s + "'");
}

inline std::string format_interval(const Interval& r) {
  std::ostringstream o;
  o.precision(17);
  o << r.lo << ", " << r.hi;
  return o.str();
}

}  // namespace detail

inline std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& p : detail::split_list(s)) {
    try {
      out.push_back(std::stoull(p));
    } catch (const std::exception&) {
      throw InvalidConfig("bad seed '" + p + "'");
    }
  }
  if (out.empty()) throw InvalidConfig("empty seed list");
  return out;
}

inline std::vector<Method> parse_method_list(const std::string& s) {
  std::vector<Method> out;
  for (const auto& p : detail::split_list(s)) out.push_back(parse_method(p));
  if (out.empty()) throw InvalidConfig("empty method list");
  return out;
}

// INI text: [experiment], [data], [schedule], [model], [train], [pic],
// [augment]. Unknown keys are rejected so typos do not silently fall back to
// defaults.
inline ExperimentConfig parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw InvalidConfig(e.what());
  }

  static const std::map<std::string, std::vector<std::string>> known = {
      {"experiment",
       {"name", "methods", "seeds", "top_k", "include_initial_in_avg", "averaging", "jobs",
        "checkpoints", "loss_trace"}},
      {"data",
       {"source", "classes", "dim", "count_min", "count_max", "spread", "modes", "mode_offset",
        "min_separation", "seed", "path", "images", "labels", "test_fraction"}},
      {"schedule", {"initial", "step"}},
      {"model", {"architecture", "hidden"}},
      {"train",
       {"batch_size", "learning_rate", "weight_decay", "temperature", "beta", "budget",
        "capacity", "er_retrievals", "gdumb_passes", "upper_bound_reinit"}},
      {"pic", {"neighbors", "sigma", "alpha", "tol", "max_iters", "normalize"}},
      {"augment",
       {"flip_probability", "brightness", "contrast", "saturation", "blur_probability",
        "blur_sigma", "feature_noise_sigma", "feature_scale", "seed"}},
  };
  for (const auto& [section, body] : tree) {
    auto it = known.find(section);
    if (it == known.end()) throw InvalidConfig("unknown section [" + section + "]");
    for (const auto& [key, _] : body)
      if (std::find(it->second.begin(), it->second.end(), key) == it->second.end())
        throw InvalidConfig("unknown key '" + key + "' in [" + section + "]");
  }

  ExperimentConfig c;
  auto& L = c.learner;
  // Unlike ptree::get(path, default), a present but malformed value throws.
  auto get = [&tree]<class T>(const char* path, T def) {
    if (auto node = tree.get_child_optional(path)) return node->template get_value<T>();
    return def;
  };
  try {
    auto str = [&](const char* path, std::string def) { return tree.get<std::string>(path, def); };
    c.name = str("experiment.name", c.name);
    if (auto m = tree.get_optional<std::string>("experiment.methods"))
      c.methods = parse_method_list(*m);
    if (auto s = tree.get_optional<std::string>("experiment.seeds")) c.seeds = parse_seed_list(*s);
    c.top_k = get("experiment.top_k", c.top_k);
    c.include_initial_in_avg = get("experiment.include_initial_in_avg", true);
    const auto avg = str("experiment.averaging", "micro");
    if (avg == "micro") c.averaging = Averaging::micro;
    else if (avg == "macro") c.averaging = Averaging::macro;
    else throw InvalidConfig("averaging must be micro or macro");
    c.jobs = get("experiment.jobs", c.jobs);
    c.checkpoints = get("experiment.checkpoints", c.checkpoints);
    c.loss_trace = get("experiment.loss_trace", c.loss_trace);

    const auto src = str("data.source", "blobs");
    if (src == "blobs") c.data.source = DataSource::blobs;
    else if (src == "csv") c.data.source = DataSource::csv;
    else if (src == "idx") c.data.source = DataSource::idx;
    else throw InvalidConfig("data.source must be blobs, csv or idx");
    auto& D = c.data;
    D.classes = get("data.classes", D.classes);
    D.dim = get("data.dim", D.dim);
    D.count_min = get("data.count_min", D.count_min);
    D.count_max = get("data.count_max", D.count_max);
    D.spread = get("data.spread", D.spread);
    D.modes = get("data.modes", D.modes);
    D.mode_offset = get("data.mode_offset", D.mode_offset);
    D.min_separation = get("data.min_separation", D.min_separation);
    D.seed = get("data.seed", D.seed);
    D.path = str("data.path", "");
    D.images = str("data.images", "");
    D.labels = str("data.labels", "");
    D.test_fraction = get("data.test_fraction", D.test_fraction);

    c.initial_classes = get("schedule.initial", c.initial_classes);
    c.step_size = get("schedule.step", c.step_size);

    L.arch = parse_architecture(str("model.architecture", "mlp"));
    L.hidden = get("model.hidden", L.hidden);

    L.batch_size = get("train.batch_size", L.batch_size);
    L.loss.learning_rate = get("train.learning_rate", L.loss.learning_rate);
    L.loss.weight_decay = get("train.weight_decay", L.loss.weight_decay);
    L.loss.temperature = get("train.temperature", L.loss.temperature);
    L.loss.beta = get("train.beta", L.loss.beta);
    L.budget_q = get("train.budget", L.budget_q);
    L.capacity = get("train.capacity", L.capacity);
    L.er_retrievals = get("train.er_retrievals", L.er_retrievals);
    L.gdumb_passes = get("train.gdumb_passes", L.gdumb_passes);
    L.upper_bound_reinit = get("train.upper_bound_reinit", L.upper_bound_reinit);

    L.pic.neighbors = get("pic.neighbors", L.pic.neighbors);
    L.pic.sigma = get("pic.sigma", L.pic.sigma);
    L.pic.alpha = get("pic.alpha", L.pic.alpha);
    L.pic.tol = get("pic.tol", L.pic.tol);
    L.pic.max_iters = get("pic.max_iters", L.pic.max_iters);
    L.pic.normalize = get("pic.normalize", L.pic.normalize);

    auto& A = L.augment;
    A.flip_probability = get("augment.flip_probability", A.flip_probability);
    if (auto v = tree.get_optional<std::string>("augment.brightness"))
      A.brightness = detail::parse_interval(*v);
    if (auto v = tree.get_optional<std::string>("augment.contrast"))
      A.contrast = detail::parse_interval(*v);
    if (auto v = tree.get_optional<std::string>("augment.saturation"))
      A.saturation = detail::parse_interval(*v);
    A.blur_probability = get("augment.blur_probability", A.blur_probability);
    if (auto v = tree.get_optional<std::string>("augment.blur_sigma"))
      A.blur_sigma = detail::parse_interval(*v);
    A.feature_noise_sigma = get("augment.feature_noise_sigma", A.feature_noise_sigma);
    if (auto v = tree.get_optional<std::string>("augment.feature_scale"))
      A.feature_scale = detail::parse_interval(*v);
    A.seed = get("augment.seed", A.seed);
  } catch (const pt::ptree_bad_data& e) {
    throw InvalidConfig(std::string("bad value: ") + e.what());
  }

  if (c.top_k < 1) throw InvalidConfig("top_k must be at least 1");
  if (c.jobs < 1) c.jobs = 1;
  if (c.data.source == DataSource::blobs &&
      (c.data.count_min < 2 || c.data.count_max < c.data.count_min))
    throw InvalidConfig("blob counts need 2 <= count_min <= count_max");
  if (c.data.source == DataSource::csv && c.data.path.empty())
    throw InvalidConfig("data.path is required for csv data");
  if (c.data.source == DataSource::idx && (c.data.images.empty() || c.data.labels.empty()))
    throw InvalidConfig("data.images and data.labels are required for idx data");
  for (auto m : c.methods) method_preset(m, c.learner).validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open config " + path);
  return parse_config(in);
}

// Canonical text form: every effective setting, fixed key order. Hashing
// this names the results directory.
inline std::string canonical_config(const ExperimentConfig& c) {
  std::ostringstream o;
  o.precision(17);
  const auto& L = c.learner;
  const auto& A = L.augment;
  const auto& D = c.data;
  auto yes = [](bool b) { return b ? "true" : "false"; };
  o << "[experiment]\nname = " << c.name << "\nmethods = ";
  for (std::size_t i = 0; i < c.methods.size(); ++i)
    o << (i ? ", " : "") << to_string(c.methods[i]);
  o << "\nseeds = ";
  for (std::size_t i = 0; i < c.seeds.size(); ++i) o << (i ? ", " : "") << c.seeds[i];
  o << "\ntop_k = " << c.top_k << "\ninclude_initial_in_avg = " << yes(c.include_initial_in_avg)
    << "\naveraging = " << (c.averaging == Averaging::micro ? "micro" : "macro")
    << "\ncheckpoints = " << yes(c.checkpoints) << "\nloss_trace = " << yes(c.loss_trace)
    << "\n\n[data]\nsource = "
    << (D.source == DataSource::blobs ? "blobs" : D.source == DataSource::csv ? "csv" : "idx");
  if (D.source == DataSource::blobs) {
    o << "\nclasses = " << D.classes << "\ndim = " << D.dim << "\ncount_min = " << D.count_min
      << "\ncount_max = " << D.count_max << "\nspread = " << D.spread << "\nmodes = " << D.modes
      << "\nmode_offset = " << D.mode_offset << "\nmin_separation = " << D.min_separation;
  } else if (D.source == DataSource::csv) {
    o << "\npath = " << D.path;
  } else {
    o << "\nimages = " << D.images << "\nlabels = " << D.labels;
  }
  o << "\nseed = " << D.seed << "\ntest_fraction = " << D.test_fraction
    << "\n\n[schedule]\ninitial = " << c.initial_classes << "\nstep = " << c.step_size
    << "\n\n[model]\narchitecture = " << to_string(L.arch) << "\nhidden = " << L.hidden
    << "\n\n[train]\nbatch_size = " << L.batch_size
    << "\nlearning_rate = " << L.loss.learning_rate << "\nweight_decay = " << L.loss.weight_decay
    << "\ntemperature = " << L.loss.temperature << "\nbeta = " << L.loss.beta
    << "\nbudget = " << L.budget_q << "\ncapacity = " << L.capacity
    << "\ner_retrievals = " << L.er_retrievals << "\ngdumb_passes = " << L.gdumb_passes
    << "\nupper_bound_reinit = " << yes(L.upper_bound_reinit) << "\n\n[pic]\nneighbors = "
    << L.pic.neighbors << "\nsigma = " << L.pic.sigma << "\nalpha = " << L.pic.alpha
    << "\ntol = " << L.pic.tol << "\nmax_iters = " << L.pic.max_iters
    << "\nnormalize = " << yes(L.pic.normalize)
    << "\n\n[augment]\nflip_probability = " << A.flip_probability
    << "\nbrightness = " << detail::format_interval(A.brightness)
    << "\ncontrast = " << detail::format_interval(A.contrast)
    << "\nsaturation = " << detail::format_interval(A.saturation)
    << "\nblur_probability = " << A.blur_probability
    << "\nblur_sigma = " << detail::format_interval(A.blur_sigma)
    << "\nfeature_noise_sigma = " << A.feature_noise_sigma
    << "\nfeature_scale = " << detail::format_interval(A.feature_scale) << "\nseed = " << A.seed
    << '\n';
  return o.str();
}

// FNV-1a 64; stable across platforms, unlike std::hash.
inline std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string config_hash(const ExperimentConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(canonical_config(c))));
  return buf;
}

}  // namespace ocil
