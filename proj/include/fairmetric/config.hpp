#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fairmetric/core.hpp"
#include "fairmetric/data_ingest.hpp"
#include "fairmetric/evaluation.hpp"

namespace fairmetric {

// Flat key-value file with [section] headers; keys become "section.key".
//
//   [data]
//   defendants = defendants.csv      # relative to the config file
//   survey = survey.csv
//   schema = schema.txt
//   labels = survey                  # survey | compas
//   label_mode = pooled_median
//
//   [experiment]
//   mode = compare                   # compare | sweep
//   seed = 7
//   sigma_train_list = 0, 2
//   ...
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, const std::string& what = "config") {
    KeyValueConfig c;
    std::string line;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = csv::trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(what + ": line " + std::to_string(line_no) + ": bad section header");
        section = csv::trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(what + ": line " + std::to_string(line_no) + ": expected 'key = value'");
      }
      std::string key = csv::trim(line.substr(0, eq));
      if (!section.empty()) key = section + "." + key;
      c.values_[key] = csv::trim(line.substr(eq + 1));
    }
    return c;
  }

  static KeyValueConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    auto c = parse(in, path);
    c.base_dir_ = std::filesystem::path(path).parent_path();
    return c;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string require(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end() || it->second.empty()) throw ConfigError("config: missing required key '" + key + "'");
    return it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    try {
      return detail::parse_double(values_.at(key), "config key '" + key + "'");
    } catch (const IngestionError& e) {
      throw ConfigError(e.what());
    }
  }

  long long get_int(const std::string& key, long long fallback) const {
    if (!has(key)) return fallback;
    const auto& s = values_.at(key);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw ConfigError("config key '" + key + "': expected an integer, got '" + s + "'");
    }
    return v;
  }

  std::size_t get_count(const std::string& key, std::size_t fallback) const {
    const auto v = get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw ConfigError("config key '" + key + "' must be nonnegative");
    return static_cast<std::size_t>(v);
  }

  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto v = detail::lower(values_.at(key));
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    throw ConfigError("config key '" + key + "': expected a boolean");
  }

  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const {
    if (!has(key)) return fallback;
    std::vector<double> out;
    std::istringstream in(values_.at(key));
    std::string tok;
    while (std::getline(in, tok, ',')) {
      tok = csv::trim(tok);
      if (!tok.empty()) {
        try {
          out.push_back(detail::parse_double(tok, "config key '" + key + "'"));
        } catch (const IngestionError& e) {
          throw ConfigError(e.what());
        }
      }
    }
    return out;
  }

  std::vector<std::string> get_strings(const std::string& key, std::vector<std::string> fallback) const {
    if (!has(key)) return fallback;
    std::vector<std::string> out;
    std::istringstream in(values_.at(key));
    std::string tok;
    while (std::getline(in, tok, ',')) {
      tok = csv::trim(tok);
      if (!tok.empty()) out.push_back(tok);
    }
    return out;
  }

  // Resolves a path value against the config file's directory.
  std::string path(const std::string& key) const {
    std::filesystem::path p = require(key);
    if (p.is_relative() && !base_dir_.empty()) p = base_dir_ / p;
    return p.string();
  }

  std::string optional_path(const std::string& key) const { return has(key) && !get(key, "").empty() ? path(key) : ""; }

 private:
  std::map<std::string, std::string> values_;
  std::filesystem::path base_dir_;
};

enum class ExperimentMode { compare, sweep };

struct RunSpec {
  ExperimentMode mode = ExperimentMode::compare;
  ExperimentConfig experiment;
  std::vector<LearnerSpec> menu = default_menu();
  std::vector<double> sigma_train_list{0.0, 2.0};
  std::vector<double> sigma_test_list{0.0, 2.0, 4.0, 6.0};
  std::string defendants_path;
  std::string survey_path;
  std::string schema_path;
  bool include_sensitive = false;
  bool survey_labels = true;  // false: label by the defendant table's label column
  LabelMode label_mode;
  std::string out_dir = "results";
  bool write_metrics = true;
};

inline RunSpec run_spec_from(const KeyValueConfig& c) {
  RunSpec r;
  const auto mode = c.get("experiment.mode", "compare");
  if (mode == "compare") {
    r.mode = ExperimentMode::compare;
  } else if (mode == "sweep") {
    r.mode = ExperimentMode::sweep;
  } else {
    throw ConfigError("experiment.mode must be compare or sweep, got '" + mode + "'");
  }

  auto& e = r.experiment;
  e.train_size = c.get_count("experiment.train_size", e.train_size);
  e.test_size = c.get_count("experiment.test_size", e.test_size);
  e.n_repeats = c.get_count("experiment.n_repeats", e.n_repeats);
  e.k_neighbors = c.get_count("experiment.k_neighbors", e.k_neighbors);
  e.sigma_train = c.get_double("experiment.sigma_train", e.sigma_train);
  e.sigma_test = c.get_double("experiment.sigma_test", e.sigma_test);
  e.triplet_subsample = c.get_count("experiment.triplet_subsample", e.triplet_subsample);
  e.rng_seed = static_cast<std::uint64_t>(c.get_int("experiment.seed", static_cast<long long>(e.rng_seed)));
  e.triplet_variant = parse_triplet_variant(c.get("experiment.triplet_variant", to_string(e.triplet_variant)));
  e.threads = static_cast<unsigned>(c.get_count("experiment.threads", e.threads));

  e.alpha = c.get_double("lsml.alpha", e.alpha);
  e.lsml.alpha = e.alpha;
  e.lsml.max_iter = static_cast<int>(c.get_int("lsml.max_iter", e.lsml.max_iter));
  e.lsml.tol = c.get_double("lsml.tol", e.lsml.tol);

  e.lmnn.k_targets = static_cast<int>(c.get_int("lmnn.k_targets", e.lmnn.k_targets));
  e.lmnn.mu = c.get_double("lmnn.mu", e.lmnn.mu);
  e.lmnn.max_iter = static_cast<int>(c.get_int("lmnn.max_iter", e.lmnn.max_iter));
  e.lmnn.tol = c.get_double("lmnn.tol", e.lmnn.tol);
  e.lmnn.strict = c.get_bool("lmnn.strict", e.lmnn.strict);

  const auto form = c.get("mmc.form", "full");
  if (form == "full") {
    e.mmc.form = MetricForm::full;
  } else if (form == "diagonal") {
    e.mmc.form = MetricForm::diagonal;
  } else {
    throw ConfigError("mmc.form must be full or diagonal");
  }
  e.mmc.max_iter = static_cast<int>(c.get_int("mmc.max_iter", e.mmc.max_iter));
  e.mmc.tol = c.get_double("mmc.tol", e.mmc.tol);
  e.mmc.max_projection_cycles = static_cast<int>(c.get_int("mmc.max_projection_cycles", e.mmc.max_projection_cycles));

  if (c.has("experiment.learners")) {
    r.menu.clear();
    for (const auto& name : c.get_strings("experiment.learners", {})) {
      const auto kind = parse_learner_kind(name);
      for (const auto& def : default_menu()) {
        if (def.kind == kind) r.menu.push_back(def);
      }
    }
  }
  r.sigma_train_list = c.get_doubles("experiment.sigma_train_list", r.sigma_train_list);
  r.sigma_test_list = c.get_doubles("experiment.sigma_test_list", r.sigma_test_list);

  r.defendants_path = c.path("data.defendants");
  r.schema_path = c.optional_path("data.schema");
  r.survey_path = c.optional_path("data.survey");
  r.include_sensitive = c.get_bool("data.include_sensitive", false);
  const auto labels = c.get("data.labels", r.survey_path.empty() ? "compas" : "survey");
  if (labels == "survey") {
    r.survey_labels = true;
    if (r.survey_path.empty()) throw ConfigError("data.labels = survey requires data.survey");
  } else if (labels == "compas") {
    r.survey_labels = false;
  } else {
    throw ConfigError("data.labels must be survey or compas");
  }
  r.label_mode = parse_label_mode(c.get("data.label_mode", "pooled_median"));
  r.out_dir = c.has("output.dir") ? c.path("output.dir") : r.out_dir;
  r.write_metrics = c.get_bool("output.write_metrics", true);
  return r;
}

}  // namespace fairmetric
