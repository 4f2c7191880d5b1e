#pragma once

#include <filesystem>
#include <fstream>
#include <cctype>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "fairmetric/config.hpp"
#include "fairmetric/data_ingest.hpp"
#include "fairmetric/evaluation.hpp"
#include "fairmetric/learners.hpp"
#include "fairmetric/survey_report.hpp"

namespace fairmetric::commands {

namespace fs = std::filesystem;

// Buffered output files, written only once every step has succeeded.
class OutputSet {
 public:
  std::ostream& open(const std::string& relative) {
    files_.emplace_back(relative, std::make_unique<std::ostringstream>());
    return *files_.back().second;
  }

  void commit(const fs::path& dir) const {
    fs::create_directories(dir);
    for (const auto& [name, body] : files_) {
      const auto target = dir / name;
      fs::create_directories(target.parent_path());
      const auto tmp = fs::path(target.string() + ".tmp");
      {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write '" + tmp.string() + "'");
        out << body->str();
      }
      fs::rename(tmp, target);
    }
  }

 private:
  std::vector<std::pair<std::string, std::unique_ptr<std::ostringstream>>> files_;
};

inline FeatureSchema schema_or_default(const std::string& path) {
  return path.empty() ? default_compas_schema() : load_schema(path);
}

// ---------------------------------------------------------------------------

struct IngestSummary {
  std::size_t defendants = 0;
  std::size_t encoded_dim = 0;
  std::size_t survey_records = 0;
  std::size_t respondents = 0;
  std::size_t surveyed_defendants = 0;
};

inline void write_dataset_csv(std::ostream& os, const LabeledDataset& data, const std::string& label_column) {
  os << "id";
  for (const auto& n : data.feature_names()) os << ',' << csv::escape(n);
  os << ',' << label_column << '\n';
  for (Index i = 0; i < data.size(); ++i) {
    os << csv::escape(data.ids()[i]);
    for (Eigen::Index j = 0; j < data.features().cols(); ++j) {
      os << ',' << format_double(data.features()(static_cast<Eigen::Index>(i), j));
    }
    os << ',' << data.label(i) << '\n';
  }
}

inline void write_survey_csv(std::ostream& os, const std::vector<SurveyRecord>& records) {
  os << "respondent_id,defendant_id,q1_recidivism,q2_bail,q3_confidence,two_year_recid\n";
  for (const auto& r : records) {
    os << csv::escape(r.respondent_id) << ',' << csv::escape(r.defendant_id) << ',' << r.recidivism_prediction << ','
       << (r.bail_granted ? "yes" : "no") << ',' << r.confidence << ',' << (r.ground_truth_recidivated ? 1 : 0)
       << '\n';
  }
}

// Validates the inputs and writes canonical copies plus summary.txt. Nothing
// is written if any input fails validation.
inline IngestSummary ingest(const std::string& defendants_path, const std::string& survey_path,
                            const std::string& schema_path, const std::string& out_dir, bool include_sensitive) {
  const auto schema = schema_or_default(schema_path);
  const auto defendants = load_defendants(defendants_path, schema, include_sensitive);
  IngestSummary s;
  s.defendants = defendants.size();
  s.encoded_dim = defendants.dim();
  std::vector<SurveyRecord> survey;
  if (!survey_path.empty()) {
    survey = load_survey(survey_path);
    const auto pooled = attach_labels(defendants, survey, {LabelMode::Kind::pooled_median, {}});
    s.survey_records = survey.size();
    s.respondents = respondent_ids(survey).size();
    s.surveyed_defendants = pooled.size();
  }

  OutputSet out;
  write_dataset_csv(out.open("defendants.csv"), defendants, schema.label_column);
  if (!survey_path.empty()) write_survey_csv(out.open("survey.csv"), survey);
  auto& summary = out.open("summary.txt");
  summary << "defendants = " << s.defendants << '\n'
          << "encoded_dim = " << s.encoded_dim << '\n'
          << "include_sensitive = " << (include_sensitive ? "true" : "false") << '\n'
          << "survey_records = " << s.survey_records << '\n'
          << "respondents = " << s.respondents << '\n'
          << "surveyed_defendants = " << s.surveyed_defendants << '\n';
  out.commit(out_dir);
  return s;
}

// ---------------------------------------------------------------------------

// Survey labels: the surveyed defendants rated per the label mode. COMPAS
// labels: the surveyed defendants when a survey is configured, otherwise the
// whole defendant table (each repeat then draws its own sample).
inline LabeledDataset load_experiment_dataset(const RunSpec& spec) {
  const auto schema = schema_or_default(spec.schema_path);
  auto defendants = load_defendants(spec.defendants_path, schema, spec.include_sensitive);
  if (spec.survey_path.empty()) return defendants;
  const auto survey = load_survey(spec.survey_path);
  const auto surveyed = attach_labels(defendants, survey, spec.label_mode);
  if (spec.survey_labels) return surveyed;
  std::vector<Index> rows;
  std::map<std::string, Index> row_of;
  for (Index i = 0; i < defendants.size(); ++i) row_of.emplace(defendants.ids()[i], i);
  for (const auto& id : surveyed.ids()) rows.push_back(row_of.at(id));
  return defendants.subset(rows);
}

inline std::string metric_file_name(const std::string& learner, std::size_t repeat) {
  std::string clean;
  for (char c : learner) clean += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  return "metrics/" + clean + "_r" + std::to_string(repeat) + ".txt";
}

struct ExperimentOutcome {
  std::size_t cells_total = 0;
  std::size_t cells_ok = 0;
  std::vector<std::string> messages;
};

inline ExperimentOutcome run_compare(const RunSpec& spec, const LabeledDataset& data, OutputSet& out) {
  const auto result = run_experiment(spec.experiment, data, spec.menu);
  write_report_csv(out.open("report.csv"), result.report);
  write_report_text(out.open("report.txt"), result.report);
  ExperimentOutcome o;
  for (const auto& c : result.report.cells) {
    ++o.cells_total;
    o.cells_ok += c.available();
  }
  for (std::size_t r = 0; r < result.repeats.size(); ++r) {
    const auto& rep = result.repeats[r];
    o.messages.insert(o.messages.end(), rep.messages.begin(), rep.messages.end());
    if (!spec.write_metrics) continue;
    for (std::size_t l = 0; l < result.metric_names.size(); ++l) {
      if (rep.metrics[l]) write_metric(out.open(metric_file_name(result.metric_names[l], r)), *rep.metrics[l]);
    }
  }
  return o;
}

inline ExperimentOutcome run_sweep(const RunSpec& spec, const LabeledDataset& data, OutputSet& out) {
  const auto table = sigma_sweep(spec.experiment, data, spec.sigma_train_list, spec.sigma_test_list);
  write_sweep_csv(out.open("sweep.csv"), table);
  write_sweep_text(out.open("sweep.txt"), table);
  ExperimentOutcome o;
  for (const auto& row : table.cells) {
    for (const auto& c : row) {
      ++o.cells_total;
      o.cells_ok += c.available();
    }
  }
  o.messages = table.messages;
  if (spec.write_metrics) {
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      for (std::size_t r = 0; r < table.metrics[c].size(); ++r) {
        if (table.metrics[c][r]) write_metric(out.open(metric_file_name(table.columns[c], r)), *table.metrics[c][r]);
      }
    }
  }
  return o;
}

inline void write_run_header(std::ostream& os, const RunSpec& spec, const LabeledDataset& data) {
  const auto& e = spec.experiment;
  os << "mode = " << (spec.mode == ExperimentMode::compare ? "compare" : "sweep") << '\n'
     << "labels = " << data.source_tag() << '\n'
     << "n = " << data.size() << '\n'
     << "d = " << data.dim() << '\n'
     << "train_size = " << e.train_size << '\n'
     << "test_size = " << e.test_size << '\n'
     << "n_repeats = " << e.n_repeats << '\n'
     << "k_neighbors = " << e.k_neighbors << '\n'
     << "sigma_train = " << format_double(e.sigma_train) << '\n'
     << "sigma_test = " << format_double(e.sigma_test) << '\n'
     << "alpha = " << format_double(e.alpha) << '\n'
     << "triplet_variant = " << to_string(e.triplet_variant) << '\n'
     << "triplet_subsample = " << e.triplet_subsample << '\n'
     << "seed = " << e.rng_seed << '\n';
}

inline ExperimentOutcome experiment(const RunSpec& spec) {
  const auto data = load_experiment_dataset(spec);
  OutputSet out;
  write_run_header(out.open("run.txt"), spec, data);
  auto outcome = spec.mode == ExperimentMode::compare ? run_compare(spec, data, out) : run_sweep(spec, data, out);
  auto& log = out.open("messages.log");
  for (const auto& m : outcome.messages) log << m << '\n';
  out.commit(spec.out_dir);
  return outcome;
}

// ---------------------------------------------------------------------------

struct SurveyReport {
  BailRateTable bail;
  ConfidenceAccuracyTable confidence;
};

inline SurveyReport report_survey(const std::string& survey_path, int threshold, const std::string& out_dir,
                                  std::ostream* echo = nullptr) {
  const auto records = load_survey(survey_path);
  SurveyReport r{bail_rate_table(records), confidence_accuracy_table(records, threshold)};
  OutputSet out;
  write_bail_rate_text(out.open("table_bail_rate.txt"), r.bail);
  write_bail_rate_csv(out.open("table_bail_rate.csv"), r.bail);
  write_confidence_text(out.open("table_confidence_accuracy.txt"), r.confidence);
  write_confidence_csv(out.open("table_confidence_accuracy.csv"), r.confidence);
  out.commit(out_dir);
  if (echo) {
    write_bail_rate_text(*echo, r.bail);
    *echo << '\n';
    write_confidence_text(*echo, r.confidence);
  }
  return r;
}

// ---------------------------------------------------------------------------

inline std::size_t dump_triplets(const LabeledDataset& data, double sigma, TripletVariant variant,
                                 const std::string& out_path) {
  const auto set = build_triplets(data, sigma, variant);
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + out_path + "'");
  out << "a,b,c\n";
  for (const auto& t : set.triplets) out << t.a << ',' << t.b << ',' << t.c << '\n';
  return set.size();
}

}  // namespace fairmetric::commands
