#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fairmetric/data_ingest.hpp"

namespace fairmetric {

inline const std::array<std::string, 5> kPredictionLevels{"Extremely Unlikely", "Unlikely", "Neither", "Likely",
                                                          "Extremely Likely"};

struct SummaryStats {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation across respondents
  double max = 0.0;
  double min = 0.0;
  std::size_t count = 0;
  bool available() const noexcept { return count > 0; }
};

inline SummaryStats summarize(const std::vector<std::optional<double>>& values) {
  SummaryStats s;
  double sum = 0.0;
  for (const auto& v : values) {
    if (!v) continue;
    if (s.count == 0) {
      s.max = s.min = *v;
    } else {
      s.max = std::max(s.max, *v);
      s.min = std::min(s.min, *v);
    }
    sum += *v;
    ++s.count;
  }
  if (s.count == 0) return s;
  s.mean = sum / static_cast<double>(s.count);
  if (s.count > 1) {
    double ss = 0.0;
    for (const auto& v : values) {
      if (v) ss += (*v - s.mean) * (*v - s.mean);
    }
    s.std = std::sqrt(ss / static_cast<double>(s.count - 1));
  }
  return s;
}

// Bail rate by Q1 level: per respondent granted/answered, then mean, max and
// min across the respondents who used that level.
struct BailRateTable {
  std::vector<std::string> respondents;
  // rates[level][respondent], level 0 = "Extremely Unlikely"
  std::array<std::vector<std::optional<double>>, 5> rates;
  std::array<SummaryStats, 5> stats;
};

inline BailRateTable bail_rate_table(const std::vector<SurveyRecord>& records) {
  if (records.empty()) throw EvaluationError("bail rate table: no survey records");
  BailRateTable t;
  t.respondents = respondent_ids(records);
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < t.respondents.size(); ++i) pos[t.respondents[i]] = i;
  std::array<std::vector<std::size_t>, 5> answered;
  std::array<std::vector<std::size_t>, 5> granted;
  for (std::size_t l = 0; l < 5; ++l) {
    answered[l].assign(t.respondents.size(), 0);
    granted[l].assign(t.respondents.size(), 0);
  }
  for (const auto& r : records) {
    const auto l = static_cast<std::size_t>(r.recidivism_prediction - 1);
    const auto i = pos.at(r.respondent_id);
    ++answered[l][i];
    if (r.bail_granted) ++granted[l][i];
  }
  for (std::size_t l = 0; l < 5; ++l) {
    for (std::size_t i = 0; i < t.respondents.size(); ++i) {
      t.rates[l].push_back(answered[l][i] ? std::optional<double>(static_cast<double>(granted[l][i]) /
                                                                 static_cast<double>(answered[l][i]))
                                          : std::nullopt);
    }
    t.stats[l] = summarize(t.rates[l]);
  }
  return t;
}

// Accuracy of bail decisions against two-year recidivism, split by Q3.
struct ConfidenceAccuracyTable {
  int threshold = 4;  // high confidence = Q3 >= threshold
  std::vector<std::string> respondents;
  std::vector<std::optional<double>> overall;
  std::vector<std::optional<double>> high;
  std::vector<std::optional<double>> low;
  SummaryStats overall_stats;
  SummaryStats high_stats;
  SummaryStats low_stats;
};

inline ConfidenceAccuracyTable confidence_accuracy_table(const std::vector<SurveyRecord>& records,
                                                         int high_confidence_threshold = 4) {
  if (records.empty()) throw EvaluationError("confidence table: no survey records");
  ConfidenceAccuracyTable t;
  t.threshold = high_confidence_threshold;
  t.respondents = respondent_ids(records);
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < t.respondents.size(); ++i) pos[t.respondents[i]] = i;
  const auto n = t.respondents.size();
  std::vector<std::size_t> all(n, 0), all_ok(n, 0), hi(n, 0), hi_ok(n, 0), lo(n, 0), lo_ok(n, 0);
  for (const auto& r : records) {
    const auto i = pos.at(r.respondent_id);
    const bool ok = r.bail_correct();
    ++all[i];
    all_ok[i] += ok;
    if (r.confidence >= high_confidence_threshold) {
      ++hi[i];
      hi_ok[i] += ok;
    } else {
      ++lo[i];
      lo_ok[i] += ok;
    }
  }
  auto ratio = [](std::size_t num, std::size_t den) {
    return den ? std::optional<double>(static_cast<double>(num) / static_cast<double>(den)) : std::nullopt;
  };
  for (std::size_t i = 0; i < n; ++i) {
    t.overall.push_back(ratio(all_ok[i], all[i]));
    t.high.push_back(ratio(hi_ok[i], hi[i]));
    t.low.push_back(ratio(lo_ok[i], lo[i]));
  }
  t.overall_stats = summarize(t.overall);
  t.high_stats = summarize(t.high);
  t.low_stats = summarize(t.low);
  return t;
}

inline std::string percent(const std::optional<double>& v) {
  if (!v) return "N/A";
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << 100.0 * *v << '%';
  return os.str();
}

inline std::string fixed3(const std::optional<double>& v) {
  if (!v) return "N/A";
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << *v;
  return os.str();
}

inline std::optional<double> opt(const SummaryStats& s, double SummaryStats::*field) {
  return s.available() ? std::optional<double>(s.*field) : std::nullopt;
}

inline void write_bail_rate_text(std::ostream& os, const BailRateTable& t) {
  os << "Bail rate by recidivism prediction (" << t.respondents.size() << " respondents)\n\n";
  os << std::left << std::setw(8) << "";
  for (const auto& l : kPredictionLevels) os << std::setw(20) << l;
  os << '\n';
  const std::array<std::pair<const char*, double SummaryStats::*>, 3> rows{
      {{"Mean", &SummaryStats::mean}, {"Max", &SummaryStats::max}, {"Min", &SummaryStats::min}}};
  for (const auto& [name, field] : rows) {
    os << std::setw(8) << name;
    for (std::size_t l = 0; l < 5; ++l) os << std::setw(20) << percent(opt(t.stats[l], field));
    os << '\n';
  }
}

inline void write_bail_rate_csv(std::ostream& os, const BailRateTable& t) {
  os << "row";
  for (const auto& l : kPredictionLevels) os << ',' << l;
  os << '\n';
  const std::array<std::pair<const char*, double SummaryStats::*>, 3> rows{
      {{"mean", &SummaryStats::mean}, {"max", &SummaryStats::max}, {"min", &SummaryStats::min}}};
  for (const auto& [name, field] : rows) {
    os << name;
    for (std::size_t l = 0; l < 5; ++l) {
      const auto v = opt(t.stats[l], field);
      os << ',' << (v ? format_double(*v) : std::string("NA"));
    }
    os << '\n';
  }
  for (std::size_t i = 0; i < t.respondents.size(); ++i) {
    os << "respondent:" << csv::escape(t.respondents[i]);
    for (std::size_t l = 0; l < 5; ++l) os << ',' << (t.rates[l][i] ? format_double(*t.rates[l][i]) : "NA");
    os << '\n';
  }
}

inline void write_confidence_text(std::ostream& os, const ConfidenceAccuracyTable& t) {
  os << "Bail-decision accuracy by confidence (high = Q3 >= " << t.threshold
     << "; +/- is the sample std across respondents)\n\n";
  os << std::left << std::setw(18) << "" << std::setw(18) << "All respondents";
  for (const auto& r : t.respondents) os << std::setw(8) << r;
  os << '\n';
  auto line = [&](const char* name, const SummaryStats& s, const std::vector<std::optional<double>>& per) {
    os << std::setw(18) << name
       << std::setw(18) << (s.available() ? fixed3(s.mean) + "+/-" + fixed3(s.std) : std::string("N/A"));
    for (const auto& v : per) os << std::setw(8) << fixed3(v);
    os << '\n';
  };
  line("Overall", t.overall_stats, t.overall);
  line("High Confidence", t.high_stats, t.high);
  line("Low Confidence", t.low_stats, t.low);
}

inline void write_confidence_csv(std::ostream& os, const ConfidenceAccuracyTable& t) {
  os << "row,mean,std,n";
  for (const auto& r : t.respondents) os << ",respondent:" << csv::escape(r);
  os << '\n';
  auto line = [&](const char* name, const SummaryStats& s, const std::vector<std::optional<double>>& per) {
    os << name << ',';
    if (s.available()) {
      os << format_double(s.mean) << ',' << format_double(s.std);
    } else {
      os << "NA,NA";
    }
    os << ',' << s.count;
    for (const auto& v : per) os << ',' << (v ? format_double(*v) : std::string("NA"));
    os << '\n';
  };
  line("overall", t.overall_stats, t.overall);
  line("high_confidence", t.high_stats, t.high);
  line("low_confidence", t.low_stats, t.low);
}

}  // namespace fairmetric
