#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fairmetric/core.hpp"

namespace fairmetric {

// ---------------------------------------------------------------------------
// CSV

namespace csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row
};

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// Splits one record; supports double-quoted fields with "" escapes.
inline std::vector<std::string> split_record(const std::string& line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
      was_quoted = true;
    } else if (ch == ',') {
      out.push_back(was_quoted ? field : trim(field));
      field.clear();
      was_quoted = false;
    } else {
      field.push_back(ch);
    }
  }
  if (quoted) throw IngestionError("line " + std::to_string(line_no) + ": unterminated quoted field");
  out.push_back(was_quoted ? field : trim(field));
  return out;
}

inline Table parse(std::istream& in, const std::string& what) {
  Table t;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split_record(line, line_no);
    if (!have_header) {
      t.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw IngestionError(what + ": line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                           " fields, header has " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(line_no);
  }
  if (!have_header) throw IngestionError(what + ": file is empty");
  if (t.rows.empty()) throw IngestionError(what + ": file has a header but no data rows");
  return t;
}

inline Table read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open '" + path + "'");
  return parse(in, path);
}

inline std::size_t column_index(const Table& t, const std::string& name, const std::string& what) {
  auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw IngestionError(what + ": missing column '" + name + "'");
  return static_cast<std::size_t>(it - t.header.begin());
}

inline std::string escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace csv

namespace detail {

inline std::string cell_context(const std::string& what, std::size_t line, const std::string& column) {
  return what + ": row at line " + std::to_string(line) + ", column '" + column + "'";
}

inline double parse_double(const std::string& s, const std::string& ctx) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw IngestionError(ctx + ": cannot parse number '" + s + "'");
  }
  return v;
}

inline int parse_int(const std::string& s, const std::string& ctx) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    // Accept integral decimals such as "4.0".
    const double d = parse_double(s, ctx);
    if (d != std::floor(d)) throw IngestionError(ctx + ": expected an integer, got '" + s + "'");
    return static_cast<int>(d);
  }
  return v;
}

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline bool parse_yes_no(const std::string& s, const std::string& ctx) {
  const auto v = lower(s);
  if (v == "yes" || v == "y" || v == "1" || v == "true") return true;
  if (v == "no" || v == "n" || v == "0" || v == "false") return false;
  throw IngestionError(ctx + ": expected yes/no, got '" + s + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Schema

enum class ColumnKind { numeric, categorical, binary };

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  // categorical: the full category set; binary: {value for 0, value for 1}
  // (empty means the cell must already read 0 or 1).
  std::vector<std::string> values;
  bool sensitive = false;  // only encoded when sensitive columns are requested
};

struct FeatureSchema {
  std::string id_column = "id";
  std::string label_column = "compas_decile";
  RatingScale label_scale = RatingScale::compas();
  std::vector<ColumnSpec> columns;

  std::vector<ColumnSpec> active_columns(bool include_sensitive) const {
    std::vector<ColumnSpec> out;
    for (const auto& c : columns) {
      if (!c.sensitive || include_sensitive) out.push_back(c);
    }
    return out;
  }

  // Encoded dimension d after one-hot expansion.
  std::size_t encoded_dim(bool include_sensitive = false) const {
    std::size_t d = 0;
    for (const auto& c : active_columns(include_sensitive)) {
      d += c.kind == ColumnKind::categorical ? c.values.size() : 1;
    }
    return d;
  }
};

inline void validate(const FeatureSchema& s) {
  if (s.columns.empty()) throw ConfigError("schema declares no feature columns");
  std::set<std::string> seen;
  for (const auto& c : s.columns) {
    if (!seen.insert(c.name).second) throw ConfigError("schema: duplicate column '" + c.name + "'");
    if (c.kind == ColumnKind::categorical) {
      if (c.values.empty()) throw ConfigError("schema: categorical column '" + c.name + "' lists no categories");
      if (std::set<std::string>(c.values.begin(), c.values.end()).size() != c.values.size()) {
        throw ConfigError("schema: categorical column '" + c.name + "' repeats a category");
      }
    }
    if (c.kind == ColumnKind::binary && !(c.values.empty() || c.values.size() == 2)) {
      throw ConfigError("schema: binary column '" + c.name + "' needs exactly two values");
    }
  }
  validate(s.label_scale);
}

// Manifest format, one declaration per line ('#' starts a comment):
//   id_column = id
//   label_column = compas_decile
//   label_scale = 1 10
//   column age = numeric
//   column sex = binary Female|Male
//   column charge_category = categorical violent|drug|property|other
//   sensitive_column race = categorical African-American|Caucasian|...
inline FeatureSchema parse_schema(std::istream& in, const std::string& what = "schema") {
  FeatureSchema s;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = csv::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const auto ctx = what + ": line " + std::to_string(line_no);
    if (eq == std::string::npos) throw ConfigError(ctx + ": expected 'key = value'");
    const std::string key = csv::trim(line.substr(0, eq));
    const std::string value = csv::trim(line.substr(eq + 1));
    if (key == "id_column") {
      s.id_column = value;
    } else if (key == "label_column") {
      s.label_column = value;
    } else if (key == "label_scale") {
      std::istringstream is(value);
      if (!(is >> s.label_scale.min >> s.label_scale.max)) throw ConfigError(ctx + ": label_scale needs 'min max'");
    } else if (key.rfind("column ", 0) == 0 || key.rfind("sensitive_column ", 0) == 0) {
      ColumnSpec col;
      col.sensitive = key.rfind("sensitive_column ", 0) == 0;
      col.name = csv::trim(key.substr(key.find(' ') + 1));
      const auto sp = value.find_first_of(" \t");
      const std::string kind = value.substr(0, sp);
      const std::string rest = sp == std::string::npos ? std::string{} : csv::trim(value.substr(sp));
      if (kind == "numeric") {
        col.kind = ColumnKind::numeric;
      } else if (kind == "binary") {
        col.kind = ColumnKind::binary;
      } else if (kind == "categorical") {
        col.kind = ColumnKind::categorical;
      } else {
        throw ConfigError(ctx + ": unknown column kind '" + kind + "'");
      }
      if (!rest.empty()) {
        std::istringstream vs(rest);
        std::string v;
        while (std::getline(vs, v, '|')) col.values.push_back(csv::trim(v));
      }
      s.columns.push_back(std::move(col));
    } else {
      throw ConfigError(ctx + ": unknown key '" + key + "'");
    }
  }
  validate(s);
  return s;
}

inline FeatureSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open schema '" + path + "'");
  return parse_schema(in, path);
}

// Seven defendant attributes: age, sex, juvenile felony and misdemeanor counts,
// prior adult convictions, charge degree, charge category. Race is present
// but marked sensitive.
inline FeatureSchema default_compas_schema() {
  FeatureSchema s;
  s.columns = {
      {"age", ColumnKind::numeric, {}, false},
      {"sex", ColumnKind::binary, {"Female", "Male"}, false},
      {"juv_fel_count", ColumnKind::numeric, {}, false},
      {"juv_misd_count", ColumnKind::numeric, {}, false},
      {"priors_count", ColumnKind::numeric, {}, false},
      {"c_charge_degree", ColumnKind::binary, {"M", "F"}, false},
      {"charge_category", ColumnKind::categorical, {"violent", "property", "drug", "traffic", "other"}, false},
      {"race", ColumnKind::categorical,
       {"African-American", "Asian", "Caucasian", "Hispanic", "Native American", "Other"}, true},
  };
  return s;
}

inline std::vector<std::string> encoded_feature_names(const FeatureSchema& schema, bool include_sensitive) {
  std::vector<std::string> names;
  for (const auto& c : schema.active_columns(include_sensitive)) {
    if (c.kind == ColumnKind::categorical) {
      for (const auto& v : c.values) names.push_back(c.name + "=" + v);
    } else {
      names.push_back(c.name);
    }
  }
  return names;
}

// Defendant table -> dataset labelled by the label column (COMPAS decile).
inline LabeledDataset parse_defendants(const csv::Table& t, const FeatureSchema& schema, bool include_sensitive,
                                       const std::string& what) {
  validate(schema);
  const auto cols = schema.active_columns(include_sensitive);
  const auto id_col = csv::column_index(t, schema.id_column, what);
  const auto label_col = csv::column_index(t, schema.label_column, what);
  std::vector<std::size_t> src;
  for (const auto& c : cols) src.push_back(csv::column_index(t, c.name, what));

  const auto n = static_cast<Eigen::Index>(t.rows.size());
  const auto d = static_cast<Eigen::Index>(schema.encoded_dim(include_sensitive));
  Matrix x = Matrix::Zero(n, d);
  std::vector<int> labels;
  std::vector<std::string> ids;
  std::set<std::string> seen_ids;
  labels.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const auto line = t.line_numbers[r];
    const auto& id = row[id_col];
    if (id.empty()) throw IngestionError(detail::cell_context(what, line, schema.id_column) + ": empty id");
    if (!seen_ids.insert(id).second) {
      throw IngestionError(detail::cell_context(what, line, schema.id_column) + ": duplicate id '" + id + "'");
    }
    ids.push_back(id);
    const auto label_ctx = detail::cell_context(what, line, schema.label_column);
    const int label = detail::parse_int(row[label_col], label_ctx);
    if (!schema.label_scale.contains(label)) {
      throw IngestionError(label_ctx + ": label " + std::to_string(label) + " outside " +
                           std::to_string(schema.label_scale.min) + "-" + std::to_string(schema.label_scale.max));
    }
    labels.push_back(label);

    Eigen::Index out = 0;
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const auto& spec = cols[k];
      const auto& cell = row[src[k]];
      const auto ctx = detail::cell_context(what, line, spec.name);
      const auto ri = static_cast<Eigen::Index>(r);
      switch (spec.kind) {
        case ColumnKind::numeric:
          x(ri, out++) = detail::parse_double(cell, ctx);
          break;
        case ColumnKind::binary:
          if (spec.values.empty()) {
            const int v = detail::parse_int(cell, ctx);
            if (v != 0 && v != 1) throw IngestionError(ctx + ": binary value must be 0 or 1, got '" + cell + "'");
            x(ri, out++) = v;
          } else if (cell == spec.values[0]) {
            x(ri, out++) = 0.0;
          } else if (cell == spec.values[1]) {
            x(ri, out++) = 1.0;
          } else {
            throw IngestionError(ctx + ": unknown binary value '" + cell + "' (expected " + spec.values[0] + " or " +
                                 spec.values[1] + ")");
          }
          break;
        case ColumnKind::categorical: {
          auto it = std::find(spec.values.begin(), spec.values.end(), cell);
          if (it == spec.values.end()) throw IngestionError(ctx + ": unknown category '" + cell + "'");
          x(ri, out + (it - spec.values.begin())) = 1.0;
          out += static_cast<Eigen::Index>(spec.values.size());
          break;
        }
      }
    }
  }
  return {std::move(x), std::move(labels), schema.label_scale, encoded_feature_names(schema, include_sensitive),
          "defendants:" + schema.label_column, std::move(ids)};
}

inline LabeledDataset load_defendants(const std::string& path, const FeatureSchema& schema,
                                      bool include_sensitive = false) {
  return parse_defendants(csv::read_file(path), schema, include_sensitive, path);
}

// ---------------------------------------------------------------------------
// Survey

struct SurveyRecord {
  std::string respondent_id;
  std::string defendant_id;
  int recidivism_prediction = 0;  // Q1, 1..5
  bool bail_granted = false;      // Q2
  int confidence = 0;             // Q3, 1..5
  bool ground_truth_recidivated = false;

  // Bail granted to someone who did not reoffend, or denied to someone who did.
  bool bail_correct() const noexcept { return bail_granted != ground_truth_recidivated; }
};

inline std::vector<SurveyRecord> parse_survey(const csv::Table& t, const std::string& what) {
  const auto c_resp = csv::column_index(t, "respondent_id", what);
  const auto c_def = csv::column_index(t, "defendant_id", what);
  const auto c_q1 = csv::column_index(t, "q1_recidivism", what);
  const auto c_q2 = csv::column_index(t, "q2_bail", what);
  const auto c_q3 = csv::column_index(t, "q3_confidence", what);
  const auto c_gt = csv::column_index(t, "two_year_recid", what);
  const auto scale = RatingScale::survey();

  std::vector<SurveyRecord> out;
  std::set<std::pair<std::string, std::string>> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const auto line = t.line_numbers[r];
    SurveyRecord rec;
    rec.respondent_id = row[c_resp];
    rec.defendant_id = row[c_def];
    if (rec.respondent_id.empty() || rec.defendant_id.empty()) {
      throw IngestionError(what + ": row at line " + std::to_string(line) + ": empty respondent or defendant id");
    }
    if (!seen.emplace(rec.respondent_id, rec.defendant_id).second) {
      throw IngestionError(what + ": row at line " + std::to_string(line) + ": duplicate (respondent " +
                           rec.respondent_id + ", defendant " + rec.defendant_id + ")");
    }
    const auto q1_ctx = detail::cell_context(what, line, "q1_recidivism");
    rec.recidivism_prediction = detail::parse_int(row[c_q1], q1_ctx);
    if (!scale.contains(rec.recidivism_prediction)) {
      throw IngestionError(q1_ctx + ": rating " + row[c_q1] + " outside 1-5");
    }
    rec.bail_granted = detail::parse_yes_no(row[c_q2], detail::cell_context(what, line, "q2_bail"));
    const auto q3_ctx = detail::cell_context(what, line, "q3_confidence");
    rec.confidence = detail::parse_int(row[c_q3], q3_ctx);
    if (!scale.contains(rec.confidence)) throw IngestionError(q3_ctx + ": rating " + row[c_q3] + " outside 1-5");
    const auto gt_ctx = detail::cell_context(what, line, "two_year_recid");
    const int gt = detail::parse_int(row[c_gt], gt_ctx);
    if (gt != 0 && gt != 1) throw IngestionError(gt_ctx + ": expected 0 or 1, got '" + row[c_gt] + "'");
    rec.ground_truth_recidivated = gt == 1;
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::vector<SurveyRecord> load_survey(const std::string& path) {
  return parse_survey(csv::read_file(path), path);
}

// Respondent ids in ascending order (numeric when every id is an integer).
inline std::vector<std::string> respondent_ids(const std::vector<SurveyRecord>& records) {
  std::vector<std::string> ids;
  for (const auto& r : records) {
    if (std::find(ids.begin(), ids.end(), r.respondent_id) == ids.end()) ids.push_back(r.respondent_id);
  }
  const bool numeric = std::all_of(ids.begin(), ids.end(), [](const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
  });
  std::sort(ids.begin(), ids.end(), [numeric](const std::string& a, const std::string& b) {
    if (numeric && a.size() != b.size()) return a.size() < b.size();
    return a < b;
  });
  return ids;
}

// ---------------------------------------------------------------------------
// Labels from survey answers

struct LabelMode {
  enum class Kind { per_respondent, pooled_median, pooled_rounded_mean };
  Kind kind = Kind::pooled_median;
  std::string respondent;

  std::string to_string() const {
    switch (kind) {
      case Kind::per_respondent:
        return "per_respondent:" + respondent;
      case Kind::pooled_median:
        return "pooled_median";
      case Kind::pooled_rounded_mean:
        return "pooled_rounded_mean";
    }
    return {};
  }
};

inline LabelMode parse_label_mode(const std::string& s) {
  if (s == "pooled_median") return {LabelMode::Kind::pooled_median, {}};
  if (s == "pooled_rounded_mean") return {LabelMode::Kind::pooled_rounded_mean, {}};
  const std::string prefix = "per_respondent:";
  if (s.rfind(prefix, 0) == 0 && s.size() > prefix.size()) {
    return {LabelMode::Kind::per_respondent, s.substr(prefix.size())};
  }
  throw ConfigError("unknown label mode '" + s + "' (expected per_respondent:<id>|pooled_median|pooled_rounded_mean)");
}

// Half-up rounding of the mean of integer ratings.
inline int round_half_up_mean(const std::vector<int>& v) {
  long long sum = 0;
  for (int x : v) sum += x;
  const auto n = static_cast<long long>(v.size());
  // floor((2*sum + n) / (2*n)) for nonnegative sums
  return static_cast<int>((2 * sum + n) / (2 * n));
}

// Median; for an even count the two middle values are averaged and rounded
// half up.
inline int median_rating(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return round_half_up_mean({v[n / 2 - 1], v[n / 2]});
}

// Restricts the defendant table to surveyed defendants (keeping its row order)
// and relabels them with Q1 ratings on the 1-5 scale.
inline LabeledDataset attach_labels(const LabeledDataset& defendants, const std::vector<SurveyRecord>& survey,
                                    const LabelMode& mode) {
  std::map<std::string, std::vector<int>> ratings;
  bool respondent_seen = false;
  for (const auto& r : survey) {
    if (mode.kind == LabelMode::Kind::per_respondent) {
      if (r.respondent_id != mode.respondent) continue;
      respondent_seen = true;
    }
    ratings[r.defendant_id].push_back(r.recidivism_prediction);
  }
  if (mode.kind == LabelMode::Kind::per_respondent && !respondent_seen) {
    throw IngestionError("unknown respondent id '" + mode.respondent + "'");
  }
  if (ratings.empty()) throw IngestionError("survey has no records");

  std::map<std::string, Index> row_of;
  for (Index i = 0; i < defendants.size(); ++i) row_of.emplace(defendants.ids()[i], i);
  for (const auto& [id, _] : ratings) {
    if (!row_of.count(id)) throw IngestionError("surveyed defendant '" + id + "' not found in defendant table");
  }

  std::vector<Index> rows;
  std::vector<int> labels;
  for (Index i = 0; i < defendants.size(); ++i) {
    auto it = ratings.find(defendants.ids()[i]);
    if (it == ratings.end()) continue;
    rows.push_back(i);
    switch (mode.kind) {
      case LabelMode::Kind::per_respondent:
        labels.push_back(it->second.front());
        break;
      case LabelMode::Kind::pooled_median:
        labels.push_back(median_rating(it->second));
        break;
      case LabelMode::Kind::pooled_rounded_mean:
        labels.push_back(round_half_up_mean(it->second));
        break;
    }
  }
  return defendants.subset(rows).with_labels(std::move(labels), RatingScale::survey(), "survey:" + mode.to_string());
}

// ---------------------------------------------------------------------------
// Standardization

struct StandardizationStats {
  Vector mean;
  Vector scale;  // sample standard deviation, 1 for constant columns
};

inline std::pair<LabeledDataset, StandardizationStats> standardize(
    const LabeledDataset& data, const std::optional<StandardizationStats>& stats = std::nullopt) {
  StandardizationStats s;
  const Matrix& x = data.features();
  if (stats) {
    if (static_cast<std::size_t>(stats->mean.size()) != data.dim() ||
        static_cast<std::size_t>(stats->scale.size()) != data.dim()) {
      throw ConfigError("standardization stats dimension does not match dataset");
    }
    s = *stats;
  } else {
    s.mean = x.colwise().mean().transpose();
    s.scale = Vector::Ones(x.cols());
    if (x.rows() > 1) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double var = (x.col(j).array() - s.mean[j]).square().sum() / static_cast<double>(x.rows() - 1);
        const double sd = std::sqrt(var);
        if (sd > 1e-12 * std::max(1.0, std::abs(s.mean[j]))) s.scale[j] = sd;
      }
    }
  }
  Matrix z = (x.rowwise() - s.mean.transpose()).array().rowwise() / s.scale.transpose().array();
  return {data.with_features(std::move(z)), std::move(s)};
}

}  // namespace fairmetric
