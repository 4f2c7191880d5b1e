#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fairmetric/constraints.hpp"
#include "fairmetric/core.hpp"
#include "fairmetric/data_ingest.hpp"
#include "fairmetric/learners.hpp"
#include "fairmetric/rng.hpp"

namespace fairmetric {

inline const std::string kTripletLoss = "triplet";
inline const std::string kKnnL1 = "knn_l1";
inline const std::string kKnnL2 = "knn_l2";

// ---------------------------------------------------------------------------
// Losses

// Distances within this relative gap are ties. Mathematically equal distances
// come out a few ulps apart, differently for M and tM, and must not decide
// a violation or a neighbour slot.
inline constexpr double kTieTolerance = 1e-9;

// Fraction of triplets with d_M(a, b) > d_M(a, c); ties count as satisfied.
inline double triplet_violation_loss(const MahalanobisMetric& metric, const LabeledDataset& test,
                                     const TripletSet& triplets) {
  if (triplets.empty()) throw EvaluationError("triplet loss: empty triplet set");
  if (metric.dim() != test.dim()) throw ConfigError("triplet loss: metric/data dimension mismatch");
  const Matrix z = metric.transform(test.features());
  std::size_t violated = 0;
  for (const auto& t : triplets.triplets) {
    if (std::max({t.a, t.b, t.c}) >= test.size()) throw ConfigError("triplet index outside test set");
    const auto a = static_cast<Eigen::Index>(t.a);
    const double ab = (z.row(a) - z.row(static_cast<Eigen::Index>(t.b))).squaredNorm();
    const double ac = (z.row(a) - z.row(static_cast<Eigen::Index>(t.c))).squaredNorm();
    if (ab > ac * (1.0 + kTieTolerance)) ++violated;
  }
  return static_cast<double>(violated) / static_cast<double>(triplets.size());
}

inline constexpr double kZeroDistance = 1e-12;

namespace detail {

// kNN on rows already mapped by metric.transform, so distances are Euclidean.
inline double knn_predict_mapped(const Matrix& train_z, const std::vector<int>& labels,
                                 const Eigen::Ref<const Eigen::RowVectorXd>& z, std::size_t k) {
  if (k == 0) throw ConfigError("knn: k must be >= 1");
  if (k > labels.size()) {
    throw ConfigError("knn: k=" + std::to_string(k) + " exceeds training size " + std::to_string(labels.size()));
  }
  std::vector<std::pair<double, Index>> dist;
  dist.reserve(labels.size());
  for (Eigen::Index j = 0; j < train_z.rows(); ++j) {
    dist.emplace_back((train_z.row(j) - z).norm(), static_cast<Index>(j));
  }
  std::sort(dist.begin(), dist.end());
  // everything tied with the k-th distance competes for the last slots by index
  const double dk = dist[k - 1].first;
  std::size_t first_tied = k - 1;
  while (first_tied > 0 && dist[first_tied - 1].first >= dk * (1.0 - kTieTolerance)) --first_tied;
  std::size_t end_tied = k;
  while (end_tied < dist.size() && dist[end_tied].first <= dk * (1.0 + kTieTolerance)) ++end_tied;
  std::sort(dist.begin() + static_cast<std::ptrdiff_t>(first_tied), dist.begin() + static_cast<std::ptrdiff_t>(end_tied),
            [](const auto& a, const auto& b) { return a.second < b.second; });

  double zero_sum = 0.0;
  std::size_t zero_count = 0;
  for (std::size_t t = 0; t < k; ++t) {
    if (dist[t].first < kZeroDistance) {
      zero_sum += labels[dist[t].second];
      ++zero_count;
    }
  }
  if (zero_count) return zero_sum / static_cast<double>(zero_count);

  double wsum = 0.0;
  double ysum = 0.0;
  for (std::size_t t = 0; t < k; ++t) {
    const double w = 1.0 / dist[t].first;
    wsum += w;
    ysum += w * labels[dist[t].second];
  }
  return ysum / wsum;
}

}  // namespace detail

// Inverse-distance weighted mean of the k nearest training labels; ties at the
// k-th neighbour go to the lower training index. Exact matches short-circuit
// to the mean label of the zero-distance neighbours.
inline double knn_predict(const MahalanobisMetric& metric, const LabeledDataset& train,
                          const Eigen::Ref<const Vector>& x, std::size_t k) {
  if (static_cast<std::size_t>(x.size()) != metric.dim()) throw ConfigError("knn: query dimension mismatch");
  return detail::knn_predict_mapped(metric.transform(train.features()), train.labels(),
                                    x.transpose() * metric.factor(), k);
}

inline std::vector<double> knn_predictions(const MahalanobisMetric& metric, const LabeledDataset& train,
                                           const LabeledDataset& test, std::size_t k) {
  const Matrix train_z = metric.transform(train.features());
  const Matrix test_z = metric.transform(test.features());
  std::vector<double> out;
  out.reserve(test.size());
  for (Eigen::Index i = 0; i < test_z.rows(); ++i) {
    out.push_back(detail::knn_predict_mapped(train_z, train.labels(), test_z.row(i), k));
  }
  return out;
}

// Mean absolute error of knn_predict over the test rows.
inline double knn_l1(const MahalanobisMetric& metric, const LabeledDataset& train, const LabeledDataset& test,
                     std::size_t k) {
  const auto pred = knn_predictions(metric, train, test, k);
  double s = 0.0;
  for (Index i = 0; i < test.size(); ++i) s += std::abs(pred[i] - test.label(i));
  return s / static_cast<double>(test.size());
}

// Mean squared error of knn_predict over the test rows.
inline double knn_l2(const MahalanobisMetric& metric, const LabeledDataset& train, const LabeledDataset& test,
                     std::size_t k) {
  const auto pred = knn_predictions(metric, train, test, k);
  double s = 0.0;
  for (Index i = 0; i < test.size(); ++i) {
    const double e = pred[i] - test.label(i);
    s += e * e;
  }
  return s / static_cast<double>(test.size());
}

// ---------------------------------------------------------------------------
// Learner menu

enum class LearnerKind { euclidean, precision, lmnn, mmc, lsml };

struct LearnerSpec {
  std::string name;
  LearnerKind kind = LearnerKind::euclidean;
  std::optional<double> sigma_train;  // LSML only; overrides the config value
};

inline std::vector<LearnerSpec> default_menu() {
  return {{"Euclidean", LearnerKind::euclidean, {}},
          {"Precision", LearnerKind::precision, {}},
          {"LMNN", LearnerKind::lmnn, {}},
          {"MMC", LearnerKind::mmc, {}},
          {"LSML", LearnerKind::lsml, {}}};
}

inline LearnerKind parse_learner_kind(const std::string& s) {
  const auto v = detail::lower(s);
  if (v == "euclidean") return LearnerKind::euclidean;
  if (v == "precision") return LearnerKind::precision;
  if (v == "lmnn") return LearnerKind::lmnn;
  if (v == "mmc") return LearnerKind::mmc;
  if (v == "lsml") return LearnerKind::lsml;
  throw ConfigError("unknown learner '" + s + "'");
}

struct Split {
  std::vector<Index> train;
  std::vector<Index> test;
};

// Repeat r draws train_size + test_size rows from a permutation seeded by
// (root seed, repeat); every learner in the repeat sees the same split.
inline Split make_split(std::size_t n, const ExperimentConfig& cfg, std::size_t repeat) {
  const auto perm = rng::permutation(n, rng::derive_seed(cfg.rng_seed, rng::Stream::split, repeat));
  Split s;
  s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(cfg.train_size));
  s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(cfg.train_size),
                perm.begin() + static_cast<std::ptrdiff_t>(cfg.train_size + cfg.test_size));
  return s;
}

// Standardized train/test folds for one repeat (stats fit on train only).
struct Fold {
  LabeledDataset train;
  LabeledDataset test;
};

inline Fold make_fold(const LabeledDataset& data, const ExperimentConfig& cfg, std::size_t repeat) {
  const auto split = make_split(data.size(), cfg, repeat);
  auto [train, stats] = standardize(data.subset(split.train));
  auto test = standardize(data.subset(split.test), stats).first;
  return {std::move(train), std::move(test)};
}

inline TripletSet training_triplets(const LabeledDataset& train, double sigma, const ExperimentConfig& cfg,
                                    std::size_t repeat) {
  const auto full = build_triplets(train, sigma, cfg.triplet_variant);
  return subsample_triplets(full, cfg.triplet_subsample,
                            rng::derive_seed(cfg.rng_seed, rng::Stream::train_triplets, repeat));
}

inline FitResult fit_learner(const LearnerSpec& spec, const LabeledDataset& train, const ExperimentConfig& cfg,
                             std::size_t repeat) {
  switch (spec.kind) {
    case LearnerKind::euclidean:
      return {euclidean_baseline(train.dim()), {}, {}};
    case LearnerKind::precision: {
      auto p = precision_baseline(train);
      std::vector<std::string> w;
      if (p.condition_warning) w.emplace_back("precision: singular covariance floored");
      return {std::move(p.metric), {}, std::move(w)};
    }
    case LearnerKind::lmnn:
      return fit_lmnn(train, cfg.lmnn);
    case LearnerKind::mmc:
      return fit_mmc(train, build_pairs(train), cfg.mmc);
    case LearnerKind::lsml: {
      auto opts = cfg.lsml;
      opts.alpha = cfg.alpha;
      const auto triplets = training_triplets(train, spec.sigma_train.value_or(cfg.sigma_train), cfg, repeat);
      if (triplets.empty()) throw ConstraintError("LSML: no training triplets at this sigma");
      return fit_lsml(train, triplets, opts);
    }
  }
  throw ConfigError("unhandled learner kind");
}

// Runs body(r) for every repeat, on up to `threads` workers. Each repeat
// writes only its own slot, so the outcome is independent of scheduling.
inline void for_each_repeat(std::size_t repeats, unsigned threads, const std::function<void(std::size_t)>& body) {
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(repeats)));
  if (workers == 1) {
    for (std::size_t r = 0; r < repeats; ++r) body(r);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t r = next++; r < repeats; r = next++) {
        try {
          body(r);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

struct RepeatOutcome {
  // values[metric][loss]; nullopt when the learner failed or the loss was N/A
  std::vector<std::map<std::string, std::optional<double>>> values;
  std::vector<std::optional<MahalanobisMetric>> metrics;
  std::vector<std::string> messages;
};

struct ExperimentResult {
  EvalReport report;
  std::vector<RepeatOutcome> repeats;
  std::vector<std::string> metric_names;
};

inline const std::vector<std::string>& loss_names() {
  static const std::vector<std::string> names{kTripletLoss, kKnnL1, kKnnL2};
  return names;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const LabeledDataset& data,
                                       const std::vector<LearnerSpec>& menu) {
  validate(cfg, data.size());
  if (menu.empty()) throw ConfigError("learner menu is empty");
  ExperimentResult result;
  for (const auto& s : menu) result.metric_names.push_back(s.name);
  result.repeats.resize(cfg.n_repeats);

  for_each_repeat(cfg.n_repeats, cfg.threads, [&](std::size_t r) {
    auto& out = result.repeats[r];
    const auto fold = make_fold(data, cfg, r);
    std::optional<TripletSet> test_triplets;
    if (fold.test.size() >= 3) {
      auto t = build_triplets(fold.test, cfg.sigma_test, cfg.triplet_variant);
      if (!t.empty()) test_triplets = std::move(t);
    }
    if (!test_triplets) out.messages.push_back("repeat " + std::to_string(r) + ": no test triplets; triplet loss N/A");

    out.values.resize(menu.size());
    out.metrics.resize(menu.size());
    for (std::size_t l = 0; l < menu.size(); ++l) {
      auto& cell = out.values[l];
      for (const auto& loss : loss_names()) cell[loss] = std::nullopt;
      try {
        auto fit = fit_learner(menu[l], fold.train, cfg, r);
        for (const auto& w : fit.warnings) out.messages.push_back("repeat " + std::to_string(r) + " " + menu[l].name + ": " + w);
        if (test_triplets) cell[kTripletLoss] = triplet_violation_loss(fit.metric, fold.test, *test_triplets);
        cell[kKnnL1] = knn_l1(fit.metric, fold.train, fold.test, cfg.k_neighbors);
        cell[kKnnL2] = knn_l2(fit.metric, fold.train, fold.test, cfg.k_neighbors);
        out.metrics[l] = std::move(fit.metric);
      } catch (const Error& e) {
        out.messages.push_back("repeat " + std::to_string(r) + " " + menu[l].name + " failed: " + e.what());
      }
    }
  });

  result.report.triplet_variant = to_string(cfg.triplet_variant);
  result.report.label_mode = data.source_tag();
  for (std::size_t l = 0; l < menu.size(); ++l) {
    for (const auto& loss : loss_names()) {
      std::vector<std::optional<double>> v;
      for (const auto& rep : result.repeats) v.push_back(rep.values[l].at(loss));
      result.report.cells.push_back(aggregate(menu[l].name, loss, v));
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Sigma sweep: rows are test thresholds, columns Euclidean plus one LSML fit
// per training threshold. Triplet-violation loss only.

struct SweepTable {
  std::vector<double> sigma_test;
  std::vector<std::string> columns;
  std::vector<std::vector<ReportCell>> cells;  // [row][column]
  // per_repeat[row][column][repeat]
  std::vector<std::vector<std::vector<std::optional<double>>>> per_repeat;
  std::vector<std::vector<std::optional<MahalanobisMetric>>> metrics;  // [column][repeat]
  std::vector<std::string> messages;
  std::string triplet_variant;
};

inline std::string sweep_column_name(double sigma) { return "LSML(sigma=" + format_double(sigma) + ")"; }

inline SweepTable sigma_sweep(const ExperimentConfig& cfg, const LabeledDataset& data,
                              const std::vector<double>& sigma_train_list, const std::vector<double>& sigma_test_list) {
  validate(cfg, data.size());
  if (sigma_train_list.empty() || sigma_test_list.empty()) throw ConfigError("sigma lists must be nonempty");
  for (double s : sigma_train_list) {
    if (s < 0.0) throw ConfigError("sigma must be nonnegative");
  }
  for (double s : sigma_test_list) {
    if (s < 0.0) throw ConfigError("sigma_t must be nonnegative");
  }
  SweepTable table;
  table.sigma_test = sigma_test_list;
  table.triplet_variant = to_string(cfg.triplet_variant);
  table.columns.push_back("Euclidean");
  for (double s : sigma_train_list) table.columns.push_back(sweep_column_name(s));
  const auto rows = sigma_test_list.size();
  const auto cols = table.columns.size();
  table.per_repeat.assign(rows, std::vector<std::vector<std::optional<double>>>(
                                    cols, std::vector<std::optional<double>>(cfg.n_repeats)));
  table.metrics.assign(cols, std::vector<std::optional<MahalanobisMetric>>(cfg.n_repeats));
  std::vector<std::vector<std::string>> messages(cfg.n_repeats);

  for_each_repeat(cfg.n_repeats, cfg.threads, [&](std::size_t r) {
    const auto fold = make_fold(data, cfg, r);
    std::vector<std::optional<MahalanobisMetric>> metrics;
    metrics.emplace_back(euclidean_baseline(fold.train.dim()));
    for (double s : sigma_train_list) {
      try {
        metrics.emplace_back(fit_learner({sweep_column_name(s), LearnerKind::lsml, s}, fold.train, cfg, r).metric);
      } catch (const Error& e) {
        metrics.emplace_back(std::nullopt);
        messages[r].push_back("repeat " + std::to_string(r) + " " + sweep_column_name(s) + " failed: " + e.what());
      }
    }
    for (std::size_t c = 0; c < cols; ++c) table.metrics[c][r] = metrics[c];
    for (std::size_t row = 0; row < rows; ++row) {
      const auto test_triplets = build_triplets(fold.test, sigma_test_list[row], cfg.triplet_variant);
      if (test_triplets.empty()) {
        messages[r].push_back("repeat " + std::to_string(r) + " sigma_t=" + format_double(sigma_test_list[row]) +
                              ": no test triplets");
        continue;
      }
      for (std::size_t c = 0; c < cols; ++c) {
        if (metrics[c]) table.per_repeat[row][c][r] = triplet_violation_loss(*metrics[c], fold.test, test_triplets);
      }
    }
  });

  for (auto& m : messages) table.messages.insert(table.messages.end(), m.begin(), m.end());
  table.cells.resize(rows);
  for (std::size_t row = 0; row < rows; ++row) {
    for (std::size_t c = 0; c < cols; ++c) {
      table.cells[row].push_back(aggregate(table.columns[c], kTripletLoss, table.per_repeat[row][c]));
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Output

inline void write_report_csv(std::ostream& os, const EvalReport& report) {
  os << "metric,loss,mean,std,n\n";
  for (const auto& c : report.cells) {
    os << csv::escape(c.metric) << ',' << c.loss << ',';
    if (c.available()) {
      os << format_double(c.mean) << ',' << format_double(c.dispersion);
    } else {
      os << "NA,NA";
    }
    os << ',' << c.n_repeats << '\n';
  }
}

inline std::string format_cell(const ReportCell& c, int precision = 3) {
  if (!c.available()) return "N/A";
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << c.mean << " +/- " << c.dispersion;
  return os.str();
}

// Rows = metrics, columns = losses; dispersion is the sample standard deviation.
inline void write_report_text(std::ostream& os, const EvalReport& report) {
  std::vector<std::string> metrics;
  for (const auto& c : report.cells) {
    if (std::find(metrics.begin(), metrics.end(), c.metric) == metrics.end()) metrics.push_back(c.metric);
  }
  os << "labels: " << report.label_mode << "   triplet variant: " << report.triplet_variant << '\n';
  os << "mean +/- sample std across repeats\n\n";
  os << std::left << std::setw(14) << "metric";
  for (const auto& l : loss_names()) os << std::setw(22) << l;
  os << '\n';
  for (const auto& m : metrics) {
    os << std::setw(14) << m;
    for (const auto& l : loss_names()) {
      const auto* c = report.find(m, l);
      os << std::setw(22) << (c ? format_cell(*c) : std::string("N/A"));
    }
    os << '\n';
  }
}

inline void write_sweep_csv(std::ostream& os, const SweepTable& t) {
  os << "sigma_t,metric,loss,mean,std,n\n";
  for (std::size_t row = 0; row < t.sigma_test.size(); ++row) {
    for (const auto& c : t.cells[row]) {
      os << format_double(t.sigma_test[row]) << ',' << csv::escape(c.metric) << ',' << c.loss << ',';
      if (c.available()) {
        os << format_double(c.mean) << ',' << format_double(c.dispersion);
      } else {
        os << "NA,NA";
      }
      os << ',' << c.n_repeats << '\n';
    }
  }
}

inline void write_sweep_text(std::ostream& os, const SweepTable& t) {
  os << "triplet-violation loss, mean +/- sample std across repeats (variant: " << t.triplet_variant << ")\n\n";
  os << std::left << std::setw(10) << "sigma_t";
  for (const auto& c : t.columns) os << std::setw(22) << c;
  os << '\n';
  for (std::size_t row = 0; row < t.sigma_test.size(); ++row) {
    os << std::setw(10) << format_double(t.sigma_test[row]);
    for (const auto& c : t.cells[row]) os << std::setw(22) << format_cell(c);
    os << '\n';
  }
}

}  // namespace fairmetric
