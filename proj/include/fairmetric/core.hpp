#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fairmetric/error.hpp"
#include "fairmetric/numerics.hpp"

namespace fairmetric {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = std::size_t;

struct RatingScale {
  int min = 1;
  int max = 5;

  constexpr bool contains(int v) const noexcept { return v >= min && v <= max; }
  constexpr int span() const noexcept { return max - min; }

  static constexpr RatingScale survey() { return {1, 5}; }
  static constexpr RatingScale compas() { return {1, 10}; }

  friend constexpr bool operator==(const RatingScale&, const RatingScale&) = default;
};

inline void validate(const RatingScale& s) {
  if (!(s.min < s.max)) {
    throw ConfigError("rating scale needs min < max, got [" + std::to_string(s.min) + ", " +
                      std::to_string(s.max) + "]");
  }
}

// Feature rows plus integer ratings. Immutable once built; every factory call
// checks the invariants (finite features, labels inside the scale).
class LabeledDataset {
 public:
  LabeledDataset() = default;

  LabeledDataset(Matrix features, std::vector<int> labels, RatingScale scale,
                 std::vector<std::string> feature_names = {}, std::string source_tag = {},
                 std::vector<std::string> ids = {})
      : features_(std::move(features)),
        labels_(std::move(labels)),
        scale_(scale),
        feature_names_(std::move(feature_names)),
        source_tag_(std::move(source_tag)),
        ids_(std::move(ids)) {
    validate(scale_);
    const auto n = static_cast<std::size_t>(features_.rows());
    if (n == 0 || features_.cols() == 0) {
      throw ConfigError("dataset needs n >= 1 rows and d >= 1 columns");
    }
    if (labels_.size() != n) {
      throw ConfigError("dataset has " + std::to_string(n) + " rows but " +
                        std::to_string(labels_.size()) + " labels");
    }
    if (!features_.allFinite()) {
      throw ConfigError("dataset features contain NaN or inf");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!scale_.contains(labels_[i])) {
        throw ConfigError("label " + std::to_string(labels_[i]) + " at row " + std::to_string(i) +
                          " outside scale [" + std::to_string(scale_.min) + ", " +
                          std::to_string(scale_.max) + "]");
      }
    }
    if (feature_names_.empty()) {
      for (Eigen::Index j = 0; j < features_.cols(); ++j) feature_names_.push_back("f" + std::to_string(j));
    }
    if (feature_names_.size() != static_cast<std::size_t>(features_.cols())) {
      throw ConfigError("feature_names length does not match dimension");
    }
    if (ids_.empty()) {
      for (std::size_t i = 0; i < n; ++i) ids_.push_back(std::to_string(i));
    }
    if (ids_.size() != n) {
      throw ConfigError("ids length does not match row count");
    }
  }

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(features_.cols()); }
  const Matrix& features() const noexcept { return features_; }
  Vector row(std::size_t i) const { return features_.row(static_cast<Eigen::Index>(i)).transpose(); }
  const std::vector<int>& labels() const noexcept { return labels_; }
  int label(std::size_t i) const { return labels_.at(i); }
  RatingScale scale() const noexcept { return scale_; }
  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }
  const std::string& source_tag() const noexcept { return source_tag_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }

  LabeledDataset subset(const std::vector<Index>& rows) const {
    Matrix f(static_cast<Eigen::Index>(rows.size()), features_.cols());
    std::vector<int> l;
    std::vector<std::string> id;
    l.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r] >= size()) throw ConfigError("subset index out of range");
      f.row(static_cast<Eigen::Index>(r)) = features_.row(static_cast<Eigen::Index>(rows[r]));
      l.push_back(labels_[rows[r]]);
      id.push_back(ids_[rows[r]]);
    }
    return {std::move(f), std::move(l), scale_, feature_names_, source_tag_, std::move(id)};
  }

  LabeledDataset with_features(Matrix features) const {
    return {std::move(features), labels_, scale_, feature_names_, source_tag_, ids_};
  }

  LabeledDataset with_labels(std::vector<int> labels, RatingScale scale, std::string tag) const {
    return {features_, std::move(labels), scale, feature_names_, std::move(tag), ids_};
  }

 private:
  Matrix features_;
  std::vector<int> labels_;
  RatingScale scale_;
  std::vector<std::string> feature_names_;
  std::string source_tag_;
  std::vector<std::string> ids_;
};

enum class MetricForm { full, diagonal };

inline constexpr double kPsdTol = 1e-8;

// Symmetric PSD matrix M with d_M(x, y) = sqrt((x - y)^T M (x - y)).
class MahalanobisMetric {
 public:
  explicit MahalanobisMetric(Matrix m, MetricForm form = MetricForm::full) : form_(form) {
    if (m.rows() != m.cols() || m.rows() == 0) {
      throw ConfigError("metric matrix must be square and non-empty");
    }
    if (!m.allFinite()) throw InvariantError("metric matrix has non-finite entries");
    if (!numerics::is_symmetric(m)) {
      throw InvariantError("metric matrix asymmetric by " + std::to_string(numerics::max_asymmetry(m)));
    }
    matrix_ = numerics::symmetrize(m);
    const auto eig = numerics::eigen_symmetric(matrix_);
    const double lmin = eig.values.minCoeff();
    if (lmin < -kPsdTol) {
      throw InvariantError("metric matrix not PSD (min eigenvalue " + std::to_string(lmin) + ")");
    }
    // M = F F^T, with eigenvalues inside the tolerance band clamped to 0
    factor_ = eig.vectors * eig.values.cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }

  // From an eigenbasis that is already known. Keeps the factor accurate when
  // M is badly conditioned; decomposing the assembled matrix again would
  // only resolve its small eigenvalues to about eps * lambda_max.
  static MahalanobisMetric from_eigen(const Vector& values, const Matrix& vectors,
                                      MetricForm form = MetricForm::full) {
    if (vectors.rows() != vectors.cols() || vectors.cols() != values.size() || values.size() == 0) {
      throw ConfigError("metric eigenbasis must be square and match the eigenvalues");
    }
    if (!values.allFinite() || !vectors.allFinite()) throw InvariantError("metric eigenbasis has non-finite entries");
    if (values.minCoeff() < -kPsdTol) {
      throw InvariantError("metric matrix not PSD (min eigenvalue " + std::to_string(values.minCoeff()) + ")");
    }
    const Vector lam = values.cwiseMax(0.0);
    Matrix factor = vectors * lam.cwiseSqrt().asDiagonal();
    return {numerics::symmetrize(vectors * lam.asDiagonal() * vectors.transpose()), std::move(factor), form};
  }

  static MahalanobisMetric identity(std::size_t d) {
    return MahalanobisMetric(Matrix::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)));
  }

  static MahalanobisMetric diagonal(const Vector& w) {
    return MahalanobisMetric(Matrix(w.asDiagonal()), MetricForm::diagonal);
  }

  std::size_t dim() const noexcept { return static_cast<std::size_t>(matrix_.rows()); }
  const Matrix& matrix() const noexcept { return matrix_; }
  const Matrix& factor() const noexcept { return factor_; }

  // Rows mapped so that Euclidean distance between them equals d_M.
  Matrix transform(const Matrix& rows) const {
    if (static_cast<std::size_t>(rows.cols()) != dim()) throw ConfigError("transform: dimension mismatch");
    return rows * factor_;
  }
  MetricForm form() const noexcept { return form_; }

  MahalanobisMetric scaled(double t) const {
    if (!(t > 0.0)) throw ConfigError("metric scale factor must be positive");
    return {t * matrix_, std::sqrt(t) * factor_, form_};
  }

 private:
  MahalanobisMetric(Matrix m, Matrix factor, MetricForm form)
      : matrix_(std::move(m)), factor_(std::move(factor)), form_(form) {}

  Matrix matrix_;
  Matrix factor_;
  MetricForm form_;
};

// (x-y)^T M (x-y), evaluated as |F^T (x-y)|^2. A sum of squares cannot go
// negative, and it stays accurate when M is badly conditioned (a floored
// precision matrix has eigenvalues ~1e10 apart; the plain quadratic form
// then loses about six digits to cancellation).
inline double squared_distance(const MahalanobisMetric& metric, const Eigen::Ref<const Vector>& x,
                               const Eigen::Ref<const Vector>& y) {
  if (static_cast<std::size_t>(x.size()) != metric.dim() || static_cast<std::size_t>(y.size()) != metric.dim()) {
    throw ConfigError("distance: dimension mismatch (metric d=" + std::to_string(metric.dim()) +
                      ", x=" + std::to_string(x.size()) + ", y=" + std::to_string(y.size()) + ")");
  }
  return (metric.factor().transpose() * (x - y)).squaredNorm();
}

inline double distance(const MahalanobisMetric& metric, const Eigen::Ref<const Vector>& x,
                       const Eigen::Ref<const Vector>& y) {
  return std::sqrt(squared_distance(metric, x, y));
}

// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw NumericalError("cannot format value");
  return std::string(buf, ptr);
}

struct Triplet {
  Index a = 0;
  Index b = 0;
  Index c = 0;

  friend constexpr auto operator<=>(const Triplet&, const Triplet&) = default;
};

enum class TripletVariant { literal, symmetric };

inline std::string to_string(TripletVariant v) { return v == TripletVariant::literal ? "literal" : "symmetric"; }

inline TripletVariant parse_triplet_variant(const std::string& s) {
  if (s == "literal") return TripletVariant::literal;
  if (s == "symmetric") return TripletVariant::symmetric;
  throw ConfigError("unknown triplet variant '" + s + "' (expected literal|symmetric)");
}

struct TripletSet {
  std::vector<Triplet> triplets;
  double sigma = 0.0;
  TripletVariant variant = TripletVariant::literal;

  std::size_t size() const noexcept { return triplets.size(); }
  bool empty() const noexcept { return triplets.empty(); }
};

using IndexPair = std::pair<Index, Index>;

// Unordered pairs stored with first < second.
struct PairSets {
  std::vector<IndexPair> similar;
  std::vector<IndexPair> dissimilar;
};

struct LsmlOptions {
  double alpha = 0.01;
  int max_iter = 1000;
  double tol = 1e-6;
};

struct LmnnOptions {
  int k_targets = 3;
  double mu = 0.5;
  int max_iter = 500;
  double tol = 1e-6;
  bool strict = false;
};

struct MmcOptions {
  MetricForm form = MetricForm::full;
  int max_iter = 500;
  double tol = 1e-6;
  int max_projection_cycles = 100;
};

struct ExperimentConfig {
  std::size_t train_size = 140;
  std::size_t test_size = 60;
  std::size_t n_repeats = 10;
  std::size_t k_neighbors = 5;
  double sigma_train = 0.0;
  double sigma_test = 0.0;
  double alpha = 0.01;
  std::size_t triplet_subsample = 5000;
  std::uint64_t rng_seed = 0;
  TripletVariant triplet_variant = TripletVariant::literal;
  unsigned threads = 1;
  LsmlOptions lsml{};
  LmnnOptions lmnn{};
  MmcOptions mmc{};
};

inline void validate(const ExperimentConfig& c, std::size_t n) {
  if (c.train_size == 0 || c.test_size == 0 || c.n_repeats == 0 || c.k_neighbors == 0) {
    throw ConfigError("experiment counts must all be positive");
  }
  if (c.train_size + c.test_size > n) {
    throw ConfigError("train_size + test_size = " + std::to_string(c.train_size + c.test_size) +
                      " exceeds dataset size " + std::to_string(n));
  }
  if (!(c.alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (c.sigma_train < 0.0 || c.sigma_test < 0.0) throw ConfigError("sigma must be nonnegative");
  if (c.k_neighbors > c.train_size) throw ConfigError("k_neighbors exceeds train_size");
  if (c.triplet_subsample == 0) throw ConfigError("triplet_subsample must be positive");
}

// Mean and sample standard deviation of one (metric, loss) cell across repeats.
struct ReportCell {
  std::string metric;
  std::string loss;
  double mean = 0.0;
  double dispersion = 0.0;  // sample standard deviation; 0 when n < 2
  std::size_t n_repeats = 0;  // repeats that produced a value
  bool available() const noexcept { return n_repeats > 0; }
};

struct EvalReport {
  std::vector<ReportCell> cells;
  std::string label_mode;
  std::string triplet_variant;

  const ReportCell* find(const std::string& metric, const std::string& loss) const {
    for (const auto& c : cells) {
      if (c.metric == metric && c.loss == loss) return &c;
    }
    return nullptr;
  }
};

// Aggregates in index order so the result is bit-stable.
inline ReportCell aggregate(std::string metric, std::string loss, const std::vector<std::optional<double>>& values) {
  ReportCell cell{std::move(metric), std::move(loss)};
  double sum = 0.0;
  for (const auto& v : values) {
    if (v) {
      sum += *v;
      ++cell.n_repeats;
    }
  }
  if (cell.n_repeats == 0) return cell;
  cell.mean = sum / static_cast<double>(cell.n_repeats);
  if (cell.n_repeats > 1) {
    double ss = 0.0;
    for (const auto& v : values) {
      if (v) ss += (*v - cell.mean) * (*v - cell.mean);
    }
    cell.dispersion = std::sqrt(ss / static_cast<double>(cell.n_repeats - 1));
  }
  return cell;
}

}  // namespace fairmetric
