#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fairmetric/constraints.hpp"
#include "fairmetric/core.hpp"
#include "fairmetric/numerics.hpp"

namespace fairmetric {

struct OptimizerTrace {
  int iterations = 0;
  std::vector<double> objective_values;  // one per accepted step
  bool converged = false;
  int projection_count = 0;
  bool maximizing = false;
};

struct FitResult {
  MahalanobisMetric metric;
  OptimizerTrace trace;
  std::vector<std::string> warnings;
};

namespace detail {

inline constexpr double kArmijo = 1e-4;
inline constexpr double kMinStep = 1e-14;
inline constexpr double kDegenerateTrace = 1e-8;

// sum_p w_p * u_p u_p^T for the rows u_p of `rows`.
inline Matrix weighted_outer_sum(const Matrix& rows, const Vector& w) {
  return numerics::symmetrize(rows.transpose() * w.asDiagonal() * rows);
}

// Row p holds (u_p)^T; returns u_p^T M u_p for every p.
inline Vector quadratic_forms(const Matrix& rows, const Matrix& m) {
  return (rows * m).cwiseProduct(rows).rowwise().sum();
}

inline Matrix difference_rows(const Matrix& x, const std::vector<IndexPair>& pairs) {
  Matrix out(static_cast<Eigen::Index>(pairs.size()), x.cols());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    out.row(static_cast<Eigen::Index>(p)) =
        x.row(static_cast<Eigen::Index>(pairs[p].first)) - x.row(static_cast<Eigen::Index>(pairs[p].second));
  }
  return out;
}

inline Matrix guard_degenerate(const Matrix& m, std::vector<std::string>& warnings) {
  const double tr = m.trace();
  if (tr < kDegenerateTrace) {
    warnings.emplace_back("learned metric collapsed (trace " + std::to_string(tr) + "); rescaled to trace d");
    if (tr > 0.0) return m * (static_cast<double>(m.rows()) / tr);
    return Matrix::Identity(m.rows(), m.cols());
  }
  return m;
}

// Projected gradient descent with Armijo backtracking on the projected step.
// `project` maps an arbitrary symmetric matrix back onto the feasible set.
template <class Objective, class Project>
Matrix projected_descent(const Objective& objective, Matrix m, Project project, int max_iter, double tol,
                         OptimizerTrace& trace) {
  double value = objective.value(m);
  double step = 1.0;
  for (int it = 0; it < max_iter; ++it) {
    const Matrix grad = objective.gradient(m);
    if (grad.norm() == 0.0) {
      trace.converged = true;
      return m;
    }
    bool accepted = false;
    Matrix candidate;
    double candidate_value = value;
    while (step >= kMinStep) {
      candidate = project(numerics::symmetrize(m - step * grad));
      ++trace.projection_count;
      candidate_value = objective.value(candidate);
      const double decrease = (grad.array() * (m - candidate).array()).sum();
      if (std::isfinite(candidate_value) && candidate_value <= value - kArmijo * decrease &&
          candidate_value <= value) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      trace.converged = true;  // no descent direction left at machine resolution
      return m;
    }
    const double rel = (value - candidate_value) / std::max(std::abs(value), 1e-300);
    m = std::move(candidate);
    value = candidate_value;
    ++trace.iterations;
    trace.objective_values.push_back(value);
    step = std::min(step * 2.0, 1e6);
    if (rel < tol) {
      trace.converged = true;
      return m;
    }
  }
  return m;
}

}  // namespace detail

inline MahalanobisMetric euclidean_baseline(std::size_t d) {
  if (d == 0) throw ConfigError("euclidean_baseline needs d >= 1");
  return MahalanobisMetric::identity(d);
}

struct PrecisionResult {
  MahalanobisMetric metric;
  bool condition_warning = false;  // covariance was singular and got floored
  double condition = 0.0;
};

// Inverse of the training-feature covariance.
inline PrecisionResult precision_baseline(const LabeledDataset& train) {
  if (train.size() < 2) throw ConfigError("precision baseline needs at least 2 training rows");
  const auto inv = numerics::safe_inverse(numerics::covariance(train.features()));
  // floored eigenvalues are positive, so the inverse is PSD by construction
  return {MahalanobisMetric::from_eigen(inv.values, inv.vectors), inv.floored, inv.condition};
}

// ---------------------------------------------------------------------------
// LSML: alpha * (tr M - logdet M - d) + sum over triplets of
// max(0, d_M(a, b) - d_M(a, c))^2.

class LsmlObjective {
 public:
  LsmlObjective(const Matrix& x, const TripletSet& triplets, double alpha) : alpha_(alpha) {
    if (triplets.empty()) throw ConstraintError("LSML needs a nonempty triplet set");
    if (!(alpha > 0.0)) throw ConfigError("LSML alpha must be positive");
    const auto m = static_cast<Eigen::Index>(triplets.size());
    near_.resize(m, x.cols());
    far_.resize(m, x.cols());
    for (Eigen::Index p = 0; p < m; ++p) {
      const auto& t = triplets.triplets[static_cast<std::size_t>(p)];
      if (std::max({t.a, t.b, t.c}) >= static_cast<Index>(x.rows())) {
        throw ConfigError("triplet index out of range for training data");
      }
      near_.row(p) = x.row(static_cast<Eigen::Index>(t.a)) - x.row(static_cast<Eigen::Index>(t.b));
      far_.row(p) = x.row(static_cast<Eigen::Index>(t.a)) - x.row(static_cast<Eigen::Index>(t.c));
    }
  }

  double regularizer(const Matrix& m) const {
    auto e = numerics::eigen_symmetric(m);
    if (!(e.values.minCoeff() > 0.0)) return std::numeric_limits<double>::infinity();
    return m.trace() - e.values.array().log().sum() - static_cast<double>(m.rows());
  }

  double residual_loss(const Matrix& m) const {
    const Vector dn = detail::quadratic_forms(near_, m).cwiseMax(0.0).cwiseSqrt();
    const Vector df = detail::quadratic_forms(far_, m).cwiseMax(0.0).cwiseSqrt();
    return (dn - df).cwiseMax(0.0).squaredNorm();
  }

  double value(const Matrix& m) const {
    const double reg = regularizer(m);
    if (!std::isfinite(reg)) return reg;
    return alpha_ * reg + residual_loss(m);
  }

  Matrix gradient(const Matrix& m) const {
    const Vector dn = detail::quadratic_forms(near_, m).cwiseMax(0.0).cwiseSqrt();
    const Vector df = detail::quadratic_forms(far_, m).cwiseMax(0.0).cwiseSqrt();
    const Vector r = (dn - df).cwiseMax(0.0);
    // d/dM of d(u) = u u^T / (2 d(u)); the residual is squared, giving r / d.
    Vector wn = Vector::Zero(r.size());
    Vector wf = Vector::Zero(r.size());
    for (Eigen::Index p = 0; p < r.size(); ++p) {
      if (r[p] <= 0.0) continue;
      wn[p] = r[p] / dn[p];
      if (df[p] > 0.0) wf[p] = r[p] / df[p];
    }
    const auto inv = numerics::safe_inverse(m);
    const Matrix eye = Matrix::Identity(m.rows(), m.cols());
    return numerics::symmetrize(alpha_ * (eye - inv.inverse) + detail::weighted_outer_sum(near_, wn) -
                                detail::weighted_outer_sum(far_, wf));
  }

 private:
  double alpha_;
  Matrix near_;
  Matrix far_;
};

inline FitResult fit_lsml(const LabeledDataset& train, const TripletSet& triplets, const LsmlOptions& opts = {}) {
  const LsmlObjective objective(train.features(), triplets, opts.alpha);
  OptimizerTrace trace;
  Matrix m = Matrix::Identity(static_cast<Eigen::Index>(train.dim()), static_cast<Eigen::Index>(train.dim()));
  m = detail::projected_descent(
      objective, m, [](const Matrix& a) { return numerics::psd_project_relative(a); }, opts.max_iter, opts.tol,
      trace);
  std::vector<std::string> warnings;
  m = detail::guard_degenerate(m, warnings);
  return {MahalanobisMetric(m), std::move(trace), std::move(warnings)};
}

// ---------------------------------------------------------------------------
// LMNN: (1 - mu) * sum_{i, j in targets(i)} d2(i, j)
//     + mu * sum_{i, j in targets(i), l : y_l != y_i} [1 + d2(i, j) - d2(i, l)]_+

class LmnnObjective {
 public:
  LmnnObjective(const Matrix& x, const std::vector<int>& labels, int k_targets, double mu, bool strict)
      : x_(x), labels_(labels), mu_(mu) {
    if (k_targets < 1) throw ConfigError("LMNN k_targets must be >= 1");
    if (!(mu >= 0.0 && mu <= 1.0)) throw ConfigError("LMNN mu must lie in [0, 1]");
    const auto n = labels.size();
    if (n != static_cast<std::size_t>(x.rows()) || n < 2) throw ConfigError("LMNN needs >= 2 labeled rows");

    std::map<int, std::vector<Index>> classes;
    for (Index i = 0; i < n; ++i) classes[labels[i]].push_back(i);
    for (const auto& [label, members] : classes) {
      if (members.size() == 1) {
        if (strict) {
          throw ConstraintError("LMNN: rating class " + std::to_string(label) + " has a single member");
        }
        warnings_.push_back("LMNN: rating class " + std::to_string(label) + " has one member; skipped");
      } else if (members.size() <= static_cast<std::size_t>(k_targets)) {
        warnings_.push_back("LMNN: rating class " + std::to_string(label) + " has " +
                            std::to_string(members.size()) + " members; k_targets reduced");
      }
    }

    // Target neighbours under the Euclidean metric, ties by lower index.
    targets_.resize(n);
    for (Index i = 0; i < n; ++i) {
      const auto& same = classes[labels[i]];
      std::vector<std::pair<double, Index>> cand;
      for (Index j : same) {
        if (j != i) cand.emplace_back((x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(j))).squaredNorm(), j);
      }
      std::sort(cand.begin(), cand.end());
      const auto k = std::min(cand.size(), static_cast<std::size_t>(k_targets));
      for (std::size_t t = 0; t < k; ++t) targets_[i].push_back(cand[t].second);
    }
    if (std::all_of(targets_.begin(), targets_.end(), [](const auto& t) { return t.empty(); })) {
      throw ConstraintError("LMNN: no instance has a same-rating neighbour");
    }
  }

  const std::vector<std::vector<Index>>& targets() const noexcept { return targets_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  double value(const Matrix& m) const {
    const Matrix d2 = squared_distances(m);
    double pull = 0.0;
    double push = 0.0;
    for_each_term(d2, [&](Index i, Index j) { pull += d2(idx(i), idx(j)); },
                  [&](Index, Index, Index, double h) { push += h; });
    return (1.0 - mu_) * pull + mu_ * push;
  }

  // Hinge part only; zero means no impostor inside any target margin.
  double push_term(const Matrix& m) const {
    const Matrix d2 = squared_distances(m);
    double push = 0.0;
    for_each_term(d2, [](Index, Index) {}, [&](Index, Index, Index, double h) { push += h; });
    return push;
  }

  Matrix gradient(const Matrix& m) const {
    const Matrix d2 = squared_distances(m);
    const auto n = static_cast<Eigen::Index>(labels_.size());
    Matrix w = Matrix::Zero(n, n);  // coefficient of (x_i - x_j)(x_i - x_j)^T
    for_each_term(
        d2, [&](Index i, Index j) { w(idx(i), idx(j)) += 1.0 - mu_; },
        [&](Index i, Index j, Index l, double) {
          w(idx(i), idx(j)) += mu_;
          w(idx(i), idx(l)) -= mu_;
        });
    const Matrix ws = w + w.transpose();
    const Matrix lap = Matrix(ws.rowwise().sum().asDiagonal()) - ws;
    // sum_{i,j} w_ij (x_i - x_j)(x_i - x_j)^T = X^T (D - W_sym) X
    return numerics::symmetrize(x_.transpose() * lap * x_);
  }

 private:
  static Eigen::Index idx(Index i) { return static_cast<Eigen::Index>(i); }

  Matrix squared_distances(const Matrix& m) const {
    const Matrix g = x_ * m * x_.transpose();
    const Vector diag = g.diagonal();
    Matrix d2 = (-2.0 * g).colwise() + diag;
    d2.rowwise() += diag.transpose();
    return d2.cwiseMax(0.0);
  }

  template <class Pull, class Push>
  void for_each_term(const Matrix& d2, Pull&& pull, Push&& push) const {
    const Index n = labels_.size();
    for (Index i = 0; i < n; ++i) {
      for (Index j : targets_[i]) {
        pull(i, j);
        const double base = 1.0 + d2(idx(i), idx(j));
        for (Index l = 0; l < n; ++l) {
          if (labels_[l] == labels_[i]) continue;
          const double h = base - d2(idx(i), idx(l));
          if (h > 0.0) push(i, j, l, h);
        }
      }
    }
  }

  Matrix x_;
  std::vector<int> labels_;
  double mu_;
  std::vector<std::vector<Index>> targets_;
  std::vector<std::string> warnings_;
};

inline FitResult fit_lmnn(const LabeledDataset& train, const LmnnOptions& opts = {}) {
  const LmnnObjective objective(train.features(), train.labels(), opts.k_targets, opts.mu, opts.strict);
  OptimizerTrace trace;
  Matrix m = Matrix::Identity(static_cast<Eigen::Index>(train.dim()), static_cast<Eigen::Index>(train.dim()));
  m = detail::projected_descent(
      objective, m, [](const Matrix& a) { return numerics::psd_project(a); }, opts.max_iter, opts.tol, trace);
  std::vector<std::string> warnings = objective.warnings();
  m = detail::guard_degenerate(m, warnings);
  return {MahalanobisMetric(m), std::move(trace), std::move(warnings)};
}

// ---------------------------------------------------------------------------
// MMC: minimize sum_similar d2_M subject to sum_dissimilar d_M >= 1, M PSD.

// Diagonal form: g(w) = sum_similar d2_w - log(sum_dissimilar d_w), w >= 0.
class MmcDiagonalObjective {
 public:
  MmcDiagonalObjective(const Matrix& x, const PairSets& pairs) {
    if (pairs.similar.empty()) throw ConstraintError("MMC needs at least one similar pair");
    if (pairs.dissimilar.empty()) throw ConstraintError("MMC needs at least one dissimilar pair");
    similar_sq_ = detail::difference_rows(x, pairs.similar).cwiseAbs2().colwise().sum().transpose();
    dissimilar_sq_ = detail::difference_rows(x, pairs.dissimilar).cwiseAbs2();
  }

  double dissimilar_sum(const Vector& w) const { return (dissimilar_sq_ * w).cwiseMax(0.0).cwiseSqrt().sum(); }

  double value(const Vector& w) const {
    const double s = dissimilar_sum(w);
    if (!(s > 0.0)) return std::numeric_limits<double>::infinity();
    return similar_sq_.dot(w) - std::log(s);
  }

  Vector gradient(const Vector& w) const {
    const Vector d = (dissimilar_sq_ * w).cwiseMax(0.0).cwiseSqrt();
    const double s = d.sum();
    Vector inv = Vector::Zero(d.size());
    for (Eigen::Index p = 0; p < d.size(); ++p) {
      if (d[p] > 0.0) inv[p] = 0.5 / d[p];
    }
    return similar_sq_ - dissimilar_sq_.transpose() * inv / s;
  }

 private:
  Vector similar_sq_;
  Matrix dissimilar_sq_;
};

// Full form, solved as: maximize sum_dissimilar d_M subject to
// sum_similar d2_M <= 1 and M PSD, then rescaled so sum_dissimilar d_M = 1.
class MmcFullObjective {
 public:
  MmcFullObjective(const Matrix& x, const PairSets& pairs) {
    if (pairs.similar.empty()) throw ConstraintError("MMC needs at least one similar pair");
    if (pairs.dissimilar.empty()) throw ConstraintError("MMC needs at least one dissimilar pair");
    const Matrix s = detail::difference_rows(x, pairs.similar);
    similar_ = numerics::symmetrize(s.transpose() * s);
    dissimilar_ = detail::difference_rows(x, pairs.dissimilar);
  }

  const Matrix& similar_scatter() const noexcept { return similar_; }

  double dissimilar_sum(const Matrix& m) const {
    return detail::quadratic_forms(dissimilar_, m).cwiseMax(0.0).cwiseSqrt().sum();
  }

  double similar_sum(const Matrix& m) const { return (similar_.array() * m.array()).sum(); }

  Matrix gradient(const Matrix& m) const {
    const Vector d = detail::quadratic_forms(dissimilar_, m).cwiseMax(0.0).cwiseSqrt();
    Vector w = Vector::Zero(d.size());
    for (Eigen::Index p = 0; p < d.size(); ++p) {
      if (d[p] > 0.0) w[p] = 0.5 / d[p];
    }
    return detail::weighted_outer_sum(dissimilar_, w);
  }

  // Alternating projections onto {<M, S> <= 1} and the PSD cone.
  Matrix project(Matrix m, int max_cycles, int& projections) const {
    const double s_norm2 = similar_.squaredNorm();
    for (int cycle = 0; cycle < max_cycles; ++cycle) {
      const double excess = similar_sum(m) - 1.0;
      if (excess > 0.0 && s_norm2 > 0.0) m -= (excess / s_norm2) * similar_;
      m = numerics::psd_project(numerics::symmetrize(m));
      ++projections;
      if (similar_sum(m) <= 1.0 + 1e-9) break;
    }
    return m;
  }

 private:
  Matrix similar_;
  Matrix dissimilar_;
};

inline FitResult fit_mmc_diagonal(const LabeledDataset& train, const PairSets& pairs, const MmcOptions& opts) {
  const MmcDiagonalObjective objective(train.features(), pairs);
  OptimizerTrace trace;
  Vector w = Vector::Ones(static_cast<Eigen::Index>(train.dim()));
  double value = objective.value(w);
  double step = 1.0;
  for (int it = 0; it < opts.max_iter; ++it) {
    const Vector grad = objective.gradient(w);
    bool accepted = false;
    Vector candidate;
    double candidate_value = value;
    while (step >= detail::kMinStep) {
      candidate = (w - step * grad).cwiseMax(0.0);
      ++trace.projection_count;
      candidate_value = objective.value(candidate);
      if (std::isfinite(candidate_value) &&
          candidate_value <= value - detail::kArmijo * grad.dot(w - candidate) && candidate_value <= value) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      trace.converged = true;
      break;
    }
    const double rel = (value - candidate_value) / std::max(std::abs(value), 1e-300);
    w = candidate;
    value = candidate_value;
    ++trace.iterations;
    trace.objective_values.push_back(value);
    step = std::min(step * 2.0, 1e6);
    if (rel < opts.tol) {
      trace.converged = true;
      break;
    }
  }
  std::vector<std::string> warnings;
  const double s = objective.dissimilar_sum(w);
  if (!(s > 0.0)) throw NumericalError("MMC (diagonal): dissimilar pairs collapsed to zero distance");
  w /= s * s;
  return {MahalanobisMetric::diagonal(w), std::move(trace), std::move(warnings)};
}

inline FitResult fit_mmc_full(const LabeledDataset& train, const PairSets& pairs, const MmcOptions& opts) {
  const MmcFullObjective objective(train.features(), pairs);
  OptimizerTrace trace;
  trace.maximizing = true;
  const auto d = static_cast<Eigen::Index>(train.dim());
  Matrix m = Matrix::Identity(d, d);
  const double s0 = objective.similar_sum(m);
  if (s0 > 0.0) m /= s0;
  double value = objective.dissimilar_sum(m);
  double step = 0.1 * std::max(m.norm(), 1e-12);
  for (int it = 0; it < opts.max_iter; ++it) {
    const Matrix grad = objective.gradient(m);
    const double gnorm = grad.norm();
    if (gnorm == 0.0) {
      trace.converged = true;
      break;
    }
    bool accepted = false;
    Matrix candidate;
    double candidate_value = value;
    while (step >= detail::kMinStep * std::max(m.norm(), 1.0)) {
      candidate = objective.project(m + (step / gnorm) * grad, opts.max_projection_cycles, trace.projection_count);
      candidate_value = objective.dissimilar_sum(candidate);
      if (candidate_value > value) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      trace.converged = true;
      break;
    }
    const double rel = (candidate_value - value) / std::max(std::abs(value), 1e-300);
    m = std::move(candidate);
    value = candidate_value;
    ++trace.iterations;
    trace.objective_values.push_back(value);
    step *= 1.5;
    if (rel < opts.tol) {
      trace.converged = true;
      break;
    }
  }
  std::vector<std::string> warnings;
  const double s = objective.dissimilar_sum(m);
  if (!(s > 0.0)) throw NumericalError("MMC (full): dissimilar pairs collapsed to zero distance");
  m /= s * s;
  return {MahalanobisMetric(m), std::move(trace), std::move(warnings)};
}

inline FitResult fit_mmc(const LabeledDataset& train, const PairSets& pairs, const MmcOptions& opts = {}) {
  return opts.form == MetricForm::diagonal ? fit_mmc_diagonal(train, pairs, opts) : fit_mmc_full(train, pairs, opts);
}

// Sum of d_M over the dissimilar pairs; 1 after a successful MMC fit.
inline double dissimilar_distance_sum(const MahalanobisMetric& metric, const LabeledDataset& data,
                                      const PairSets& pairs) {
  double s = 0.0;
  for (const auto& [i, j] : pairs.dissimilar) s += distance(metric, data.row(i), data.row(j));
  return s;
}

// ---------------------------------------------------------------------------
// Plain-text matrix format: "d", then d rows of d shortest round-trip decimals.

inline void write_metric(std::ostream& os, const MahalanobisMetric& metric) {
  const auto& m = metric.matrix();
  os << m.rows() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ' ';
      os << format_double(m(i, j));
    }
    os << '\n';
  }
}

inline MahalanobisMetric read_metric(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw IngestionError("metric file: missing dimension line");
  long d = 0;
  try {
    d = std::stol(line);
  } catch (const std::exception&) {
    throw IngestionError("metric file: bad dimension line '" + line + "'");
  }
  if (d <= 0) throw IngestionError("metric file: dimension must be positive");
  Matrix m(d, d);
  for (long i = 0; i < d; ++i) {
    if (!std::getline(is, line)) throw IngestionError("metric file: missing row " + std::to_string(i + 1));
    std::istringstream row(line);
    for (long j = 0; j < d; ++j) {
      std::string tok;
      if (!(row >> tok)) throw IngestionError("metric file: row " + std::to_string(i + 1) + " too short");
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw IngestionError("metric file: bad value '" + tok + "' in row " + std::to_string(i + 1));
      }
      m(i, j) = v;
    }
  }
  return MahalanobisMetric(m);
}

}  // namespace fairmetric
