#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "fairmetric/core.hpp"
#include "oracles.hpp"

namespace testutil {

using fairmetric::LabeledDataset;
using fairmetric::Matrix;
using fairmetric::RatingScale;
using fairmetric::Vector;

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  }
  return m;
}

inline Matrix random_spd(std::mt19937_64& rng, Eigen::Index d, double ridge = 0.5) {
  const Matrix a = random_matrix(rng, d, d);
  return a * a.transpose() + ridge * Matrix::Identity(d, d);
}

inline std::vector<int> random_labels(std::mt19937_64& rng, std::size_t n, int lo, int hi) {
  std::uniform_int_distribution<int> u(lo, hi);
  std::vector<int> y(n);
  for (auto& v : y) v = u(rng);
  return y;
}

inline LabeledDataset random_dataset(std::mt19937_64& rng, std::size_t n, std::size_t d, RatingScale scale = {1, 5}) {
  return {random_matrix(rng, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d)),
          random_labels(rng, n, scale.min, scale.max), scale};
}

inline oracle::Mat to_rows(const Matrix& m) {
  oracle::Mat out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
  }
  return out;
}

inline Matrix from_rows(const oracle::Mat& m) {
  Matrix out(static_cast<Eigen::Index>(m.size()), static_cast<Eigen::Index>(m.size()));
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < m.size(); ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m[i][j];
  }
  return out;
}

// 200 points in d = 6 rated 1..5 by quintile of their distance to a fixed
// anchor under diag(4, 1, 1, 0, 0, 0). The last three axes are pure noise.
inline LabeledDataset anchored_ratings(std::uint64_t seed, std::size_t n = 200) {
  std::mt19937_64 rng(seed);
  const Matrix x = random_matrix(rng, static_cast<Eigen::Index>(n), 6);
  Vector anchor(6);
  anchor << 2.5, 0.0, 0.0, 0.0, 0.0, 0.0;
  Vector w(6);
  w << 4, 1, 1, 0, 0, 0;
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vector u = x.row(static_cast<Eigen::Index>(i)).transpose() - anchor;
    dist[i] = std::sqrt(u.cwiseAbs2().dot(w));
  }
  std::vector<double> sorted = dist;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto rank = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), dist[i]) - sorted.begin());
    labels[i] = 1 + static_cast<int>(5 * rank / n);
  }
  return {x, labels, {1, 5}, {}, "synthetic:anchored"};
}

}  // namespace testutil
