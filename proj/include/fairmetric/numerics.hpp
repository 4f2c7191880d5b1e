#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

#include "fairmetric/error.hpp"

namespace fairmetric::numerics {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kSymmetryTol = 1e-9;
inline constexpr double kRelativeEigenFloor = 1e-10;

inline double max_asymmetry(const Matrix& a) {
  if (a.rows() != a.cols()) {
    throw ConfigError("matrix is not square");
  }
  return (a - a.transpose()).cwiseAbs().maxCoeff();
}

inline bool is_symmetric(const Matrix& a, double tol = kSymmetryTol) {
  return a.rows() == a.cols() && (a.rows() == 0 || max_asymmetry(a) <= tol);
}

inline void require_symmetric(const Matrix& a, const char* who) {
  if (!is_symmetric(a)) {
    throw InvariantError(std::string(who) + ": input is not symmetric (max asymmetry " +
                         std::to_string(a.rows() == a.cols() ? max_asymmetry(a) : -1.0) + ")");
  }
}

inline Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

// Eigendecomposition of a symmetric matrix; eigenvalues ascending.
struct SymmetricEigen {
  Vector values;
  Matrix vectors;
};

inline SymmetricEigen eigen_symmetric(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetrize(a));
  if (solver.info() != Eigen::Success) {
    throw NumericalError("symmetric eigendecomposition failed");
  }
  return {solver.eigenvalues(), solver.eigenvectors()};
}

inline Matrix reconstruct(const SymmetricEigen& e, const Vector& values) {
  return symmetrize(e.vectors * values.asDiagonal() * e.vectors.transpose());
}

inline double min_eigenvalue(const Matrix& a) {
  if (a.rows() == 0) return 0.0;
  return eigen_symmetric(a).values.minCoeff();
}

// Frobenius-nearest matrix whose eigenvalues are all >= floor (floor = 0 gives
// the PSD cone projection).
inline Matrix psd_project(const Matrix& a, double floor = 0.0) {
  require_symmetric(a, "psd_project");
  auto e = eigen_symmetric(a);
  Vector clamped = e.values.cwiseMax(floor);
  return reconstruct(e, clamped);
}

// PSD projection that also lifts eigenvalues to rel_floor * lambda_max, which
// keeps log-determinants finite.
inline Matrix psd_project_relative(const Matrix& a, double rel_floor = kRelativeEigenFloor) {
  require_symmetric(a, "psd_project_relative");
  auto e = eigen_symmetric(a);
  const double top = e.values.size() ? e.values.maxCoeff() : 0.0;
  const double floor = top > 0.0 ? rel_floor * top : 0.0;
  Vector clamped = e.values.cwiseMax(floor);
  return reconstruct(e, clamped);
}

struct InverseResult {
  Matrix inverse;
  bool floored = false;  // some eigenvalue was raised to the floor
  double condition = 0.0;  // lambda_max / lambda_min after flooring
  // eigenbasis of the inverse: inverse = vectors * diag(values) * vectors^T
  Vector values;
  Matrix vectors;
};

inline double default_floor(const Vector& eigenvalues) {
  const double top = eigenvalues.size() ? eigenvalues.maxCoeff() : 0.0;
  return top > 0.0 ? kRelativeEigenFloor * top : kRelativeEigenFloor;
}

// Inverse through the eigenbasis. Eigenvalues below `floor` are raised to it,
// so the call never fails. A negative floor selects 1e-10 * lambda_max.
inline InverseResult safe_inverse(const Matrix& a, double floor = -1.0) {
  require_symmetric(a, "safe_inverse");
  auto e = eigen_symmetric(a);
  const double f = floor < 0.0 ? default_floor(e.values) : floor;
  InverseResult out;
  Vector lam = e.values;
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    if (lam[i] < f) {
      lam[i] = f;
      out.floored = true;
    }
  }
  out.condition = lam.size() ? lam.maxCoeff() / lam.minCoeff() : 1.0;
  out.values = lam.cwiseInverse();
  out.inverse = reconstruct(e, out.values);
  out.vectors = std::move(e.vectors);
  return out;
}

inline double logdet(const Matrix& a) {
  require_symmetric(a, "logdet");
  auto e = eigen_symmetric(a);
  if (e.values.size() == 0) return 0.0;
  if (!(e.values.minCoeff() > 0.0)) {
    throw NumericalError("logdet: matrix is not positive definite (min eigenvalue " +
                         std::to_string(e.values.minCoeff()) + ")");
  }
  return e.values.array().log().sum();
}

// Sample covariance of the rows of x, denominator n-1.
inline Matrix covariance(const Matrix& x) {
  if (x.rows() < 2) {
    throw ConfigError("covariance needs at least 2 rows, got " + std::to_string(x.rows()));
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Matrix centered = x.rowwise() - mean;
  return symmetrize(centered.transpose() * centered / static_cast<double>(x.rows() - 1));
}

}  // namespace fairmetric::numerics
