#pragma once

// Dense numeric kernels shared by the metrics, analysis, and optimize modules.
// All are templated on the Eigen scalar type and accept any dense expression.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "masscope/error.hpp"

namespace masscope {

using Embedding = Eigen::VectorXd;

/// Cosine of two unit vectors: their dot product clamped to [-1, 1].
/// Bitwise-identical inputs return exactly 1.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine(const Eigen::MatrixBase<DerivedA>& a,
                                 const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.size() != b.size()) {
    throw Error(Errc::DimensionMismatch,
                "cosine of vectors with sizes " + std::to_string(a.size()) + " and " +
                    std::to_string(b.size()));
  }
  if ((a.array() == b.array()).all()) return Scalar(1);
  return std::clamp(a.dot(b), Scalar(-1), Scalar(1));
}

/// Softmax over a vector of scores, shifted by the max for stability.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(
    const Eigen::MatrixBase<Derived>& scores) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(scores.size());
  if (scores.size() == 0) return out;
  const Scalar top = scores.maxCoeff();
  out = (scores.array() - top).exp().matrix();
  out /= out.sum();
  return out;
}

template <typename Scalar>
struct JacobiResult {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> eigenvalues;  // ascending
  int sweeps = 0;
  bool converged = false;
};

/// Cyclic Jacobi rotations on a symmetric matrix. Stops once the Frobenius
/// norm of the off-diagonal part falls below `tolerance` or after
/// `max_sweeps` full sweeps.
template <typename Derived>
JacobiResult<typename Derived::Scalar> jacobi_eigenvalues(
    const Eigen::MatrixBase<Derived>& symmetric,
    typename Derived::Scalar tolerance = typename Derived::Scalar(1e-10),
    int max_sweeps = 100) {
  using Scalar = typename Derived::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index n = symmetric.rows();
  if (symmetric.cols() != n) {
    throw Error(Errc::DimensionMismatch, "jacobi_eigenvalues needs a square matrix");
  }
  Matrix a = symmetric;

  auto off_norm = [&a, n] {
    Scalar sum = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j) sum += a(i, j) * a(i, j);
    return std::sqrt(sum);
  };

  JacobiResult<Scalar> result;
  while (result.sweeps < max_sweeps) {
    if (off_norm() < tolerance) {
      result.converged = true;
      break;
    }
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const Scalar apq = a(p, q);
        if (apq == Scalar(0)) continue;
        // Rotation angle that zeroes a(p, q); t is the smaller root of
        // t^2 + 2 theta t - 1 = 0.
        const Scalar theta = (a(q, q) - a(p, p)) / (Scalar(2) * apq);
        const Scalar t = (theta >= 0 ? Scalar(1) : Scalar(-1)) /
                         (std::abs(theta) + std::sqrt(theta * theta + Scalar(1)));
        const Scalar c = Scalar(1) / std::sqrt(t * t + Scalar(1));
        const Scalar s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const Scalar akp = a(k, p);
          const Scalar akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const Scalar apk = a(p, k);
          const Scalar aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = Scalar(0);
      }
    }
    ++result.sweeps;
  }
  if (!result.converged && off_norm() < tolerance) result.converged = true;

  result.eigenvalues = a.diagonal();
  std::sort(result.eigenvalues.data(), result.eigenvalues.data() + n);
  return result;
}

/// Vendi score of a similarity matrix with unit diagonal: the exponential of
/// the Shannon entropy of the eigenvalues of K / n. Ranges over [1, n].
template <typename Derived>
typename Derived::Scalar vendi_score(const Eigen::MatrixBase<Derived>& similarity) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = similarity.rows();
  if (n == 0 || similarity.cols() != n) {
    throw Error(Errc::DimensionMismatch, "vendi_score needs a nonempty square matrix");
  }
  constexpr Scalar kSymTol = Scalar(1e-9);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(similarity(i, i) - Scalar(1)) > kSymTol) {
      throw Error(Errc::InvalidArgument,
                  "diagonal entry " + std::to_string(i) + " is not 1");
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      const Scalar v = similarity(i, j);
      if (!std::isfinite(v) || v < Scalar(-1) - kSymTol || v > Scalar(1) + kSymTol) {
        throw Error(Errc::InvalidArgument, "similarity entry outside [-1, 1]");
      }
      if (std::abs(v - similarity(j, i)) > kSymTol) {
        throw Error(Errc::NotSymmetric, "entry (" + std::to_string(i) + ", " +
                                            std::to_string(j) + ") differs from its transpose");
      }
    }
  }

  const auto jac = jacobi_eigenvalues(similarity / Scalar(n), Scalar(1e-10), 100);
  Scalar entropy = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    Scalar lambda = jac.eigenvalues(k);
    if (lambda < Scalar(-1e-8)) {
      throw Error(Errc::NotPSD, "eigenvalue " + std::to_string(lambda) + " below -1e-8");
    }
    if (lambda <= Scalar(0)) continue;  // 0 ln 0 = 0
    entropy -= lambda * std::log(lambda);
  }
  return std::clamp(std::exp(entropy), Scalar(1), Scalar(n));
}

}  // namespace masscope
