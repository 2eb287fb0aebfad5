#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "flexmpc/errors.hpp"

namespace flexmpc {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Eigen::MatrixXd;
using Eigen::VectorXd;

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& M, const char* name) {
  if (!M.allFinite())
    throw std::invalid_argument(std::string(name) + ": non-finite entries");
}

template <typename Derived>
void require_square(const Eigen::MatrixBase<Derived>& M, const char* name) {
  if (M.rows() != M.cols() || M.rows() < 1)
    throw std::invalid_argument(std::string(name) + ": square matrix required");
}

template <typename Scalar>
bool is_symmetric(const MatrixX<Scalar>& S, Scalar rel_tol = Scalar(1e-12)) {
  if (S.rows() != S.cols()) return false;
  Scalar scale = Scalar(1) + S.template lpNorm<Eigen::Infinity>();
  return (S - S.transpose()).template lpNorm<Eigen::Infinity>() <= rel_tol * scale;
}

template <typename Scalar>
struct SymEigResult {
  VectorX<Scalar> eigenvalues;   // ascending
  MatrixX<Scalar> eigenvectors;  // orthonormal columns, paired with eigenvalues
};

// Full spectrum of a symmetric matrix, eigenvalues ascending.
template <typename Scalar>
SymEigResult<Scalar> sym_eig(const MatrixX<Scalar>& S) {
  require_square(S, "sym_eig");
  require_finite(S, "sym_eig");
  if (!is_symmetric(S))
    throw std::invalid_argument("sym_eig: matrix not symmetric");
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(S);
  if (es.info() != Eigen::Success)
    throw ConvergenceError("sym_eig: eigensolver did not converge", NAN);
  return {es.eigenvalues(), es.eigenvectors()};
}

template <typename Scalar>
Scalar min_eigenvalue(const MatrixX<Scalar>& S) {
  return sym_eig<Scalar>(S).eigenvalues(0);
}

// Largest eigenvalue modulus, general square matrix.
template <typename Scalar>
Scalar spectral_radius(const MatrixX<Scalar>& M) {
  require_square(M, "spectral_radius");
  require_finite(M, "spectral_radius");
  Eigen::EigenSolver<MatrixX<Scalar>> es(M, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success)
    throw ConvergenceError("spectral_radius: eigensolver did not converge", NAN);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// Fixed-point iteration of the Riccati map starting from P = Q.
// P = AᵀPA − AᵀPB(R+BᵀPB)⁻¹BᵀPA + Q
template <typename Scalar>
MatrixX<Scalar> dare_solve(const MatrixX<Scalar>& A, const MatrixX<Scalar>& B,
                           const MatrixX<Scalar>& Q, const MatrixX<Scalar>& R,
                           int max_iter = 10000, Scalar step_tol = Scalar(1e-10)) {
  require_square(A, "dare_solve: A");
  require_finite(A, "dare_solve: A");
  require_finite(B, "dare_solve: B");
  if (B.rows() != A.rows())
    throw std::invalid_argument("dare_solve: B row count must match A");
  if (!is_symmetric(Q) || Q.rows() != A.rows())
    throw std::invalid_argument("dare_solve: Q must be symmetric, same size as A");
  if (!is_symmetric(R) || R.rows() != B.cols())
    throw std::invalid_argument("dare_solve: R must be symmetric p x p");
  if (Eigen::LLT<MatrixX<Scalar>>(R).info() != Eigen::Success)
    throw std::invalid_argument("dare_solve: R must be positive definite");

  MatrixX<Scalar> P = Q;
  auto riccati_map = [&](const MatrixX<Scalar>& Pk) -> MatrixX<Scalar> {
    MatrixX<Scalar> S = R + B.transpose() * Pk * B;
    MatrixX<Scalar> BtPA = B.transpose() * Pk * A;
    MatrixX<Scalar> next =
        A.transpose() * Pk * A - BtPA.transpose() * S.ldlt().solve(BtPA) + Q;
    return ((next + next.transpose()) / Scalar(2)).eval();
  };
  auto residual_of = [&](const MatrixX<Scalar>& Pk) {
    return (riccati_map(Pk) - Pk).template lpNorm<Eigen::Infinity>();
  };

  for (int it = 0; it < max_iter; ++it) {
    MatrixX<Scalar> next = riccati_map(P);
    if (!next.allFinite())
      throw ConvergenceError("dare_solve: iteration diverged", INFINITY);
    Scalar step = (next - P).template lpNorm<Eigen::Infinity>();
    P = next;
    if (step <= step_tol * (Scalar(1) + P.template lpNorm<Eigen::Infinity>()))
      return P;
  }
  throw ConvergenceError("dare_solve: iteration cap reached", residual_of(P));
}

// K = −(R+BᵀPB)⁻¹BᵀPA with P the DARE solution.
template <typename Scalar>
MatrixX<Scalar> lqr_gain(const MatrixX<Scalar>& A, const MatrixX<Scalar>& B,
                         const MatrixX<Scalar>& Q, const MatrixX<Scalar>& R) {
  MatrixX<Scalar> P = dare_solve(A, B, Q, R);
  MatrixX<Scalar> S = R + B.transpose() * P * B;
  return (-S.ldlt().solve(B.transpose() * P * A)).eval();
}

// Euclidean projection onto {w : w >= 0, sum w = s}, sort-based.
template <typename Scalar>
VectorX<Scalar> simplex_projection(const VectorX<Scalar>& v, Scalar s) {
  require_finite(v, "simplex_projection");
  if (!(s > Scalar(0)))
    throw std::invalid_argument("simplex_projection: target sum must be positive");
  const Eigen::Index n = v.size();
  if (n < 1) throw std::invalid_argument("simplex_projection: empty vector");
  std::vector<Scalar> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<Scalar>());
  Scalar cumsum = 0;
  Scalar tau = u[0] - s;  // i = 0 always qualifies since s > 0
  for (Eigen::Index i = 0; i < n; ++i) {
    cumsum += u[i];
    Scalar t = (cumsum - s) / Scalar(i + 1);
    if (u[i] > t) tau = t;
  }
  return v.unaryExpr([tau](Scalar x) { return std::max(x - tau, Scalar(0)); }).eval();
}

}  // namespace flexmpc
