#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <complex>
#include <random>
#include <vector>

#include "flexmpc/linalg.hpp"

using namespace flexmpc;

namespace {

MatrixXd random_matrix(std::mt19937& rng, int rows, int cols, double span = 1.0) {
  std::uniform_real_distribution<double> d(-span, span);
  MatrixXd M(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) M(r, c) = d(rng);
  return M;
}

MatrixXd random_symmetric(std::mt19937& rng, int n, double span = 1.0) {
  MatrixXd M = random_matrix(rng, n, n, span);
  return ((M + M.transpose()) / 2.0).eval();
}

// Scale a random square matrix to the requested spectral radius.
MatrixXd random_with_radius(std::mt19937& rng, int n, double rho) {
  for (;;) {
    MatrixXd M = random_matrix(rng, n, n);
    double r = spectral_radius(M);
    if (r > 1e-6) return (rho / r) * M;
  }
}

// Roots of a monic polynomial x^n + c[n-1] x^(n-1) + ... + c[0] by
// Durand-Kerner iteration.
std::vector<std::complex<double>> poly_roots(const std::vector<double>& c) {
  const int n = static_cast<int>(c.size());
  auto eval = [&](std::complex<double> x) {
    std::complex<double> acc(1.0, 0.0);
    for (int i = n - 1; i >= 0; --i) acc = acc * x + c[static_cast<size_t>(i)];
    return acc;
  };
  std::vector<std::complex<double>> z(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    z[static_cast<size_t>(i)] = std::pow(std::complex<double>(0.4, 0.9), i + 1);
  for (int it = 0; it < 500; ++it) {
    double moved = 0.0;
    for (int i = 0; i < n; ++i) {
      std::complex<double> den(1.0, 0.0);
      for (int j = 0; j < n; ++j)
        if (j != i) den *= z[static_cast<size_t>(i)] - z[static_cast<size_t>(j)];
      std::complex<double> step = eval(z[static_cast<size_t>(i)]) / den;
      z[static_cast<size_t>(i)] -= step;
      moved = std::max(moved, std::abs(step));
    }
    if (moved < 1e-14) break;
  }
  return z;
}

}  // namespace

TEST_CASE("symmetric eigensolver on identity and diagonal input") {
  MatrixXd I3 = MatrixXd::Identity(3, 3);
  auto res = sym_eig<double>(I3);
  for (int i = 0; i < 3; ++i) CHECK(res.eigenvalues(i) == doctest::Approx(1.0));

  MatrixXd D(2, 2);
  D << 3.0, 0.0, 0.0, -2.0;
  auto dres = sym_eig<double>(D);
  CHECK(dres.eigenvalues(0) == doctest::Approx(-2.0));
  CHECK(dres.eigenvalues(1) == doctest::Approx(3.0));
}

TEST_CASE("symmetric eigensolver reconstructs random matrices") {
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> dim(1, 12);
  for (int trial = 0; trial < 1000; ++trial) {
    int n = dim(rng);
    MatrixXd S = random_symmetric(rng, n, 5.0);
    auto res = sym_eig<double>(S);
    const MatrixXd& V = res.eigenvectors;
    MatrixXd rebuilt = V * res.eigenvalues.asDiagonal() * V.transpose();
    double scale = 1.0 + S.norm();
    CHECK((rebuilt - S).norm() <= 1e-9 * scale);
    CHECK((V.transpose() * V - MatrixXd::Identity(n, n)).norm() <= 1e-9);
    for (int i = 0; i + 1 < n; ++i)
      CHECK(res.eigenvalues(i) <= res.eigenvalues(i + 1));
    for (int i = 0; i < n; ++i)
      CHECK((S * V.col(i) - res.eigenvalues(i) * V.col(i)).norm() <=
            1e-9 * (1.0 + S.norm()));
  }
}

TEST_CASE("symmetric eigensolver rejects bad input") {
  MatrixXd R(2, 3);
  R.setZero();
  CHECK_THROWS_AS(sym_eig<double>(R), std::invalid_argument);
  MatrixXd A(2, 2);
  A << 0.0, 1.0, -1.0, 0.0;
  CHECK_THROWS_AS(sym_eig<double>(A), std::invalid_argument);
}

TEST_CASE("spectral radius on fixed matrices") {
  MatrixXd D(2, 2);
  D << 0.5, 0.0, 0.0, -0.9;
  CHECK(spectral_radius<double>(D) == doctest::Approx(0.9));
  MatrixXd Rot(2, 2);
  Rot << 0.0, 1.0, -1.0, 0.0;
  CHECK(spectral_radius<double>(Rot) == doctest::Approx(1.0));
  MatrixXd R(1, 2);
  R.setZero();
  CHECK_THROWS_AS(spectral_radius<double>(R), std::invalid_argument);
}

TEST_CASE("spectral radius of the three state closed loop vs polynomial roots") {
  MatrixXd A(3, 3);
  A << 2.13, 1.0, 1.0, 0.0, 1.0, 0.3, 0.0, 0.0, 0.5;
  MatrixXd B(3, 1);
  B << 0.0, 0.0, 1.0;
  MatrixXd K(1, 3);
  K << -3.5507, -2.6749, -2.4633;
  MatrixXd M = A + B * K;

  // characteristic polynomial x^3 - t1 x^2 + m2 x - det
  double t1 = M.trace();
  double m2 = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j)
      m2 += M(i, i) * M(j, j) - M(i, j) * M(j, i);
  double det = M.determinant();
  auto roots = poly_roots({-det, m2, -t1});
  double oracle = 0.0;
  for (const auto& z : roots) oracle = std::max(oracle, std::abs(z));

  double rho = spectral_radius<double>(M);
  CHECK(rho == doctest::Approx(oracle).epsilon(1e-8));
  CHECK(rho < 1.0);
}

TEST_CASE("spectral radius respects matrix powers") {
  std::mt19937 rng(23);
  std::uniform_int_distribution<int> dim(2, 4);
  std::uniform_int_distribution<int> kdist(2, 5);
  for (int trial = 0; trial < 100; ++trial) {
    int n = dim(rng);
    MatrixXd M = random_matrix(rng, n, n);
    double rho = spectral_radius<double>(M);
    if (rho < 1e-3) continue;
    int k = kdist(rng);
    MatrixXd P = MatrixXd::Identity(n, n);
    for (int i = 0; i < k; ++i) P = P * M;
    double lhs = spectral_radius<double>(P);
    double rhs = std::pow(rho, k);
    CHECK(std::abs(lhs - rhs) <= 1e-6 * (1.0 + rhs));
  }
}

TEST_CASE("riccati solver matches the scalar closed form") {
  MatrixXd A(1, 1), B(1, 1), Q(1, 1), R(1, 1);
  A << 0.5;
  B << 1.0;
  Q << 1.0;
  R << 1.0;
  MatrixXd P = dare_solve<double>(A, B, Q, R);
  // p solves p = a^2 p - a^2 p^2 / (r + p) + q, i.e. p^2 - 0.25 p - 1 = 0
  double closed_form = (0.25 + std::sqrt(0.0625 + 4.0)) / 2.0;
  CHECK(P(0, 0) == doctest::Approx(closed_form).epsilon(1e-10));
}

TEST_CASE("riccati solver with zero input matches the lyapunov series") {
  std::mt19937 rng(37);
  MatrixXd A = random_with_radius(rng, 3, 0.8);
  MatrixXd B = MatrixXd::Zero(3, 1);
  MatrixXd C = random_matrix(rng, 3, 3);
  MatrixXd Q = (C.transpose() * C).eval();
  MatrixXd R = MatrixXd::Identity(1, 1);
  MatrixXd P = dare_solve<double>(A, B, Q, R);

  MatrixXd series = MatrixXd::Zero(3, 3);
  MatrixXd Ak = MatrixXd::Identity(3, 3);
  for (int k = 0; k < 2000; ++k) {
    MatrixXd term = Ak.transpose() * Q * Ak;
    series += term;
    if (term.norm() < 1e-15) break;
    Ak = Ak * A;
  }
  CHECK((P - series).norm() <= 1e-8 * (1.0 + P.norm()));
}

TEST_CASE("riccati residual bound on random stabilizable instances") {
  std::mt19937 rng(41);
  std::uniform_int_distribution<int> ndist(1, 4);
  std::uniform_int_distribution<int> pdist(1, 2);
  for (int trial = 0; trial < 100; ++trial) {
    int n = ndist(rng);
    int p = pdist(rng);
    MatrixXd A = random_with_radius(rng, n, 0.95);
    MatrixXd B = random_matrix(rng, n, p);
    MatrixXd C = random_matrix(rng, n, n);
    MatrixXd Q = (C.transpose() * C).eval();
    MatrixXd D = random_matrix(rng, p, p);
    MatrixXd R = (D.transpose() * D + MatrixXd::Identity(p, p)).eval();

    MatrixXd P = dare_solve<double>(A, B, Q, R);
    CHECK(is_symmetric<double>(P));
    CHECK(min_eigenvalue<double>(P) >= -1e-9 * (1.0 + P.norm()));
    MatrixXd S = R + B.transpose() * P * B;
    MatrixXd BtPA = B.transpose() * P * A;
    MatrixXd residual =
        A.transpose() * P * A - P - BtPA.transpose() * S.ldlt().solve(BtPA) + Q;
    CHECK(residual.norm() <= 1e-8 * (1.0 + P.norm()));
  }
}

TEST_CASE("riccati terminal weight for the switched plant mode") {
  MatrixXd A(2, 2), B(2, 1), Q = MatrixXd::Identity(2, 2), R(1, 1);
  A << 1.0, 0.1, -0.15, 1.0;
  B << 0.0, 0.1;
  R << 5.0;
  MatrixXd P = dare_solve<double>(A, B, Q, R);
  CHECK(min_eigenvalue<double>(P) > 0.0);
  MatrixXd S = R + B.transpose() * P * B;
  MatrixXd BtPA = B.transpose() * P * A;
  MatrixXd residual =
      A.transpose() * P * A - P - BtPA.transpose() * S.ldlt().solve(BtPA) + Q;
  CHECK(residual.norm() <= 1e-8 * (1.0 + P.norm()));
}

TEST_CASE("riccati solver validates its weights") {
  MatrixXd A = MatrixXd::Identity(2, 2);
  MatrixXd B = MatrixXd::Ones(2, 1);
  MatrixXd Q = MatrixXd::Identity(2, 2);
  MatrixXd Rbad(1, 1);
  Rbad << -1.0;
  CHECK_THROWS_AS(dare_solve<double>(A, B, Q, Rbad), std::invalid_argument);
  MatrixXd Qbad(2, 2);
  Qbad << 1.0, 0.5, -0.5, 1.0;
  MatrixXd R = MatrixXd::Identity(1, 1);
  CHECK_THROWS_AS(dare_solve<double>(A, B, Qbad, R), std::invalid_argument);
}

TEST_CASE("lqr gain contracts the scalar and fixed plants") {
  MatrixXd A(1, 1), B(1, 1), Q(1, 1), R(1, 1);
  A << 2.0;
  B << 1.0;
  Q << 1.0;
  R << 1.0;
  MatrixXd K = lqr_gain<double>(A, B, Q, R);
  CHECK(std::abs(A(0, 0) + B(0, 0) * K(0, 0)) < 1.0);

  MatrixXd A2 = 0.5 * MatrixXd::Identity(2, 2);
  MatrixXd B2(2, 1);
  B2 << 1.0, 1.0;
  MatrixXd R_large = 1e6 * MatrixXd::Identity(1, 1);
  MatrixXd K2 = lqr_gain<double>(A2, B2, MatrixXd::Identity(2, 2), R_large);
  CHECK(K2.norm() < 1e-2);
  CHECK(spectral_radius<double>((A2 + B2 * K2).eval()) < 1.0);

  MatrixXd A3(3, 3), B3(3, 1);
  A3 << 2.13, 1.0, 1.0, 0.0, 1.0, 0.3, 0.0, 0.0, 0.5;
  B3 << 0.0, 0.0, 1.0;
  MatrixXd K3 = lqr_gain<double>(A3, B3, MatrixXd::Identity(3, 3),
                                 MatrixXd::Identity(1, 1));
  CHECK(spectral_radius<double>((A3 + B3 * K3).eval()) < 1.0);
}

TEST_CASE("simplex projection on fixed points") {
  VectorXd on(2);
  on << 0.2, 0.8;
  VectorXd proj = simplex_projection<double>(on, 1.0);
  CHECK((proj - on).norm() <= 1e-14);

  VectorXd v(2);
  v << 2.0, 0.0;
  VectorXd w = simplex_projection<double>(v, 1.0);
  CHECK(w(0) == doctest::Approx(1.0));
  CHECK(w(1) == doctest::Approx(0.0));

  CHECK_THROWS_AS(simplex_projection<double>(v, 0.0), std::invalid_argument);
}

TEST_CASE("simplex projection matches the active set enumeration") {
  std::mt19937 rng(53);
  std::uniform_int_distribution<int> dim(1, 4);
  std::uniform_real_distribution<double> sval(0.5, 2.0);
  for (int trial = 0; trial < 300; ++trial) {
    int n = dim(rng);
    VectorXd v = random_matrix(rng, n, 1, 3.0).col(0);
    double s = sval(rng);

    // enumerate candidate zero sets; the KKT point is unique
    VectorXd best;
    double best_dist = 1e300;
    for (int mask = 0; mask < (1 << n); ++mask) {
      int free_count = n - __builtin_popcount(static_cast<unsigned>(mask));
      if (free_count == 0) continue;
      double free_sum = 0.0;
      for (int i = 0; i < n; ++i)
        if (!(mask & (1 << i))) free_sum += v(i);
      double tau = (free_sum - s) / free_count;
      VectorXd w = VectorXd::Zero(n);
      bool ok = true;
      for (int i = 0; i < n; ++i) {
        if (mask & (1 << i)) {
          if (v(i) - tau > 1e-12) ok = false;  // multiplier sign
        } else {
          w(i) = v(i) - tau;
          if (w(i) < -1e-12) ok = false;
        }
      }
      if (!ok) continue;
      double dist = (w - v).squaredNorm();
      if (dist < best_dist) {
        best_dist = dist;
        best = w;
      }
    }
    REQUIRE(best.size() == n);
    VectorXd got = simplex_projection<double>(v, s);
    CHECK((got - best).norm() <= 1e-10);
  }
}

TEST_CASE("simplex projection output invariants") {
  std::mt19937 rng(67);
  std::uniform_int_distribution<int> dim(1, 10);
  for (int trial = 0; trial < 500; ++trial) {
    int n = dim(rng);
    VectorXd v = random_matrix(rng, n, 1, 4.0).col(0);
    double s = (trial % 3 == 0) ? 0.5 : 1.0;
    VectorXd w = simplex_projection<double>(v, s);
    CHECK(w.minCoeff() >= 0.0);
    CHECK(std::abs(w.sum() - s) <= 1e-12);
    VectorXd again = simplex_projection<double>(w, s);
    CHECK((again - w).norm() <= 1e-12);
  }
}
