#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "flexmpc/system.hpp"

namespace flexmpc {

// Certificate that V(x) = ||x||^2 decreases on average over an m-step window
// under the per-mode feedback gains: for every mode theta,
//   (1 - epsilon) I  -  sum_i lambda_i ((A+BK)^i)' (A+BK)^i  >= 0,
// with lambda >= 0 and sum lambda >= 1.
struct GdclfCertificate {
  int m = 0;
  VectorXd lambda;
  double epsilon = 0.0;
  std::vector<MatrixXd> gains;  // one K per mode
  double margin = 0.0;          // min over modes of the smallest eigenvalue above
};

struct SynthesisResult {
  bool feasible = false;
  double best_margin = 0.0;
  std::optional<GdclfCertificate> certificate;
};

// Powers of the closed loop: result[i] = (A + B K)^(i+1) for i = 0..m-1,
// each block the previous one right-multiplied by (A + B K).
std::vector<MatrixXd> closed_loop_powers(const LinearMode& mode, int m);

// The nm x n vertical stack of those powers.
MatrixXd closed_loop_power_stack(const LinearMode& mode, int m);

// Smallest eigenvalue of the window matrix, minimized over modes, for given
// weights. Requires lambda >= 0 entrywise, sum lambda >= 1 (tolerance 1e-9
// on the sum) and epsilon in [0, 1); violations throw std::invalid_argument.
double certificate_margin(const std::vector<LinearMode>& modes,
                          const VectorXd& lambda, double epsilon);

// Recomputes the margin of a stored certificate against the given modes
// using the certificate's own gains. Malformed certificates (negative
// weight, sum < 1, epsilon outside (0,1), size mismatch) throw
// std::invalid_argument before any eigenvalue work.
double verify_certificate(const std::vector<LinearMode>& modes,
                          const GdclfCertificate& cert);

// Maximize the margin over the unit simplex {lambda >= 0, sum = 1} by
// projected supergradient ascent, step 1/sqrt(t). Restarts: first from the
// uniform point, the rest from random simplex points drawn from `seed`.
// Feasible iff the best margin found is >= 0. Every mode must carry a gain
// with spectral_radius(A + BK) < 1.
SynthesisResult synthesize(const std::vector<LinearMode>& modes, int m,
                           double epsilon, unsigned seed = 0,
                           int restarts = 5, int iterations = 5000);

// Smallest window length in [1, m_max] admitting a certificate; nullopt if
// none below the cap.
std::optional<int> minimal_window(const std::vector<LinearMode>& modes,
                                  int m_max, double epsilon, unsigned seed = 0);

// Grid search for a common quadratic control Lyapunov function of the form
// P = [[1, q], [q, r]] (scale-normalized; positive definite iff r > q^2).
// At each PD grid point and for each mode the best-input decrease matrix
//   D(P) = A'(P - PB(B'PB)^{-1}B'P)A - P
// is evaluated; the mode decreases iff D(P) < 0 (max eigenvalue negative).
struct FalsificationReport {
  double q_lo = 0, q_hi = 0, r_hi = 0, step = 0;
  long pd_points = 0;        // grid points with P positive definite
  long certified_points = 0; // PD points where every mode decreases
  long flagged_points = 0;   // B'PB numerically singular, skipped

  struct PointRecord {
    double q = 0, r = 0;
    std::vector<double> mode_violation;  // max eig of D per mode; >= 0 fails
    bool flagged = false;
  };
  std::vector<PointRecord> points;     // every PD grid point, grid order
  std::vector<PointRecord> witnesses;  // certified points, capped

  bool common_clf_found() const { return certified_points > 0; }
};

FalsificationReport falsify_common_quadratic(const std::vector<LinearMode>& modes,
                                             double q_lo = -3.0, double q_hi = 3.0,
                                             double r_hi = 10.0, double step = 0.05,
                                             int max_witnesses = 8);

}  // namespace flexmpc
