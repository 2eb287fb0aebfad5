#include "flexmpc/gdclf.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "flexmpc/linalg.hpp"

namespace flexmpc {
namespace {

MatrixXd closed_loop(const LinearMode& mode) {
  if (!mode.K)
    throw std::invalid_argument("mode " + mode.label + ": gain K required");
  return mode.A + mode.B * (*mode.K);
}

// C_i = ((A+BK)^(i+1))' (A+BK)^(i+1), the Gram blocks of the window matrix.
std::vector<MatrixXd> window_grams(const LinearMode& mode, int m) {
  std::vector<MatrixXd> grams;
  grams.reserve(static_cast<size_t>(m));
  for (const MatrixXd& pw : closed_loop_powers(mode, m))
    grams.push_back(pw.transpose() * pw);
  return grams;
}

MatrixXd window_matrix(const std::vector<MatrixXd>& grams, const VectorXd& lambda,
                       double epsilon) {
  const Eigen::Index n = grams.front().rows();
  MatrixXd M = (1.0 - epsilon) * MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < lambda.size(); ++i)
    M -= lambda(i) * grams[static_cast<size_t>(i)];
  return M;
}

void check_weights(const VectorXd& lambda, double epsilon) {
  if (lambda.size() < 1) throw std::invalid_argument("empty weight vector");
  for (Eigen::Index i = 0; i < lambda.size(); ++i)
    if (!(lambda(i) >= 0.0))
      throw std::invalid_argument("weight " + std::to_string(i + 1) +
                                  " is negative or non-finite");
  if (lambda.sum() < 1.0 - 1e-9)
    throw std::invalid_argument("weights must sum to at least 1");
  if (!(epsilon >= 0.0 && epsilon < 1.0))
    throw std::invalid_argument("epsilon must lie in [0, 1)");
}

double sym22_max_eig(const MatrixXd& S) {
  double a = S(0, 0), c = S(1, 1), b = 0.5 * (S(0, 1) + S(1, 0));
  double mid = 0.5 * (a + c), d = 0.5 * (a - c);
  return mid + std::sqrt(d * d + b * b);
}

}  // namespace

std::vector<MatrixXd> closed_loop_powers(const LinearMode& mode, int m) {
  if (m < 1) throw std::invalid_argument("closed_loop_powers: m >= 1 required");
  MatrixXd acl = closed_loop(mode);
  std::vector<MatrixXd> powers;
  powers.reserve(static_cast<size_t>(m));
  powers.push_back(acl);
  for (int i = 1; i < m; ++i) powers.push_back(powers.back() * acl);
  return powers;
}

MatrixXd closed_loop_power_stack(const LinearMode& mode, int m) {
  auto powers = closed_loop_powers(mode, m);
  const int n = mode.state_dim();
  MatrixXd stack(static_cast<Eigen::Index>(n) * m, n);
  for (int i = 0; i < m; ++i)
    stack.middleRows(static_cast<Eigen::Index>(i) * n, n) =
        powers[static_cast<size_t>(i)];
  return stack;
}

double certificate_margin(const std::vector<LinearMode>& modes,
                          const VectorXd& lambda, double epsilon) {
  validate_modes(modes);
  check_weights(lambda, epsilon);
  const int m = static_cast<int>(lambda.size());
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& mode : modes) {
    auto grams = window_grams(mode, m);
    margin = std::min(
        margin, min_eigenvalue<double>(window_matrix(grams, lambda, epsilon)));
  }
  return margin;
}

double verify_certificate(const std::vector<LinearMode>& modes,
                          const GdclfCertificate& cert) {
  if (cert.m != static_cast<int>(cert.lambda.size()))
    throw std::invalid_argument("certificate order disagrees with weight count");
  if (!(cert.epsilon > 0.0 && cert.epsilon < 1.0))
    throw std::invalid_argument("certificate epsilon must lie in (0, 1)");
  if (cert.gains.size() != modes.size())
    throw std::invalid_argument("certificate gain count disagrees with mode count");
  std::vector<LinearMode> armed = modes;
  for (size_t t = 0; t < armed.size(); ++t) armed[t].K = cert.gains[t];
  return certificate_margin(armed, cert.lambda, cert.epsilon);
}

SynthesisResult synthesize(const std::vector<LinearMode>& modes, int m,
                           double epsilon, unsigned seed, int restarts,
                           int iterations) {
  validate_modes(modes);
  if (m < 1) throw std::invalid_argument("synthesize: m >= 1 required");
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw std::invalid_argument("synthesize: epsilon must lie in (0, 1)");
  if (restarts < 1 || iterations < 1)
    throw std::invalid_argument("synthesize: restarts and iterations must be >= 1");

  std::vector<std::vector<MatrixXd>> grams;
  grams.reserve(modes.size());
  for (const auto& mode : modes) {
    if (spectral_radius<double>(closed_loop(mode)) >= 1.0)
      throw std::invalid_argument("mode " + mode.label +
                                  ": closed loop is not contracting");
    grams.push_back(window_grams(mode, m));
  }

  // F(lambda) = min over modes of the smallest window eigenvalue; concave.
  // Supergradient component i at the active mode's unit eigenvector v is
  // -v' C_i v.
  auto evaluate = [&](const VectorXd& lam, VectorXd* grad) -> double {
    double worst = std::numeric_limits<double>::infinity();
    size_t worst_mode = 0;
    VectorXd v;
    for (size_t t = 0; t < grams.size(); ++t) {
      auto eig = sym_eig<double>(window_matrix(grams[t], lam, epsilon));
      if (eig.eigenvalues(0) < worst) {
        worst = eig.eigenvalues(0);
        worst_mode = t;
        v = eig.eigenvectors.col(0);
      }
    }
    if (grad) {
      grad->resize(m);
      for (int i = 0; i < m; ++i)
        (*grad)(i) = -v.dot(grams[worst_mode][static_cast<size_t>(i)] * v);
    }
    return worst;
  };

  std::mt19937 gen(seed);
  auto uniform01 = [&gen]() { return (double(gen()) + 0.5) / 4294967296.0; };

  VectorXd best_lambda = VectorXd::Constant(m, 1.0 / m);
  double best_margin = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    VectorXd lam(m);
    if (r == 0) {
      lam.setConstant(1.0 / m);
    } else {
      for (int i = 0; i < m; ++i) lam(i) = -std::log(uniform01());
      lam /= lam.sum();
    }
    VectorXd grad(m);
    double f = evaluate(lam, &grad);
    if (f > best_margin) {
      best_margin = f;
      best_lambda = lam;
    }
    for (int t = 1; t <= iterations; ++t) {
      lam = simplex_projection<double>(
          (lam + grad / std::sqrt(double(t))).eval(), 1.0);
      f = evaluate(lam, &grad);
      if (f > best_margin) {
        best_margin = f;
        best_lambda = lam;
      }
    }
  }

  SynthesisResult result;
  result.best_margin = best_margin;
  result.feasible = best_margin >= 0.0;
  if (result.feasible) {
    GdclfCertificate cert;
    cert.m = m;
    cert.lambda = best_lambda;
    cert.epsilon = epsilon;
    for (const auto& mode : modes) cert.gains.push_back(*mode.K);
    cert.margin = best_margin;
    result.certificate = std::move(cert);
  }
  return result;
}

std::optional<int> minimal_window(const std::vector<LinearMode>& modes, int m_max,
                                  double epsilon, unsigned seed) {
  if (m_max < 1) throw std::invalid_argument("minimal_window: m_max >= 1 required");
  for (int m = 1; m <= m_max; ++m)
    if (synthesize(modes, m, epsilon, seed).feasible) return m;
  return std::nullopt;
}

FalsificationReport falsify_common_quadratic(const std::vector<LinearMode>& modes,
                                             double q_lo, double q_hi, double r_hi,
                                             double step, int max_witnesses) {
  validate_modes(modes);
  if (modes.front().state_dim() != 2 || modes.front().input_dim() != 1)
    throw std::invalid_argument(
        "falsify_common_quadratic: two states and one input required");
  if (!(step > 0.0) || !(q_hi >= q_lo) || !(r_hi > 0.0))
    throw std::invalid_argument("falsify_common_quadratic: malformed grid");

  FalsificationReport rep;
  rep.q_lo = q_lo;
  rep.q_hi = q_hi;
  rep.r_hi = r_hi;
  rep.step = step;

  // Centered construction keeps the q grid exactly negation-symmetric for
  // symmetric ranges, which the sign-flip structure tests rely on.
  const long nq = std::lround((q_hi - q_lo) / step);
  const long nr = std::lround(r_hi / step);
  const double q_mid = 0.5 * (q_lo + q_hi);

  for (long iq = 0; iq <= nq; ++iq) {
    const double q = q_mid + (double(iq) - 0.5 * double(nq)) * step;
    for (long ir = 1; ir <= nr; ++ir) {
      const double r = double(ir) * step;
      if (r - q * q <= 1e-12) continue;
      ++rep.pd_points;

      MatrixXd P(2, 2);
      P << 1.0, q, q, r;
      FalsificationReport::PointRecord rec;
      rec.q = q;
      rec.r = r;

      bool all_decrease = true;
      for (const auto& mode : modes) {
        const double s = (mode.B.transpose() * P * mode.B)(0, 0);
        if (std::abs(s) <= 1e-12 * (1.0 + r)) {
          rec.flagged = true;
          break;
        }
        MatrixXd PB = P * mode.B;
        MatrixXd D = mode.A.transpose() * (P - PB * PB.transpose() / s) * mode.A - P;
        const double viol = sym22_max_eig(D);
        rec.mode_violation.push_back(viol);
        if (viol >= 0.0) all_decrease = false;
      }

      if (rec.flagged) {
        ++rep.flagged_points;
      } else if (all_decrease) {
        ++rep.certified_points;
        if (static_cast<int>(rep.witnesses.size()) < max_witnesses)
          rep.witnesses.push_back(rec);
      }
      rep.points.push_back(std::move(rec));
    }
  }
  return rep;
}

}  // namespace flexmpc
