#include "flexmpc/ocp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "flexmpc/errors.hpp"
#include "flexmpc/linalg.hpp"

namespace flexmpc {
namespace {

constexpr double kFeasTol = 1e-7;       // promised on returned solutions
constexpr double kFeasTarget = 1e-9;    // driven by the outer loop
constexpr double kRho0 = 100.0;
constexpr double kRhoCap = 1e8;
constexpr int kOuterCap = 30;
constexpr int kInnerCap = 500;
constexpr double kArmijo = 1e-4;

void validate_cost(const CostSpec& cost, int n, int p) {
  if (!cost.state_weight_quadratic && !cost.state_weight_l1)
    throw std::invalid_argument("cost: at least one state term required");
  if (cost.state_weight_quadratic) {
    const MatrixXd& Q = *cost.state_weight_quadratic;
    if (Q.rows() != n || Q.cols() != n)
      throw std::invalid_argument("cost: state quadratic weight must be n x n");
    if (!is_symmetric<double>(Q, 1e-9))
      throw std::invalid_argument("cost: state quadratic weight must be symmetric");
    if (min_eigenvalue<double>(Q) < -1e-10)
      throw std::invalid_argument(
          "cost: state quadratic weight must be positive semidefinite");
  }
  if (cost.state_weight_l1 && !(*cost.state_weight_l1 >= 0.0))
    throw std::invalid_argument("cost: l1 weight must be nonnegative");
  const MatrixXd& R = cost.input_weight_quadratic;
  if (R.rows() != p || R.cols() != p)
    throw std::invalid_argument("cost: input weight must be p x p");
  if (!is_symmetric<double>(R, 1e-9) ||
      Eigen::LLT<MatrixXd>(R).info() != Eigen::Success)
    throw std::invalid_argument("cost: input weight must be positive definite");
  if (cost.terminal) {
    const MatrixXd& P = *cost.terminal;
    if (P.rows() != n || P.cols() != n || !is_symmetric<double>(P, 1e-9))
      throw std::invalid_argument("cost: terminal weight must be symmetric n x n");
    if (min_eigenvalue<double>(P) < -1e-10)
      throw std::invalid_argument("cost: terminal weight must be positive semidefinite");
  }
}

void validate_box(const Box& box, int dim, const char* name) {
  if (box.lo.size() != dim || box.hi.size() != dim)
    throw std::invalid_argument(std::string(name) + ": bound size mismatch");
  for (int i = 0; i < dim; ++i)
    if (!(box.lo(i) < 0.0 && 0.0 < box.hi(i)))
      throw std::invalid_argument(std::string(name) +
                                  ": bounds must contain 0 in the interior");
}

// Affine inequality a'u + d <= 0.
struct LinCon {
  VectorXd a;
  double d = 0.0;
  int coordinate = 0;  // reported on start infeasibility
  bool on_state = false;
};

// One augmented-Lagrangian subproblem: smoothed objective plus quadratic
// penalty terms psi(g, mu, rho) = (max(0, mu + rho g)^2 - mu^2) / (2 rho).
struct AlmProblem {
  const ObjectiveModel* obj = nullptr;
  const AdcQuadratic* adc = nullptr;
  const std::vector<LinCon>* lin = nullptr;
  double rho = kRho0;
  double mu_adc = 0.0;
  VectorXd mu_lin;
  double adc_scale = 1.0;  // constraint magnitude, ~ ||x0||^2

  double value_and_grad(const VectorXd& u, VectorXd& grad) const {
    double f = obj->value(u);
    grad = obj->gradient(u);
    if (adc) {
      const double gval = adc->value(u);
      const double t = std::max(0.0, mu_adc + rho * gval);
      f += (t * t - mu_adc * mu_adc) / (2.0 * rho);
      if (t > 0.0) grad += t * adc->gradient(u);
    }
    if (lin) {
      for (size_t i = 0; i < lin->size(); ++i) {
        const LinCon& con = (*lin)[i];
        const double gval = con.a.dot(u) + con.d;
        const double t = std::max(0.0, mu_lin(static_cast<Eigen::Index>(i)) +
                                           rho * gval);
        f += (t * t - mu_lin(static_cast<Eigen::Index>(i)) *
                          mu_lin(static_cast<Eigen::Index>(i))) /
             (2.0 * rho);
        if (t > 0.0) grad += t * con.a;
      }
    }
    return f;
  }

  // descent violation measured relative to its natural scale; boxes absolute
  double max_violation(const VectorXd& u) const {
    double v = 0.0;
    if (adc) v = std::max(v, adc->value(u) / adc_scale);
    if (lin)
      for (const LinCon& con : *lin) v = std::max(v, con.a.dot(u) + con.d);
    return v;
  }

  void update_multipliers(const VectorXd& u) {
    if (adc) mu_adc = std::max(0.0, mu_adc + rho * adc->value(u));
    if (lin)
      for (size_t i = 0; i < lin->size(); ++i)
        mu_lin(static_cast<Eigen::Index>(i)) =
            std::max(0.0, mu_lin(static_cast<Eigen::Index>(i)) +
                              rho * ((*lin)[i].a.dot(u) + (*lin)[i].d));
  }

  // exact Hessian away from the penalty activation kinks
  MatrixXd hessian(const VectorXd& u) const {
    MatrixXd h = obj->hessian(u);
    if (adc) {
      const double t = std::max(0.0, mu_adc + rho * adc->value(u));
      if (t > 0.0) {
        const VectorXd gg = adc->gradient(u);
        h += rho * (gg * gg.transpose()) + 2.0 * t * adc->H;
      }
    }
    if (lin) {
      for (size_t i = 0; i < lin->size(); ++i) {
        const LinCon& con = (*lin)[i];
        const double t = std::max(0.0, mu_lin(static_cast<Eigen::Index>(i)) +
                                           rho * (con.a.dot(u) + con.d));
        if (t > 0.0) h += rho * (con.a * con.a.transpose());
      }
    }
    return h;
  }
};

struct DescentState {
  VectorXd u;
  double f = 0.0;
  VectorXd grad;
  int iterations = 0;
};

// Strong-Wolfe line search on the convex subproblem: expand until the
// directional derivative brackets zero or the decrease condition fails, then
// close in with a secant on the derivative, safeguarded by bisection. Always
// producing positive curvature keeps every quasi-Newton pair usable, which is
// what makes the badly conditioned condensed Hessians tractable.
struct Probe {
  double a = 0.0;
  double f = 0.0;
  double dphi = 0.0;
  VectorXd u;
  VectorXd g;
};

bool wolfe_search(const AlmProblem& prob, const VectorXd& u0, const VectorXd& dir,
                  double f0, double dphi0, double a_init, Probe& out) {
  constexpr double c2 = 0.9;
  double a_lo = 0.0, dphi_lo = dphi0;
  double a_hi = std::numeric_limits<double>::infinity();
  double dphi_hi = 0.0;
  Probe best;  // best point meeting the decrease condition, fallback

  double a = a_init;
  Probe pr;
  for (int it = 0; it < 60; ++it) {
    pr.a = a;
    pr.u = u0 + a * dir;
    pr.f = prob.value_and_grad(pr.u, pr.g);
    pr.dphi = pr.g.dot(dir);
    const bool armijo = pr.f <= f0 + kArmijo * a * dphi0;
    if (armijo && (best.a == 0.0 || pr.f < best.f)) best = pr;
    if (armijo && std::abs(pr.dphi) <= c2 * std::abs(dphi0)) {
      out = pr;
      return true;
    }
    if (!armijo || pr.dphi >= 0.0) {
      a_hi = a;
      dphi_hi = pr.dphi;
    } else {
      a_lo = a;
      dphi_lo = pr.dphi;
    }
    if (!std::isfinite(a_hi)) {
      a *= 4.0;
      continue;
    }
    const double width = a_hi - a_lo;
    if (width <= 1e-16 * (1.0 + a_hi)) break;
    double a_new = 0.5 * (a_lo + a_hi);
    if (dphi_hi > dphi_lo) {
      const double secant = a_lo - dphi_lo * width / (dphi_hi - dphi_lo);
      if (std::isfinite(secant) && secant > a_lo + 0.05 * width &&
          secant < a_hi - 0.05 * width)
        a_new = secant;
    }
    a = a_new;
  }
  if (best.a > 0.0) {
    out = best;
    return true;
  }
  return false;
}

// Limited-memory BFGS, memory 10, with the Wolfe search above.
DescentState lbfgs_minimize(const AlmProblem& prob, VectorXd u, int max_iter,
                            double gtol) {
  constexpr int kMemory = 10;
  std::vector<VectorXd> S, Y;
  std::vector<double> inv_sy;

  DescentState st;
  st.grad.resize(u.size());
  st.f = prob.value_and_grad(u, st.grad);
  st.u = std::move(u);

  for (int it = 0; it < max_iter; ++it) {
    if (st.grad.norm() <= gtol) break;

    // two-loop recursion
    VectorXd q = st.grad;
    const int mem = static_cast<int>(S.size());
    std::vector<double> alpha(static_cast<size_t>(mem));
    for (int i = mem - 1; i >= 0; --i) {
      alpha[static_cast<size_t>(i)] =
          inv_sy[static_cast<size_t>(i)] * S[static_cast<size_t>(i)].dot(q);
      q -= alpha[static_cast<size_t>(i)] * Y[static_cast<size_t>(i)];
    }
    if (mem > 0) {
      const VectorXd& y = Y.back();
      q *= S.back().dot(y) / y.squaredNorm();
    }
    for (int i = 0; i < mem; ++i) {
      const double beta =
          inv_sy[static_cast<size_t>(i)] * Y[static_cast<size_t>(i)].dot(q);
      q += S[static_cast<size_t>(i)] * (alpha[static_cast<size_t>(i)] - beta);
    }
    VectorXd dir = -q;
    double slope = dir.dot(st.grad);
    if (!(slope < 0.0)) {
      dir = -st.grad;
      slope = -st.grad.squaredNorm();
    }

    const double a_init = (mem == 0) ? 1.0 / std::max(1.0, st.grad.norm()) : 1.0;
    Probe pr;
    const bool accepted = wolfe_search(prob, st.u, dir, st.f, slope, a_init, pr);
    ++st.iterations;
    if (!accepted) break;

    VectorXd s = pr.u - st.u;
    VectorXd yv = pr.g - st.grad;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      S.push_back(std::move(s));
      Y.push_back(std::move(yv));
      inv_sy.push_back(1.0 / sy);
      if (static_cast<int>(S.size()) > kMemory) {
        S.erase(S.begin());
        Y.erase(Y.begin());
        inv_sy.erase(inv_sy.begin());
      }
    }
    st.u = std::move(pr.u);
    st.f = pr.f;
    st.grad = std::move(pr.g);
  }
  return st;
}

}  // namespace

CondensedDynamics condense_dynamics(const std::vector<LinearMode>& modes,
                                    const std::vector<int>& mode_sequence,
                                    const VectorXd& x0) {
  validate_modes(modes);
  const int n = modes.front().state_dim();
  const int p = modes.front().input_dim();
  if (x0.size() != n)
    throw std::invalid_argument("condense_dynamics: x0 dimension mismatch");
  const int np = static_cast<int>(mode_sequence.size());
  if (np < 1) throw std::invalid_argument("condense_dynamics: empty mode sequence");
  for (int t : mode_sequence)
    if (t < 0 || t >= static_cast<int>(modes.size()))
      throw std::invalid_argument("condense_dynamics: mode index out of range");

  CondensedDynamics cd;
  cd.horizon = np;
  cd.state_dim = n;
  cd.input_dim = p;
  cd.G.reserve(static_cast<size_t>(np));
  cd.g.reserve(static_cast<size_t>(np));

  MatrixXd Gprev = MatrixXd::Zero(n, static_cast<Eigen::Index>(np) * p);
  VectorXd gprev = x0;
  for (int j = 0; j < np; ++j) {
    const LinearMode& md = modes[static_cast<size_t>(mode_sequence[static_cast<size_t>(j)])];
    MatrixXd Gj = md.A * Gprev;
    Gj.middleCols(static_cast<Eigen::Index>(j) * p, p) += md.B;
    VectorXd gj = md.A * gprev;
    cd.G.push_back(Gj);
    cd.g.push_back(gj);
    Gprev = std::move(Gj);
    gprev = std::move(gj);
  }
  return cd;
}

AdcQuadratic condense_adc(const CondensedDynamics& cd, const AdcSpec& adc,
                          const VectorXd& x0) {
  const int m = static_cast<int>(adc.lambda.size());
  if (m < 1 || m > cd.horizon)
    throw std::invalid_argument("descent window must fit inside the horizon");
  for (int i = 0; i < m; ++i)
    if (!(adc.lambda(i) >= 0.0))
      throw std::invalid_argument("descent weights must be nonnegative");
  if (!(adc.epsilon >= 0.0 && adc.epsilon < 1.0))
    throw std::invalid_argument("descent epsilon must lie in [0, 1)");
  if (x0.size() != cd.state_dim)
    throw std::invalid_argument("condense_adc: x0 dimension mismatch");

  const Eigen::Index dim = static_cast<Eigen::Index>(cd.horizon) * cd.input_dim;
  AdcQuadratic q;
  q.H = MatrixXd::Zero(dim, dim);
  q.b = VectorXd::Zero(dim);
  q.c = -(1.0 - adc.epsilon) * x0.squaredNorm();
  for (int i = 0; i < m; ++i) {
    const double li = adc.lambda(i);
    if (li == 0.0) continue;
    const MatrixXd& Gi = cd.G[static_cast<size_t>(i)];
    const VectorXd& gi = cd.g[static_cast<size_t>(i)];
    q.H += li * (Gi.transpose() * Gi);
    q.b += li * (Gi.transpose() * gi);
    q.c += li * gi.squaredNorm();
  }
  return q;
}

std::vector<VectorXd> rollout_states(const std::vector<LinearMode>& modes,
                                     const std::vector<int>& mode_sequence,
                                     const VectorXd& x0, const VectorXd& u_stacked) {
  const int np = static_cast<int>(mode_sequence.size());
  const int p = modes.front().input_dim();
  if (u_stacked.size() != static_cast<Eigen::Index>(np) * p)
    throw std::invalid_argument("rollout_states: input length mismatch");
  std::vector<VectorXd> states;
  states.reserve(static_cast<size_t>(np));
  VectorXd x = x0;
  for (int j = 0; j < np; ++j) {
    const LinearMode& md = modes[static_cast<size_t>(mode_sequence[static_cast<size_t>(j)])];
    x = md.A * x + md.B * u_stacked.segment(static_cast<Eigen::Index>(j) * p, p);
    states.push_back(x);
  }
  return states;
}

ObjectiveModel::ObjectiveModel(CondensedDynamics cd, CostSpec cost, VectorXd x0,
                               double mu)
    : cd_(std::move(cd)), cost_(std::move(cost)), x0_(std::move(x0)), mu_(mu) {
  validate_cost(cost_, cd_.state_dim, cd_.input_dim);
  if (x0_.size() != cd_.state_dim)
    throw std::invalid_argument("ObjectiveModel: x0 dimension mismatch");
  if (!(mu_ >= 0.0))
    throw std::invalid_argument("ObjectiveModel: smoothing parameter must be >= 0");
}

double ObjectiveModel::value(const VectorXd& u) const {
  const int np = cd_.horizon;
  const int p = cd_.input_dim;
  double f = 0.0;
  for (int j = 0; j < np; ++j) {
    const VectorXd x = (j == 0)
                           ? x0_
                           : VectorXd(cd_.G[static_cast<size_t>(j - 1)] * u +
                                      cd_.g[static_cast<size_t>(j - 1)]);
    if (cost_.state_weight_quadratic)
      f += x.dot(*cost_.state_weight_quadratic * x);
    if (cost_.state_weight_l1)
      f += *cost_.state_weight_l1 *
           x.unaryExpr([this](double v) { return std::sqrt(v * v + mu_ * mu_); })
               .sum();
    const VectorXd uj = u.segment(static_cast<Eigen::Index>(j) * p, p);
    f += uj.dot(cost_.input_weight_quadratic * uj);
  }
  if (cost_.terminal) {
    const VectorXd xN = cd_.G.back() * u + cd_.g.back();
    f += xN.dot(*cost_.terminal * xN);
  }
  return f;
}

double ObjectiveModel::true_value(const VectorXd& u) const {
  const int np = cd_.horizon;
  const int p = cd_.input_dim;
  double f = 0.0;
  for (int j = 0; j < np; ++j) {
    const VectorXd x = (j == 0)
                           ? x0_
                           : VectorXd(cd_.G[static_cast<size_t>(j - 1)] * u +
                                      cd_.g[static_cast<size_t>(j - 1)]);
    if (cost_.state_weight_quadratic)
      f += x.dot(*cost_.state_weight_quadratic * x);
    if (cost_.state_weight_l1)
      f += *cost_.state_weight_l1 * x.cwiseAbs().sum();
    const VectorXd uj = u.segment(static_cast<Eigen::Index>(j) * p, p);
    f += uj.dot(cost_.input_weight_quadratic * uj);
  }
  if (cost_.terminal) {
    const VectorXd xN = cd_.G.back() * u + cd_.g.back();
    f += xN.dot(*cost_.terminal * xN);
  }
  return f;
}

VectorXd ObjectiveModel::gradient(const VectorXd& u) const {
  const int np = cd_.horizon;
  const int p = cd_.input_dim;
  VectorXd grad = VectorXd::Zero(u.size());
  for (int j = 1; j < np; ++j) {
    const MatrixXd& Gj = cd_.G[static_cast<size_t>(j - 1)];
    const VectorXd x = Gj * u + cd_.g[static_cast<size_t>(j - 1)];
    VectorXd dx = VectorXd::Zero(x.size());
    if (cost_.state_weight_quadratic)
      dx += 2.0 * (*cost_.state_weight_quadratic * x);
    if (cost_.state_weight_l1)
      dx += *cost_.state_weight_l1 * x.unaryExpr([this](double v) {
        const double den = std::sqrt(v * v + mu_ * mu_);
        return den > 0.0 ? v / den : 0.0;
      });
    grad += Gj.transpose() * dx;
  }
  if (cost_.terminal) {
    const VectorXd xN = cd_.G.back() * u + cd_.g.back();
    grad += cd_.G.back().transpose() * (2.0 * (*cost_.terminal * xN));
  }
  for (int j = 0; j < np; ++j)
    grad.segment(static_cast<Eigen::Index>(j) * p, p) +=
        2.0 * (cost_.input_weight_quadratic *
               u.segment(static_cast<Eigen::Index>(j) * p, p));
  return grad;
}

MatrixXd ObjectiveModel::hessian(const VectorXd& u) const {
  const int np = cd_.horizon;
  const int p = cd_.input_dim;
  MatrixXd hess = MatrixXd::Zero(u.size(), u.size());
  for (int j = 1; j < np; ++j) {
    const MatrixXd& Gj = cd_.G[static_cast<size_t>(j - 1)];
    if (cost_.state_weight_quadratic)
      hess += 2.0 * (Gj.transpose() * (*cost_.state_weight_quadratic * Gj));
    if (cost_.state_weight_l1) {
      const VectorXd x = Gj * u + cd_.g[static_cast<size_t>(j - 1)];
      const VectorXd d = x.unaryExpr([this](double v) {
        const double den = std::sqrt(v * v + mu_ * mu_);
        return den > 0.0 ? mu_ * mu_ / (den * den * den) : 0.0;
      });
      hess += *cost_.state_weight_l1 *
              (Gj.transpose() * d.asDiagonal() * Gj);
    }
  }
  if (cost_.terminal)
    hess += 2.0 * (cd_.G.back().transpose() * (*cost_.terminal * cd_.G.back()));
  for (int j = 0; j < np; ++j)
    hess.block(static_cast<Eigen::Index>(j) * p,
               static_cast<Eigen::Index>(j) * p, p, p) +=
        2.0 * cost_.input_weight_quadratic;
  return hess;
}

using MatrixXl = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using VectorXl = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

// Extended precision snapshot of one penalty subproblem. Evaluating the
// condensed states cancels most available digits when the plant amplifies
// early inputs, and the smoothed l1 activation divides the tiny remainder by
// mu; in double that puts noise of order 1e-2 on the gradient near the
// optimum, far above the stationarity target. The same arithmetic at long
// double resolution keeps the residual meaningful.
struct LongAlm {
  std::vector<MatrixXl> G;
  std::vector<VectorXl> gaff;
  VectorXl x0;
  int horizon = 0;
  int input_dim = 0;
  std::optional<MatrixXl> Q;
  std::optional<long double> w1;
  MatrixXl R;
  std::optional<MatrixXl> P;
  long double mu = 0.0L;
  bool has_adc = false;
  MatrixXl aH;
  VectorXl ab;
  long double ac = 0.0L;
  long double rho = 0.0L;
  long double mu_adc = 0.0L;
  std::vector<VectorXl> lin_a;
  std::vector<long double> lin_d;
  VectorXl mu_lin;

  long double value_and_grad(const VectorXd& u_in, VectorXl& grad) const {
    const VectorXl u = u_in.cast<long double>();
    const int np = horizon;
    const int p = input_dim;
    long double f = 0.0L;
    grad = VectorXl::Zero(u.size());
    for (int j = 0; j < np; ++j) {
      const VectorXl x = (j == 0)
                             ? x0
                             : VectorXl(G[static_cast<size_t>(j - 1)] * u +
                                        gaff[static_cast<size_t>(j - 1)]);
      VectorXl dx = VectorXl::Zero(x.size());
      if (Q) {
        f += x.dot(*Q * x);
        dx += 2.0L * (*Q * x);
      }
      if (w1) {
        for (Eigen::Index i = 0; i < x.size(); ++i) {
          const long double den = sqrtl(x(i) * x(i) + mu * mu);
          f += *w1 * den;
          dx(i) += *w1 * (den > 0.0L ? x(i) / den : 0.0L);
        }
      }
      if (j >= 1) grad += G[static_cast<size_t>(j - 1)].transpose() * dx;
      const VectorXl uj = u.segment(static_cast<Eigen::Index>(j) * p, p);
      f += uj.dot(R * uj);
      grad.segment(static_cast<Eigen::Index>(j) * p, p) += 2.0L * (R * uj);
    }
    if (P) {
      const VectorXl xN = G.back() * u + gaff.back();
      f += xN.dot(*P * xN);
      grad += G.back().transpose() * (2.0L * (*P * xN));
    }
    if (has_adc) {
      const long double gval = u.dot(aH * u) + 2.0L * ab.dot(u) + ac;
      const long double t = std::max(0.0L, mu_adc + rho * gval);
      f += (t * t - mu_adc * mu_adc) / (2.0L * rho);
      if (t > 0.0L) grad += t * 2.0L * (aH * u + ab);
    }
    for (size_t i = 0; i < lin_a.size(); ++i) {
      const long double gval = lin_a[i].dot(u) + lin_d[i];
      const long double m = mu_lin(static_cast<Eigen::Index>(i));
      const long double t = std::max(0.0L, m + rho * gval);
      f += (t * t - m * m) / (2.0L * rho);
      if (t > 0.0L) grad += t * lin_a[i];
    }
    return f;
  }

  double residual(const VectorXd& u) const {
    VectorXl g(u.size());
    value_and_grad(u, g);
    return static_cast<double>(g.norm());
  }
};

LongAlm make_long_alm(const CondensedDynamics& cd, const CostSpec& cost,
                      const VectorXd& x0, double mu, const AlmProblem& alm) {
  LongAlm l;
  l.G.reserve(cd.G.size());
  for (const MatrixXd& Gj : cd.G) l.G.push_back(Gj.cast<long double>());
  l.gaff.reserve(cd.g.size());
  for (const VectorXd& gj : cd.g) l.gaff.push_back(gj.cast<long double>());
  l.x0 = x0.cast<long double>();
  l.horizon = cd.horizon;
  l.input_dim = cd.input_dim;
  if (cost.state_weight_quadratic)
    l.Q = cost.state_weight_quadratic->cast<long double>();
  if (cost.state_weight_l1)
    l.w1 = static_cast<long double>(*cost.state_weight_l1);
  l.R = cost.input_weight_quadratic.cast<long double>();
  if (cost.terminal) l.P = cost.terminal->cast<long double>();
  l.mu = static_cast<long double>(mu);
  if (alm.adc) {
    l.has_adc = true;
    l.aH = alm.adc->H.cast<long double>();
    l.ab = alm.adc->b.cast<long double>();
    l.ac = static_cast<long double>(alm.adc->c);
  }
  l.rho = static_cast<long double>(alm.rho);
  l.mu_adc = static_cast<long double>(alm.mu_adc);
  if (alm.lin) {
    for (const LinCon& con : *alm.lin) {
      l.lin_a.push_back(con.a.cast<long double>());
      l.lin_d.push_back(static_cast<long double>(con.d));
    }
  }
  l.mu_lin = alm.mu_lin.cast<long double>();
  return l;
}

// Greedy descent of the extended precision gradient norm over representable
// neighbours of the iterate, one coordinate at a time. Returns true if any
// move improved.
bool lattice_descent(const LongAlm& lalm, VectorXd& u, long double& gnorm) {
  const double inf = std::numeric_limits<double>::infinity();
  bool improved = false;
  VectorXl g_try(u.size());
  for (int sweep = 0; sweep < 8; ++sweep) {
    bool any = false;
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      for (int hops : {1, -1, 2, -2, 4, -4}) {
        VectorXd u_try = u;
        double v = u_try(i);
        for (int h = 0; h < std::abs(hops); ++h)
          v = std::nextafter(v, hops > 0 ? inf : -inf);
        u_try(i) = v;
        lalm.value_and_grad(u_try, g_try);
        if (g_try.norm() < gnorm) {
          u = std::move(u_try);
          gnorm = g_try.norm();
          any = true;
          improved = true;
        }
      }
    }
    if (!any) break;
  }
  return improved;
}

// Damped Newton on the exact penalty Hessian, accepted on the extended
// precision gradient norm. Near the optimum of the final smoothing stage the
// remaining objective decrease sits below the floating point resolution of
// the value while the gradient is still large, so a value based line search
// cannot certify progress; the gradient stays well scaled. For a convex
// subproblem the Newton step is a descent direction of the residual norm.
VectorXd newton_polish(const AlmProblem& prob, const LongAlm& lalm, VectorXd u,
                       int max_iter, double gtol, int& iterations) {
  VectorXl gl(u.size());
  lalm.value_and_grad(u, gl);
  long double gnorm = gl.norm();
  for (int it = 0; it < max_iter; ++it) {
    if (gnorm <= static_cast<long double>(gtol)) break;
    MatrixXd h = prob.hessian(u);
    h.diagonal().array() += 1e-14 * (1.0 + h.diagonal().cwiseAbs().maxCoeff());
    const MatrixXl hl = h.cast<long double>();
    const Eigen::LDLT<MatrixXl> ldlt(hl);
    VectorXl dl = ldlt.solve(-gl);
    dl += ldlt.solve(-gl - hl * dl);
    const VectorXd dir = dl.cast<double>();
    double a = 1.0;
    bool accepted = false;
    VectorXd u_try;
    VectorXl g_try(u.size());
    for (int bt = 0; bt < 50; ++bt) {
      u_try = u + a * dir;
      lalm.value_and_grad(u_try, g_try);
      if (g_try.norm() < gnorm &&
          g_try.norm() <= (1.0L - 1e-4L * static_cast<long double>(a)) * gnorm) {
        accepted = true;
        break;
      }
      a *= 0.5;
    }
    ++iterations;
    if (!accepted) {
      // the continuous model is exhausted at this resolution; try the
      // neighbouring representable points directly
      if (!lattice_descent(lalm, u, gnorm)) break;
      lalm.value_and_grad(u, gl);
      gnorm = gl.norm();
    } else {
      u = std::move(u_try);
      gl = g_try;
      gnorm = gl.norm();
    }
  }
  return u;
}

OcpSolution solve_ocp(const std::vector<LinearMode>& modes,
                      const std::vector<int>& mode_sequence, const VectorXd& x0,
                      const OcpSpec& spec, const VectorXd* u_start) {
  validate_modes(modes);
  const int n = modes.front().state_dim();
  const int p = modes.front().input_dim();
  if (spec.horizon < 1) throw std::invalid_argument("solve_ocp: horizon >= 1 required");
  if (static_cast<int>(mode_sequence.size()) != spec.horizon)
    throw std::invalid_argument("solve_ocp: mode sequence length must equal horizon");
  validate_cost(spec.cost, n, p);
  if (spec.input_box) validate_box(*spec.input_box, p, "input box");
  if (spec.state_box) validate_box(*spec.state_box, n, "state box");
  if (spec.terminal_box) validate_box(*spec.terminal_box, n, "terminal box");

  const int np = spec.horizon;
  const Eigen::Index dim = static_cast<Eigen::Index>(np) * p;

  CondensedDynamics cd = condense_dynamics(modes, mode_sequence, x0);
  std::optional<AdcQuadratic> adcq;
  if (spec.adc) {
    adcq = condense_adc(cd, *spec.adc, x0);
    // tighten inside the solver so the returned plan lands strictly inside
    // the descent set; the shift stays two orders below the feasibility
    // promise and spares a posteriori corrections that would disturb the
    // stationarity of the smoothed objective
    if (x0.squaredNorm() > 0.0) adcq->c += 4e-9 * x0.squaredNorm();
  }

  // affine box rows
  std::vector<LinCon> lin;
  auto add_bound = [&lin, dim](const VectorXd& row, double offs, double lo,
                               double hi, int coordinate, bool on_state) {
    if (std::isfinite(hi)) lin.push_back({row, offs - hi, coordinate, on_state});
    if (std::isfinite(lo)) lin.push_back({-row, lo - offs, coordinate, on_state});
  };
  if (spec.input_box) {
    for (int j = 0; j < np; ++j)
      for (int i = 0; i < p; ++i) {
        VectorXd e = VectorXd::Zero(dim);
        e(static_cast<Eigen::Index>(j) * p + i) = 1.0;
        add_bound(e, 0.0, spec.input_box->lo(i), spec.input_box->hi(i), j * p + i,
                  false);
      }
  }
  auto add_state_rows = [&](const Box& box, int j) {
    const MatrixXd& Gj = cd.G[static_cast<size_t>(j - 1)];
    const VectorXd& gj = cd.g[static_cast<size_t>(j - 1)];
    for (int c = 0; c < n; ++c)
      add_bound(Gj.row(c).transpose(), gj(c), box.lo(c), box.hi(c),
                (j - 1) * n + c, true);
  };
  if (spec.state_box)
    for (int j = 1; j < np; ++j) add_state_rows(*spec.state_box, j);
  if (spec.terminal_box) add_state_rows(*spec.terminal_box, np);

  // start point: caller's, else certificate feedback rollout, else zero
  VectorXd u0(dim);
  if (u_start) {
    if (u_start->size() != dim)
      throw std::invalid_argument("solve_ocp: warm start length mismatch");
    u0 = *u_start;
  } else {
    bool all_gains = true;
    for (int t : mode_sequence)
      if (!modes[static_cast<size_t>(t)].K) all_gains = false;
    if (all_gains) {
      VectorXd x = x0;
      for (int j = 0; j < np; ++j) {
        const LinearMode& md = modes[static_cast<size_t>(mode_sequence[static_cast<size_t>(j)])];
        const VectorXd uj = *md.K * x;
        u0.segment(static_cast<Eigen::Index>(j) * p, p) = uj;
        x = md.A * x + md.B * uj;
      }
    } else {
      u0.setZero();
    }
  }
  for (const LinCon& con : lin) {
    const double v = con.a.dot(u0) + con.d;
    if (v > 1e-9)
      throw FeasibilityError(std::string("start point violates ") +
                                 (con.on_state ? "state" : "input") +
                                 " bound at coordinate " +
                                 std::to_string(con.coordinate),
                             con.coordinate);
  }

  const bool has_l1 = spec.cost.state_weight_l1.has_value() &&
                      *spec.cost.state_weight_l1 > 0.0;
  const std::vector<double> schedule =
      has_l1 ? std::vector<double>{1e-2, 1e-4, 1e-6} : std::vector<double>{0.0};

  OcpSolution sol;
  AlmProblem alm;
  alm.adc = adcq ? &*adcq : nullptr;
  alm.lin = &lin;
  alm.mu_lin = VectorXd::Zero(static_cast<Eigen::Index>(lin.size()));
  alm.adc_scale = x0.squaredNorm() > 0.0 ? x0.squaredNorm() : 1.0;

  VectorXd u = u0;
  std::optional<ObjectiveModel> om;
  double threshold = 0.0;

  for (size_t stage = 0; stage < schedule.size(); ++stage) {
    om.emplace(cd, spec.cost, x0, schedule[stage]);
    alm.obj = &*om;
    if (stage == 0) {
      VectorXd g0(dim);
      alm.value_and_grad(u0, g0);
      threshold = 1e-6 * (1.0 + g0.norm());
    }
    double viol_prev = std::numeric_limits<double>::infinity();
    for (int outer = 0; outer < kOuterCap; ++outer) {
      VectorXd gs(dim);
      alm.value_and_grad(u, gs);
      const double gtol = std::max(1e-10, 1e-8 * gs.norm());
      DescentState st = lbfgs_minimize(alm, u, kInnerCap, gtol);
      u = st.u;
      sol.iterations += st.iterations;
      const double viol = alm.max_violation(u);
      alm.update_multipliers(u);
      if (viol <= kFeasTarget) break;
      if (viol > 0.3 * viol_prev) alm.rho = std::min(alm.rho * 10.0, kRhoCap);
      viol_prev = viol;
    }
    sol.stage_objectives.push_back(om->true_value(u));
  }

  // polish stationarity down to the promised threshold, refreshing the
  // multipliers whenever the sharper iterate exposes residual violation
  for (int round = 0; round < 12; ++round) {
    const LongAlm lalm = make_long_alm(cd, spec.cost, x0, schedule.back(), alm);
    const double res = lalm.residual(u);
    if (res <= 0.5 * threshold && alm.max_violation(u) <= kFeasTarget) break;
    if (round == 0) {
      DescentState st = lbfgs_minimize(alm, u, 1000, 0.25 * threshold);
      u = st.u;
      sol.iterations += st.iterations;
    } else {
      int iters = 0;
      u = newton_polish(alm, lalm, std::move(u), 100, 0.25 * threshold, iters);
      sol.iterations += iters;
    }
    if (alm.max_violation(u) > kFeasTarget) alm.update_multipliers(u);
  }

  sol.inputs = u;
  sol.states = rollout_states(modes, mode_sequence, x0, u);
  sol.objective = om->true_value(u);
  sol.stage_objectives.back() = sol.objective;
  if (spec.adc) {
    double acc = 0.0;
    for (int i = 0; i < spec.adc->lambda.size(); ++i)
      acc += spec.adc->lambda(i) * sol.states[static_cast<size_t>(i)].squaredNorm();
    sol.adc_slack = acc - (1.0 - spec.adc->epsilon) * x0.squaredNorm();
  }
  const LongAlm lfin = make_long_alm(cd, spec.cost, x0, schedule.back(), alm);
  sol.kkt_residual = lfin.residual(u);
  sol.stationarity_threshold = threshold;

  if (sol.adc_slack > kFeasTol)
    throw ConvergenceError("descent constraint violated at exit", sol.adc_slack);
  for (const LinCon& con : lin) {
    const double v = con.a.dot(u) + con.d;
    if (v > kFeasTol)
      throw ConvergenceError("bound violated at exit", v);
  }
  return sol;
}

OcpSolution solve_ocp(const SwitchedScenario& scenario, int k, const VectorXd& x,
                      const VectorXd* u_start) {
  const auto seq = window_mode_sequence(scenario.signal, k, scenario.ocp.horizon,
                                        static_cast<int>(scenario.modes.size()));
  return solve_ocp(scenario.modes, seq, x, scenario.ocp, u_start);
}

}  // namespace flexmpc
