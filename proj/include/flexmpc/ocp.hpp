#pragma once

#include <Eigen/Dense>
#include <vector>

#include "flexmpc/system.hpp"

namespace flexmpc {

// Stacked affine prediction x^j = G[j-1] u + g[j-1] for j = 1..Np, where u is
// the stacked input sequence (u^0; ...; u^{Np-1}) and the modes along the
// window are fixed.
struct CondensedDynamics {
  std::vector<MatrixXd> G;  // n x (Np*p) each
  std::vector<VectorXd> g;  // n each
  int horizon = 0;
  int state_dim = 0;
  int input_dim = 0;
};

CondensedDynamics condense_dynamics(const std::vector<LinearMode>& modes,
                                    const std::vector<int>& mode_sequence,
                                    const VectorXd& x0);

// The averaged descent constraint as an explicit quadratic in the stacked
// input: value(u) = u'Hu + 2 b'u + c = sum_i lambda_i ||x^i(u)||^2
// - (1-epsilon) ||x0||^2, feasible iff <= 0. Convex since lambda >= 0.
struct AdcQuadratic {
  MatrixXd H;
  VectorXd b;
  double c = 0.0;

  double value(const VectorXd& u) const {
    return u.dot(H * u) + 2.0 * b.dot(u) + c;
  }
  VectorXd gradient(const VectorXd& u) const { return 2.0 * (H * u + b); }
};

AdcQuadratic condense_adc(const CondensedDynamics& cd, const AdcSpec& adc,
                          const VectorXd& x0);

// States produced by stepping the dynamics forward under the stacked inputs,
// x^1..x^Np. The MPC loop applies the identical recursion, so predicted and
// implemented states agree bit for bit.
std::vector<VectorXd> rollout_states(const std::vector<LinearMode>& modes,
                                     const std::vector<int>& mode_sequence,
                                     const VectorXd& x0, const VectorXd& u_stacked);

// Objective as a function of the stacked input, with every l1 state term
// replaced by the smooth surrogate sum_i sqrt(x_i^2 + mu^2). true_value
// evaluates the exact l1 objective instead.
class ObjectiveModel {
 public:
  ObjectiveModel(CondensedDynamics cd, CostSpec cost, VectorXd x0, double mu);

  double value(const VectorXd& u) const;
  VectorXd gradient(const VectorXd& u) const;
  MatrixXd hessian(const VectorXd& u) const;
  double true_value(const VectorXd& u) const;

 private:
  CondensedDynamics cd_;
  CostSpec cost_;
  VectorXd x0_;
  double mu_;
};

struct OcpSolution {
  VectorXd inputs;               // stacked u^0..u^{Np-1}
  std::vector<VectorXd> states;  // x^1..x^Np
  double objective = 0.0;
  double adc_slack = 0.0;     // constraint value at the solution; 0 if no adc
  double kkt_residual = 0.0;  // sup-norm augmented-Lagrangian gradient at exit
  double stationarity_threshold = 0.0;  // 1e-6 * (1 + gradient norm at start)
  int iterations = 0;                   // inner descent iterations, all stages
  std::vector<double> stage_objectives;  // exact objective after each stage
};

// Solve the finite-horizon problem
//   min  sum_{j=0}^{Np-1} ( x^j'Qx^j + w1 ||x^j||_1 + u^j'Ru^j ) + x^Np'P x^Np
//   s.t. x^{j+1} = A_j x^j + B_j u^j,  input/state/terminal boxes,
//        averaged descent constraint,
// with an augmented Lagrangian over the constraints, limited-memory
// quasi-Newton inner descent, and continuation over the l1 smoothing
// parameter. The start point is `u_start` when given, otherwise the feedback
// rollout u^j = K x^j when every window mode carries a gain, otherwise zero.
// A start violating a box throws FeasibilityError with the flat coordinate;
// failure to reach feasibility throws ConvergenceError.
OcpSolution solve_ocp(const std::vector<LinearMode>& modes,
                      const std::vector<int>& mode_sequence, const VectorXd& x0,
                      const OcpSpec& spec, const VectorXd* u_start = nullptr);

// Window taken from the scenario's switching signal starting at instant k.
OcpSolution solve_ocp(const SwitchedScenario& scenario, int k, const VectorXd& x,
                      const VectorXd* u_start = nullptr);

}  // namespace flexmpc
