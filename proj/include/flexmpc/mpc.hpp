#pragma once

#include <Eigen/Dense>
#include <vector>

#include "flexmpc/gdclf.hpp"
#include "flexmpc/ocp.hpp"
#include "flexmpc/system.hpp"

namespace flexmpc {

// Pick the step length from predicted window values V(x^1)..V(x^m) given
// V(x^0): qualifying 1-based indices satisfy V(x^j) <= (1-epsilon) V(x^0).
// FirstDescent takes the smallest qualifying index, MaxDescent the one with
// the smallest V (ties to the smaller index). No qualifying index is an
// algorithm invariant violation.
int select_step(const std::vector<double>& window_V, double V0, double epsilon,
                StepPolicy policy);

struct MpcTrace {
  int state_dim = 0;
  int input_dim = 0;
  std::vector<int> instants;         // k at each solve, instants[0] = 0
  std::vector<VectorXd> states;      // state at every time instant 0..K_end
  std::vector<VectorXd> inputs;      // input applied at 0..K_end-1
  std::vector<int> steps;            // block length chosen at each solve
  std::vector<double> V_values;      // V at each solve instant
  std::vector<OcpSolution> solves;   // per-instance diagnostics; empty solve
                                     // entries mark skipped x = 0 instances

  int final_instant() const { return static_cast<int>(states.size()) - 1; }
  const VectorXd& final_state() const { return states.back(); }
};

// Flexible-step closed loop: at instant k solve the OCP with the averaged
// descent constraint, pick a step length l with guaranteed value decrease,
// implement the first l inputs, advance k by l. Instances repeat while
// k < T; the last block runs to completion, so the trace may end past T.
// At x = 0 the solve is skipped and a single zero input is applied.
MpcTrace flexible_step_run(const SwitchedScenario& scenario,
                           const GdclfCertificate& certificate,
                           StepPolicy policy, int T);

// Receding-horizon baseline: one step per solve, no descent constraint,
// quadratic terminal weight. The prediction holds the mode active at k for
// the whole horizon; the plant follows the true switching signal.
MpcTrace standard_mpc_run(const SwitchedScenario& scenario,
                          const MatrixXd& terminal, int T);

}  // namespace flexmpc
