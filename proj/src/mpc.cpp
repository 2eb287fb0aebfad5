#include "flexmpc/mpc.hpp"

#include <cmath>
#include <string>

#include "flexmpc/errors.hpp"

namespace flexmpc {

int select_step(const std::vector<double>& window_V, double V0, double epsilon,
                StepPolicy policy) {
  if (window_V.empty())
    throw std::invalid_argument("select_step: empty window");
  const double bar = (1.0 - epsilon) * V0;
  int pick = -1;
  for (int j = 1; j <= static_cast<int>(window_V.size()); ++j) {
    const double v = window_V[static_cast<size_t>(j - 1)];
    if (v > bar) continue;
    if (policy == StepPolicy::FirstDescent) return j;
    if (pick < 0 || v < window_V[static_cast<size_t>(pick - 1)]) pick = j;
  }
  if (pick < 0)
    throw AlgorithmInvariantError(
        "no window index achieves the required value decrease (V0 = " +
        std::to_string(V0) + ")");
  return pick;
}

MpcTrace flexible_step_run(const SwitchedScenario& scenario,
                           const GdclfCertificate& certificate, StepPolicy policy,
                           int T) {
  validate_modes(scenario.modes);
  const int n = scenario.state_dim();
  const int p = scenario.input_dim();
  const int np = scenario.ocp.horizon;
  const int m = certificate.m;
  if (m < 1 || m != static_cast<int>(certificate.lambda.size()))
    throw std::invalid_argument("certificate order disagrees with weight count");
  if (m > np)
    throw std::invalid_argument("certificate window exceeds the horizon");
  if (certificate.gains.size() != scenario.modes.size())
    throw std::invalid_argument("certificate gain count disagrees with mode count");
  if (scenario.x0.size() != n)
    throw std::invalid_argument("initial state dimension mismatch");

  std::vector<LinearMode> modes = scenario.modes;
  for (size_t t = 0; t < modes.size(); ++t) modes[t].K = certificate.gains[t];

  OcpSpec spec = scenario.ocp;
  spec.adc = AdcSpec{certificate.lambda, certificate.epsilon};

  MpcTrace trace;
  trace.state_dim = n;
  trace.input_dim = p;
  trace.states.push_back(scenario.x0);

  VectorXd prev_u;
  int prev_step = 0;
  int k = 0;
  while (k < T) {
    const VectorXd x = trace.states.back();
    const double V0 = x.squaredNorm();
    trace.instants.push_back(k);
    trace.V_values.push_back(V0);

    if (V0 == 0.0) {
      trace.solves.emplace_back();
      trace.steps.push_back(1);
      trace.inputs.push_back(VectorXd::Zero(p));
      trace.states.push_back(VectorXd::Zero(n));
      prev_u.resize(0);
      k += 1;
      continue;
    }

    const auto seq = window_mode_sequence(scenario.signal, k, np,
                                          static_cast<int>(modes.size()));

    // shift the previous plan, pad the tail with the certificate feedback
    VectorXd warm;
    if (prev_u.size() == static_cast<Eigen::Index>(np) * p && prev_step < np) {
      warm.resize(static_cast<Eigen::Index>(np) * p);
      const int keep = np - prev_step;
      warm.head(static_cast<Eigen::Index>(keep) * p) =
          prev_u.tail(static_cast<Eigen::Index>(keep) * p);
      VectorXd xw = x;
      for (int j = 0; j < np; ++j) {
        const LinearMode& md = modes[static_cast<size_t>(seq[static_cast<size_t>(j)])];
        VectorXd uj;
        if (j < keep) {
          uj = warm.segment(static_cast<Eigen::Index>(j) * p, p);
        } else {
          uj = *md.K * xw;
          warm.segment(static_cast<Eigen::Index>(j) * p, p) = uj;
        }
        xw = md.A * xw + md.B * uj;
      }
    }

    const std::string where = "instance " + std::to_string(trace.steps.size()) +
                              " (k=" + std::to_string(k) + "): ";
    OcpSolution sol;
    int step = 0;
    try {
      sol = solve_ocp(modes, seq, x, spec, warm.size() > 0 ? &warm : nullptr);
      std::vector<double> window_V(static_cast<size_t>(m));
      for (int j = 0; j < m; ++j)
        window_V[static_cast<size_t>(j)] =
            sol.states[static_cast<size_t>(j)].squaredNorm();
      step = select_step(window_V, V0, certificate.epsilon, policy);
    } catch (const ConvergenceError& e) {
      throw ConvergenceError(where + e.what(), e.residual);
    } catch (const FeasibilityError& e) {
      throw FeasibilityError(where + e.what(), e.coordinate);
    } catch (const AlgorithmInvariantError& e) {
      throw AlgorithmInvariantError(where + e.what());
    }

    for (int j = 0; j < step; ++j) {
      trace.inputs.push_back(sol.inputs.segment(static_cast<Eigen::Index>(j) * p, p));
      trace.states.push_back(sol.states[static_cast<size_t>(j)]);
    }
    trace.steps.push_back(step);
    prev_u = sol.inputs;
    prev_step = step;
    trace.solves.push_back(std::move(sol));
    k += step;
  }
  return trace;
}

MpcTrace standard_mpc_run(const SwitchedScenario& scenario, const MatrixXd& terminal,
                          int T) {
  validate_modes(scenario.modes);
  const int n = scenario.state_dim();
  const int p = scenario.input_dim();
  const int np = scenario.ocp.horizon;
  if (scenario.x0.size() != n)
    throw std::invalid_argument("initial state dimension mismatch");

  OcpSpec spec = scenario.ocp;
  spec.adc.reset();
  spec.cost.terminal = terminal;

  MpcTrace trace;
  trace.state_dim = n;
  trace.input_dim = p;
  trace.states.push_back(scenario.x0);

  int k = 0;
  while (k < T) {
    const VectorXd x = trace.states.back();
    trace.instants.push_back(k);
    trace.V_values.push_back(x.squaredNorm());

    if (x.squaredNorm() == 0.0) {
      trace.solves.emplace_back();
      trace.steps.push_back(1);
      trace.inputs.push_back(VectorXd::Zero(p));
      trace.states.push_back(VectorXd::Zero(n));
      k += 1;
      continue;
    }

    // the prediction freezes the mode active now; the plant still switches
    const std::vector<int> frozen(
        static_cast<size_t>(np),
        window_mode_sequence(scenario.signal, k, 1,
                             static_cast<int>(scenario.modes.size()))[0]);

    OcpSolution sol = solve_ocp(scenario.modes, frozen, x, spec, nullptr);
    trace.inputs.push_back(sol.inputs.head(p));
    trace.states.push_back(sol.states.front());
    trace.steps.push_back(1);
    trace.solves.push_back(std::move(sol));
    k += 1;
  }
  return trace;
}

}  // namespace flexmpc
