// Command line front end: certificate synthesis, flexible-step MPC runs,
// fixed-terminal comparison runs, and the quadratic-CLF falsifier.
//
// Exit codes: 0 success, 2 usage or scenario errors, 3 infeasible synthesis
// or invalid certificate, 4 solver abort at runtime.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flexmpc/errors.hpp"
#include "flexmpc/gdclf.hpp"
#include "flexmpc/linalg.hpp"
#include "flexmpc/mpc.hpp"
#include "flexmpc/ocp.hpp"
#include "flexmpc/scenario.hpp"
#include "flexmpc/system.hpp"
#include "flexmpc/trace_io.hpp"

namespace {

using namespace flexmpc;

// Modes with feedback gains filled in; missing gains get an LQR design with
// unit weights so synthesis always has a closed loop to certify.
std::vector<LinearMode> armed_modes(const SwitchedScenario& sc) {
  std::vector<LinearMode> modes = sc.modes;
  for (auto& md : modes) {
    if (md.K) continue;
    const MatrixXd Q = MatrixXd::Identity(md.state_dim(), md.state_dim());
    const MatrixXd R = MatrixXd::Identity(md.input_dim(), md.input_dim());
    md.K = lqr_gain(md.A, md.B, Q, R);
  }
  return modes;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << text;
}

std::string num_short(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

int run_synth(const std::string& scenario_path, std::optional<int> m_opt,
              std::optional<int> m_max, std::optional<double> eps_opt,
              unsigned seed, const std::string& out_path) {
  const SwitchedScenario sc = load_scenario(scenario_path);
  const std::vector<LinearMode> modes = armed_modes(sc);
  const double epsilon = eps_opt.value_or(sc.epsilon);

  if (!m_opt && m_max) {
    const std::optional<int> found = minimal_window(modes, *m_max, epsilon, seed);
    if (!found) {
      std::cerr << "no feasible certificate up to window order " << *m_max << "\n";
      return 3;
    }
    std::cout << "minimal feasible window order: " << *found << "\n";
    const SynthesisResult res = synthesize(modes, *found, epsilon, seed);
    write_text(out_path, certificate_to_json(*res.certificate));
    std::cout << "margin: " << num_short(res.best_margin) << "\n";
    return 0;
  }

  const int m = m_opt.value_or(sc.m);
  const SynthesisResult res = synthesize(modes, m, epsilon, seed);
  if (!res.feasible) {
    std::cerr << "infeasible at window order " << m
              << ": best margin " << num_short(res.best_margin) << "\n";
    return 3;
  }
  write_text(out_path, certificate_to_json(*res.certificate));
  std::cout << "feasible at window order " << m
            << ", margin " << num_short(res.best_margin) << "\n";
  return 0;
}

void print_run_summary(const MpcTrace& trace) {
  std::cout << "final instant: " << trace.final_instant() << "\n";
  std::cout << "final state norm: " << num_short(trace.final_state().norm()) << "\n";
  std::cout << "instances: " << trace.steps.size() << "\n";
  std::map<int, int> hist;
  for (int s : trace.steps) ++hist[s];
  std::cout << "step histogram:";
  for (const auto& [len, count] : hist) std::cout << " " << len << ":" << count;
  std::cout << "\n";
}

int run_mpc(const std::string& scenario_path, const std::string& policy_name,
            std::optional<int> T_opt, const std::string& cert_spec,
            const std::string& out_path, unsigned seed) {
  const SwitchedScenario sc = load_scenario(scenario_path);
  const std::vector<LinearMode> modes = armed_modes(sc);

  GdclfCertificate cert;
  if (cert_spec == "auto") {
    const SynthesisResult res = synthesize(modes, sc.m, sc.epsilon, seed);
    if (!res.feasible) {
      std::cerr << "certificate synthesis infeasible: best margin "
                << num_short(res.best_margin) << "\n";
      return 3;
    }
    cert = *res.certificate;
  } else {
    cert = load_certificate(cert_spec);
  }

  double margin = 0.0;
  try {
    margin = verify_certificate(sc.modes, cert);
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid certificate: " << e.what() << "\n";
    return 3;
  }
  if (margin < -1e-9) {
    std::cerr << "invalid certificate: margin " << num_short(margin) << "\n";
    return 3;
  }

  StepPolicy policy = sc.policy;
  if (policy_name == "first") policy = StepPolicy::FirstDescent;
  else if (policy_name == "max") policy = StepPolicy::MaxDescent;
  else if (!policy_name.empty())
    throw CLI::ValidationError("--policy", "expected first or max");

  const int T = T_opt.value_or(sc.simulation_length);
  const MpcTrace trace = flexible_step_run(sc, cert, policy, T);
  write_trace_csv(trace, out_path);
  print_run_summary(trace);
  return 0;
}

MatrixXd parse_terminal(const SwitchedScenario& sc, const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos)
    throw CLI::ValidationError("--terminal", "expected riccati:<label> or scale:<c>");
  const std::string kind = spec.substr(0, colon);
  const std::string arg = spec.substr(colon + 1);
  const int n = sc.state_dim();
  if (kind == "scale") {
    size_t pos = 0;
    double c = 0.0;
    try {
      c = std::stod(arg, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != arg.size() || !(c > 0.0))
      throw CLI::ValidationError("--terminal", "scale:<c> needs a positive number");
    return c * MatrixXd::Identity(n, n);
  }
  if (kind != "riccati")
    throw CLI::ValidationError("--terminal", "unknown form " + kind);
  for (const auto& md : sc.modes) {
    if (md.label != arg) continue;
    const MatrixXd Q = sc.ocp.cost.state_weight_quadratic
                           ? *sc.ocp.cost.state_weight_quadratic
                           : MatrixXd::Identity(n, n);
    return dare_solve(md.A, md.B, Q, sc.ocp.cost.input_weight_quadratic);
  }
  throw CLI::ValidationError("--terminal", "no mode labeled " + arg);
}

int run_compare(const std::string& scenario_path, const std::string& terminal_spec,
                std::optional<int> T_opt, const std::string& out_path) {
  const SwitchedScenario sc = load_scenario(scenario_path);
  const MatrixXd terminal = parse_terminal(sc, terminal_spec);
  const int T = T_opt.value_or(sc.simulation_length);
  const MpcTrace trace = standard_mpc_run(sc, terminal, T);
  write_trace_csv(trace, out_path);
  const double x0_norm = sc.x0.norm();
  const double xT_norm = trace.final_state().norm();
  std::cout << "initial state norm: " << num_short(x0_norm) << "\n";
  std::cout << "final state norm: " << num_short(xT_norm) << "\n";
  if (xT_norm > x0_norm)
    std::cout << "flag: trajectory did not converge (final norm exceeds initial)\n";
  else
    std::cout << "trajectory converged toward the origin\n";
  return 0;
}

std::string falsification_to_json(const FalsificationReport& rep) {
  std::string out = "{\n";
  out += "  \"grid\": {\"q_lo\": " + num_short(rep.q_lo) +
         ", \"q_hi\": " + num_short(rep.q_hi) + ", \"r_hi\": " + num_short(rep.r_hi) +
         ", \"step\": " + num_short(rep.step) + "},\n";
  out += "  \"pd_points\": " + std::to_string(rep.pd_points) + ",\n";
  out += "  \"certified_points\": " + std::to_string(rep.certified_points) + ",\n";
  out += "  \"flagged_points\": " + std::to_string(rep.flagged_points) + ",\n";
  out += std::string("  \"conclusion\": ") +
         (rep.common_clf_found() ? "\"common quadratic Lyapunov function found\""
                                 : "\"none found\"") +
         ",\n";
  out += "  \"witnesses\": [";
  for (size_t i = 0; i < rep.witnesses.size(); ++i) {
    if (i) out += ", ";
    out += "{\"q\": " + num_short(rep.witnesses[i].q) +
           ", \"r\": " + num_short(rep.witnesses[i].r) + "}";
  }
  out += "]\n}\n";
  return out;
}

int run_falsify(const std::string& scenario_path, double q_lo, double q_hi,
                double r_hi, double step, const std::string& out_path) {
  const SwitchedScenario sc = load_scenario(scenario_path);
  const FalsificationReport rep =
      falsify_common_quadratic(sc.modes, q_lo, q_hi, r_hi, step);
  if (rep.pd_points == 0) {
    std::cerr << "empty grid: no positive definite candidates in the range\n";
    return 2;
  }
  write_text(out_path, falsification_to_json(rep));
  if (rep.common_clf_found()) {
    std::cout << "common quadratic Lyapunov function found at";
    for (const auto& w : rep.witnesses)
      std::cout << " (q=" << num_short(w.q) << ", r=" << num_short(w.r) << ")";
    std::cout << "\n";
  } else {
    std::cout << "conclusion: none found (" << rep.pd_points
              << " candidates refuted)\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"g-dclf certificate synthesis and flexible-step MPC"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string out_path;

  auto* synth = app.add_subcommand("synth", "synthesize a window certificate");
  std::optional<int> synth_m, synth_m_max;
  std::optional<double> synth_eps;
  unsigned synth_seed = 0;
  synth->add_option("scenario", scenario_path, "scenario JSON file")->required();
  synth->add_option("--m", synth_m, "window order");
  synth->add_option("--m-max", synth_m_max, "scan window orders 1..m-max");
  synth->add_option("--epsilon", synth_eps, "decrease rate in (0,1)");
  synth->add_option("--seed", synth_seed, "restart seed");
  synth->add_option("--out", out_path, "certificate output file (default stdout)");

  auto* mpc = app.add_subcommand("mpc", "run flexible-step MPC");
  std::string mpc_policy, mpc_cert = "auto", mpc_out = "trace.csv";
  std::optional<int> mpc_T;
  unsigned mpc_seed = 0;
  mpc->add_option("scenario", scenario_path, "scenario JSON file")->required();
  mpc->add_option("--policy", mpc_policy, "first or max (default from scenario)");
  mpc->add_option("--T", mpc_T, "minimum instants to cover");
  mpc->add_option("--cert", mpc_cert, "certificate file, or auto to synthesize");
  mpc->add_option("--seed", mpc_seed, "seed for auto synthesis");
  mpc->add_option("--out", mpc_out, "trace CSV path");

  auto* compare = app.add_subcommand("compare", "run fixed-terminal one-step MPC");
  std::string cmp_terminal, cmp_out = "compare.csv";
  std::optional<int> cmp_T;
  compare->add_option("scenario", scenario_path, "scenario JSON file")->required();
  compare->add_option("--terminal", cmp_terminal, "riccati:<label> or scale:<c>")
      ->required();
  compare->add_option("--T", cmp_T, "instants to simulate");
  compare->add_option("--out", cmp_out, "trace CSV path");

  auto* falsify = app.add_subcommand("falsify", "grid search for a common CLF");
  std::vector<double> q_range{-3.0, 3.0};
  double r_hi = 10.0, grid_step = 0.05;
  falsify->add_option("scenario", scenario_path, "scenario JSON file")->required();
  falsify->add_option("--q-range", q_range, "off-diagonal range lo hi")
      ->expected(2);
  falsify->add_option("--r-range", r_hi, "upper bound for the (2,2) entry");
  falsify->add_option("--step", grid_step, "grid resolution");
  falsify->add_option("--out", out_path, "report output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed())
      return run_synth(scenario_path, synth_m, synth_m_max, synth_eps, synth_seed,
                       out_path);
    if (mpc->parsed())
      return run_mpc(scenario_path, mpc_policy, mpc_T, mpc_cert, mpc_out, mpc_seed);
    if (compare->parsed())
      return run_compare(scenario_path, cmp_terminal, cmp_T, cmp_out);
    if (falsify->parsed())
      return run_falsify(scenario_path, q_range[0], q_range[1], r_hi, grid_step,
                         out_path);
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const ScenarioParseError& e) {
    std::cerr << "scenario error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConvergenceError& e) {
    std::cerr << "solver abort: " << e.what() << "\n";
    return 4;
  } catch (const FeasibilityError& e) {
    std::cerr << "solver abort: " << e.what() << "\n";
    return 4;
  } catch (const AlgorithmInvariantError& e) {
    std::cerr << "solver abort: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
