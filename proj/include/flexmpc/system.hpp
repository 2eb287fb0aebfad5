#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "flexmpc/errors.hpp"

namespace flexmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// One mode of a switched linear system x+ = A x + B u, with an optional
// stabilizing feedback gain u = K x attached.
struct LinearMode {
  MatrixXd A;
  MatrixXd B;
  std::optional<MatrixXd> K;
  std::string label;

  int state_dim() const { return static_cast<int>(A.rows()); }
  int input_dim() const { return static_cast<int>(B.cols()); }
};

// Mode index as a function of the time instant k.
struct ConstantSignal {
  int mode = 0;
};
struct ParitySignal {
  int even_mode = 0;
  int odd_mode = 1;
  int offset = 0;  // parity evaluated on k + offset
};
struct PeriodicSignal {
  std::vector<int> pattern;  // mode at k is pattern[k % pattern.size()]
};
struct TableSignal {
  std::map<int, int> entries;  // explicit k -> mode
};

class SwitchingSignal {
 public:
  SwitchingSignal() : rule_(ConstantSignal{}) {}
  explicit SwitchingSignal(ConstantSignal r) : rule_(r) {}
  explicit SwitchingSignal(ParitySignal r) : rule_(r) {}
  explicit SwitchingSignal(PeriodicSignal r) : rule_(std::move(r)) {
    if (std::get<PeriodicSignal>(rule_).pattern.empty())
      throw std::invalid_argument("SwitchingSignal: empty periodic pattern");
  }
  explicit SwitchingSignal(TableSignal r) : rule_(std::move(r)) {}

  int mode_at(int k) const {
    if (auto* c = std::get_if<ConstantSignal>(&rule_)) return c->mode;
    if (auto* p = std::get_if<ParitySignal>(&rule_)) {
      int s = k + p->offset;
      return (s % 2 == 0) ? p->even_mode : p->odd_mode;
    }
    if (auto* q = std::get_if<PeriodicSignal>(&rule_)) {
      int n = static_cast<int>(q->pattern.size());
      int r = k % n;
      if (r < 0) r += n;
      return q->pattern[static_cast<size_t>(r)];
    }
    const auto& t = std::get<TableSignal>(rule_);
    auto it = t.entries.find(k);
    if (it == t.entries.end())
      throw std::invalid_argument("SwitchingSignal: no mode defined at k=" +
                                  std::to_string(k));
    return it->second;
  }

  using Rule = std::variant<ConstantSignal, ParitySignal, PeriodicSignal, TableSignal>;
  const Rule& rule() const { return rule_; }

 private:
  Rule rule_;
};

struct Box {
  VectorXd lo;
  VectorXd hi;
};

// Stage cost sum_j ( x'Qx + w1*||x||_1 + u'Ru ) plus optional terminal x'Px.
struct CostSpec {
  std::optional<MatrixXd> state_weight_quadratic;
  std::optional<double> state_weight_l1;
  MatrixXd input_weight_quadratic;
  std::optional<MatrixXd> terminal;
};

// Averaged descent condition over the prediction window:
// sum_i lambda_i ||x^i||^2 - ||x^0||^2 <= -epsilon ||x^0||^2.
struct AdcSpec {
  VectorXd lambda;
  double epsilon = 0.0;
};

struct OcpSpec {
  int horizon = 0;  // Np
  CostSpec cost;
  std::optional<Box> input_box;
  std::optional<Box> state_box;     // applied at j = 1 .. Np-1
  std::optional<Box> terminal_box;  // applied at j = Np
  std::optional<AdcSpec> adc;
};

enum class StepPolicy { FirstDescent, MaxDescent };

// A full closed-loop problem instance: plant, switching rule, initial state,
// the optimal control problem solved at each MPC instant, and the experiment
// settings (certificate order, descent margin, run length, step policy).
struct SwitchedScenario {
  std::string name;
  std::vector<LinearMode> modes;
  SwitchingSignal signal;
  VectorXd x0;
  OcpSpec ocp;
  int m = 0;
  double epsilon = 0.0;
  int simulation_length = 0;
  StepPolicy policy = StepPolicy::FirstDescent;

  int state_dim() const {
    return modes.empty() ? 0 : modes.front().state_dim();
  }
  int input_dim() const {
    return modes.empty() ? 0 : modes.front().input_dim();
  }
};

// Mode indices over the prediction window [k, k+horizon-1]. Undefined signal
// instants or out-of-range indices are domain errors.
inline std::vector<int> window_mode_sequence(const SwitchingSignal& signal, int k,
                                             int horizon, int mode_count) {
  std::vector<int> seq(static_cast<size_t>(horizon));
  for (int j = 0; j < horizon; ++j) {
    int t = signal.mode_at(k + j);
    if (t < 0 || t >= mode_count)
      throw std::invalid_argument("switching signal selects mode " +
                                  std::to_string(t) + " outside the family at k=" +
                                  std::to_string(k + j));
    seq[static_cast<size_t>(j)] = t;
  }
  return seq;
}

inline void validate_modes(const std::vector<LinearMode>& modes) {
  if (modes.empty()) throw std::invalid_argument("no modes given");
  int n = modes.front().state_dim();
  int p = modes.front().input_dim();
  for (const auto& m : modes) {
    if (m.A.rows() != m.A.cols())
      throw std::invalid_argument("mode " + m.label + ": A must be square");
    if (m.state_dim() != n || m.B.rows() != n || m.input_dim() != p)
      throw std::invalid_argument("mode " + m.label +
                                  ": inconsistent dimensions across modes");
    if (!m.A.allFinite() || !m.B.allFinite())
      throw std::invalid_argument("mode " + m.label + ": non-finite entries");
    if (m.K && (m.K->rows() != p || m.K->cols() != n))
      throw std::invalid_argument("mode " + m.label + ": K must be p x n");
  }
}

}  // namespace flexmpc
