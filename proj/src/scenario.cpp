#include "flexmpc/scenario.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace flexmpc {
namespace {

using nlohmann::json;

std::string num17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// `key` is the JSON member; `shown` is the dotted path used in messages.
const json& need(const json& j, const std::string& key, const std::string& shown) {
  auto it = j.find(key);
  if (it == j.end()) throw ScenarioParseError("missing field: " + shown);
  return *it;
}
const json& need(const json& j, const std::string& key) { return need(j, key, key); }

double need_number(const json& j, const std::string& key,
                   const std::string& shown) {
  const json& v = need(j, key, shown);
  if (!v.is_number()) throw ScenarioParseError("field must be a number: " + shown);
  return v.get<double>();
}
double need_number(const json& j, const std::string& key) {
  return need_number(j, key, key);
}

int need_int(const json& j, const std::string& key, const std::string& shown) {
  const json& v = need(j, key, shown);
  if (!v.is_number_integer())
    throw ScenarioParseError("field must be an integer: " + shown);
  return v.get<int>();
}
int need_int(const json& j, const std::string& key) { return need_int(j, key, key); }

std::string need_string(const json& j, const std::string& key,
                        const std::string& shown) {
  const json& v = need(j, key, shown);
  if (!v.is_string()) throw ScenarioParseError("field must be a string: " + shown);
  return v.get<std::string>();
}

VectorXd parse_vector(const json& v, const std::string& field) {
  if (!v.is_array() || v.empty())
    throw ScenarioParseError("field must be a nonempty array: " + field);
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number())
      throw ScenarioParseError("non-numeric entry in " + field);
    out(static_cast<Eigen::Index>(i)) = v[i].get<double>();
  }
  return out;
}

MatrixXd parse_matrix(const json& v, const std::string& field) {
  if (!v.is_array() || v.empty())
    throw ScenarioParseError("field must be a nonempty array of rows: " + field);
  const size_t rows = v.size();
  if (!v[0].is_array() || v[0].empty())
    throw ScenarioParseError("rows must be nonempty arrays: " + field);
  const size_t cols = v[0].size();
  MatrixXd out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (size_t r = 0; r < rows; ++r) {
    if (!v[r].is_array() || v[r].size() != cols)
      throw ScenarioParseError("ragged rows in " + field);
    for (size_t c = 0; c < cols; ++c) {
      if (!v[r][c].is_number())
        throw ScenarioParseError("non-numeric entry in " + field);
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          v[r][c].get<double>();
    }
  }
  return out;
}

// scalar c stands for c * identity
MatrixXd parse_weight(const json& v, const std::string& field, int dim) {
  if (v.is_number())
    return v.get<double>() * MatrixXd::Identity(dim, dim);
  MatrixXd M = parse_matrix(v, field);
  if (M.rows() != dim || M.cols() != dim)
    throw ScenarioParseError("field has wrong dimensions: " + field);
  return M;
}

SwitchingSignal parse_switching(const json& j) {
  const json& sw = need(j, "switching");
  const std::string rule = need_string(sw, "rule", "switching.rule");
  if (rule == "constant") {
    ConstantSignal c;
    c.mode = need_int(sw, "mode", "switching.mode");
    return SwitchingSignal(c);
  }
  if (rule == "parity") {
    ParitySignal p;
    p.even_mode = need_int(sw, "even_mode", "switching.even_mode");
    p.odd_mode = need_int(sw, "odd_mode", "switching.odd_mode");
    p.offset = sw.contains("offset") ? need_int(sw, "offset", "switching.offset") : 0;
    return SwitchingSignal(p);
  }
  if (rule == "periodic") {
    PeriodicSignal p;
    const json& pat = need(sw, "pattern", "switching.pattern");
    if (!pat.is_array() || pat.empty())
      throw ScenarioParseError("switching.pattern must be a nonempty array");
    for (const auto& e : pat) {
      if (!e.is_number_integer())
        throw ScenarioParseError("switching.pattern entries must be integers");
      p.pattern.push_back(e.get<int>());
    }
    return SwitchingSignal(p);
  }
  if (rule == "table") {
    TableSignal t;
    const json& entries = need(sw, "entries", "switching.entries");
    if (!entries.is_object())
      throw ScenarioParseError("switching.entries must be an object");
    for (auto eit = entries.begin(); eit != entries.end(); ++eit) {
      int k = 0;
      try {
        k = std::stoi(eit.key());
      } catch (const std::exception&) {
        throw ScenarioParseError("switching.entries key is not an integer: " +
                                 eit.key());
      }
      if (!eit.value().is_number_integer())
        throw ScenarioParseError("switching.entries values must be integers");
      t.entries[k] = eit.value().get<int>();
    }
    return SwitchingSignal(std::move(t));
  }
  throw ScenarioParseError("unknown switching.rule: " + rule);
}

Box parse_box(const json& v, const std::string& field, int dim) {
  Box box;
  box.lo = parse_vector(need(v, "lo", field + ".lo"), field + ".lo");
  box.hi = parse_vector(need(v, "hi", field + ".hi"), field + ".hi");
  if (box.lo.size() != dim || box.hi.size() != dim)
    throw ScenarioParseError("field has wrong dimensions: " + field);
  return box;
}

json matrix_json(const MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(const VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

}  // namespace

SwitchedScenario parse_scenario(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ScenarioParseError(std::string("invalid JSON: ") + e.what());
  }

  SwitchedScenario s;
  s.name = need_string(j, "name", "name");

  const json& modes = need(j, "modes");
  if (!modes.is_array() || modes.empty())
    throw ScenarioParseError("modes must be a nonempty array");
  for (size_t t = 0; t < modes.size(); ++t) {
    const std::string where = "modes[" + std::to_string(t) + "]";
    LinearMode mode;
    mode.label = need_string(modes[t], "label", where + ".label");
    mode.A = parse_matrix(need(modes[t], "A", where + ".A"), where + ".A");
    mode.B = parse_matrix(need(modes[t], "B", where + ".B"), where + ".B");
    if (modes[t].contains("K"))
      mode.K = parse_matrix(modes[t]["K"], where + ".K");
    s.modes.push_back(std::move(mode));
  }
  try {
    validate_modes(s.modes);
  } catch (const std::invalid_argument& e) {
    throw ScenarioParseError(std::string("modes: ") + e.what());
  }
  const int n = s.modes.front().state_dim();
  const int p = s.modes.front().input_dim();

  s.signal = parse_switching(j);
  s.x0 = parse_vector(need(j, "x0"), "x0");
  if (s.x0.size() != n)
    throw ScenarioParseError("field has wrong dimensions: x0");

  s.ocp.horizon = need_int(j, "horizon");
  if (s.ocp.horizon < 1) throw ScenarioParseError("horizon must be >= 1");
  s.m = need_int(j, "m");
  if (s.m < 1 || s.m > s.ocp.horizon)
    throw ScenarioParseError("m must lie in [1, horizon]");
  s.epsilon = need_number(j, "epsilon_adc");
  if (!(s.epsilon > 0.0 && s.epsilon < 1.0))
    throw ScenarioParseError("epsilon_adc must lie in (0, 1)");

  const json& cost = need(j, "cost");
  if (cost.contains("state_quadratic"))
    s.ocp.cost.state_weight_quadratic =
        parse_weight(cost["state_quadratic"], "cost.state_quadratic", n);
  if (cost.contains("state_l1")) {
    if (!cost["state_l1"].is_number())
      throw ScenarioParseError("field must be a number: cost.state_l1");
    s.ocp.cost.state_weight_l1 = cost["state_l1"].get<double>();
    if (!(*s.ocp.cost.state_weight_l1 >= 0.0))
      throw ScenarioParseError("cost.state_l1 must be nonnegative");
  }
  if (!s.ocp.cost.state_weight_quadratic && !s.ocp.cost.state_weight_l1)
    throw ScenarioParseError("cost needs state_quadratic or state_l1");
  s.ocp.cost.input_weight_quadratic = parse_weight(
      need(cost, "input_quadratic", "cost.input_quadratic"), "cost.input_quadratic", p);
  if (cost.contains("terminal"))
    s.ocp.cost.terminal = parse_weight(cost["terminal"], "cost.terminal", n);

  if (j.contains("input_box")) s.ocp.input_box = parse_box(j["input_box"], "input_box", p);
  if (j.contains("state_box")) s.ocp.state_box = parse_box(j["state_box"], "state_box", n);
  if (j.contains("terminal_box"))
    s.ocp.terminal_box = parse_box(j["terminal_box"], "terminal_box", n);

  s.simulation_length = need_int(j, "simulation_length");
  if (s.simulation_length < 0)
    throw ScenarioParseError("simulation_length must be >= 0");

  const json& pol = need(j, "policy");
  if (!pol.is_string()) throw ScenarioParseError("field must be a string: policy");
  const std::string policy = pol.get<std::string>();
  if (policy == "first")
    s.policy = StepPolicy::FirstDescent;
  else if (policy == "max")
    s.policy = StepPolicy::MaxDescent;
  else
    throw ScenarioParseError("policy must be \"first\" or \"max\"");

  // the switching signal must cover every prediction window of the run
  try {
    window_mode_sequence(s.signal, 0, s.simulation_length + s.ocp.horizon,
                         static_cast<int>(s.modes.size()));
  } catch (const std::invalid_argument& e) {
    throw ScenarioParseError(std::string("switching: ") + e.what());
  }
  return s;
}

SwitchedScenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioParseError("cannot open scenario file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

std::string scenario_to_json(const SwitchedScenario& s) {
  json j;
  j["name"] = s.name;
  j["modes"] = json::array();
  for (const auto& mode : s.modes) {
    json m;
    m["label"] = mode.label;
    m["A"] = matrix_json(mode.A);
    m["B"] = matrix_json(mode.B);
    if (mode.K) m["K"] = matrix_json(*mode.K);
    j["modes"].push_back(std::move(m));
  }
  json sw;
  if (const auto* c = std::get_if<ConstantSignal>(&s.signal.rule())) {
    sw["rule"] = "constant";
    sw["mode"] = c->mode;
  } else if (const auto* pa = std::get_if<ParitySignal>(&s.signal.rule())) {
    sw["rule"] = "parity";
    sw["even_mode"] = pa->even_mode;
    sw["odd_mode"] = pa->odd_mode;
    sw["offset"] = pa->offset;
  } else if (const auto* pe = std::get_if<PeriodicSignal>(&s.signal.rule())) {
    sw["rule"] = "periodic";
    sw["pattern"] = pe->pattern;
  } else {
    const auto& t = std::get<TableSignal>(s.signal.rule());
    json entries = json::object();
    for (const auto& [k, v] : t.entries) entries[std::to_string(k)] = v;
    sw["rule"] = "table";
    sw["entries"] = std::move(entries);
  }
  j["switching"] = std::move(sw);
  j["x0"] = vector_json(s.x0);
  j["horizon"] = s.ocp.horizon;
  j["m"] = s.m;
  j["epsilon_adc"] = s.epsilon;
  json cost;
  if (s.ocp.cost.state_weight_quadratic)
    cost["state_quadratic"] = matrix_json(*s.ocp.cost.state_weight_quadratic);
  if (s.ocp.cost.state_weight_l1) cost["state_l1"] = *s.ocp.cost.state_weight_l1;
  cost["input_quadratic"] = matrix_json(s.ocp.cost.input_weight_quadratic);
  if (s.ocp.cost.terminal) cost["terminal"] = matrix_json(*s.ocp.cost.terminal);
  j["cost"] = std::move(cost);
  auto box_json = [](const Box& b) {
    json out;
    out["lo"] = vector_json(b.lo);
    out["hi"] = vector_json(b.hi);
    return out;
  };
  if (s.ocp.input_box) j["input_box"] = box_json(*s.ocp.input_box);
  if (s.ocp.state_box) j["state_box"] = box_json(*s.ocp.state_box);
  if (s.ocp.terminal_box) j["terminal_box"] = box_json(*s.ocp.terminal_box);
  j["simulation_length"] = s.simulation_length;
  j["policy"] = s.policy == StepPolicy::FirstDescent ? "first" : "max";
  return j.dump(2) + "\n";
}

std::string certificate_to_json(const GdclfCertificate& cert) {
  std::string out = "{\n";
  out += "  \"m\": " + std::to_string(cert.m) + ",\n";
  out += "  \"lambda\": [";
  for (Eigen::Index i = 0; i < cert.lambda.size(); ++i) {
    if (i) out += ", ";
    out += num17(cert.lambda(i));
  }
  out += "],\n";
  out += "  \"epsilon\": " + num17(cert.epsilon) + ",\n";
  out += "  \"margin\": " + num17(cert.margin) + ",\n";
  out += "  \"gains\": [\n";
  for (size_t t = 0; t < cert.gains.size(); ++t) {
    const MatrixXd& K = cert.gains[t];
    out += "    [";
    for (Eigen::Index r = 0; r < K.rows(); ++r) {
      out += (r ? ", [" : "[");
      for (Eigen::Index c = 0; c < K.cols(); ++c) {
        if (c) out += ", ";
        out += num17(K(r, c));
      }
      out += "]";
    }
    out += (t + 1 < cert.gains.size() ? "],\n" : "]\n");
  }
  out += "  ]\n}\n";
  return out;
}

void save_certificate(const GdclfCertificate& cert, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write certificate file: " + path);
  out << certificate_to_json(cert);
  if (!out.good())
    throw std::runtime_error("failed writing certificate file: " + path);
}

GdclfCertificate load_certificate(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioParseError("cannot open certificate file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ScenarioParseError(std::string("invalid JSON: ") + e.what());
  }
  GdclfCertificate cert;
  cert.m = need_int(j, "m");
  cert.lambda = parse_vector(need(j, "lambda"), "lambda");
  cert.epsilon = need_number(j, "epsilon");
  cert.margin = need_number(j, "margin");
  const json& gains = need(j, "gains");
  if (!gains.is_array() || gains.empty())
    throw ScenarioParseError("gains must be a nonempty array");
  for (size_t t = 0; t < gains.size(); ++t)
    cert.gains.push_back(parse_matrix(gains[t], "gains[" + std::to_string(t) + "]"));
  if (cert.m != static_cast<int>(cert.lambda.size()))
    throw ScenarioParseError("m disagrees with lambda length");
  return cert;
}

}  // namespace flexmpc
