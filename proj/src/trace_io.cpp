#include "flexmpc/trace_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace flexmpc {
namespace {

void append_num17(std::string& out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

std::string trace_csv_string(const MpcTrace& trace) {
  if (trace.states.empty())
    throw std::invalid_argument("trace_csv_string: empty trace");
  const int n = trace.state_dim;
  const int p = trace.input_dim;

  std::string out = "k";
  for (int i = 1; i <= n; ++i) out += ",x_" + std::to_string(i);
  for (int i = 1; i <= p; ++i) out += ",u_" + std::to_string(i);
  out += ",V,instance_id,steps_in_instance\n";

  // rows in [instants[i], instants[i] + steps[i]) belong to instance i;
  // the terminal row keeps the last instance's attribution
  size_t instance = 0;
  for (size_t row = 0; row < trace.states.size(); ++row) {
    const int k = static_cast<int>(row);
    while (instance + 1 < trace.instants.size() &&
           k >= trace.instants[instance] + trace.steps[instance])
      ++instance;

    out += std::to_string(k);
    for (int i = 0; i < n; ++i) {
      out += ',';
      append_num17(out, trace.states[row](i));
    }
    const bool has_input = row < trace.inputs.size();
    for (int i = 0; i < p; ++i) {
      out += ',';
      append_num17(out, has_input ? trace.inputs[row](i) : 0.0);
    }
    out += ',';
    append_num17(out, trace.states[row].squaredNorm());
    out += ',' + std::to_string(trace.steps.empty() ? 0 : instance);
    out += ',' +
           std::to_string(trace.steps.empty() ? 0 : trace.steps[instance]);
    out += '\n';
  }
  return out;
}

void write_trace_csv(const MpcTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace file: " + path);
  out << trace_csv_string(trace);
  if (!out.good()) throw std::runtime_error("failed writing trace file: " + path);
}

}  // namespace flexmpc
