#pragma once

#include <string>

#include "flexmpc/mpc.hpp"

namespace flexmpc {

// CSV columns: k, x_1..x_n, u_1..u_p, V, instance_id, steps_in_instance.
// One row per time instant including the final one (whose inputs are 0).
// Numbers carry 17 significant digits.
void write_trace_csv(const MpcTrace& trace, const std::string& path);

std::string trace_csv_string(const MpcTrace& trace);

}  // namespace flexmpc
