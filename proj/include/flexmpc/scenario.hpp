#pragma once

#include <string>

#include "flexmpc/gdclf.hpp"
#include "flexmpc/system.hpp"

namespace flexmpc {

// Parse a scenario description (JSON). Malformed or missing fields throw
// ScenarioParseError naming the offending field. See README for the schema.
SwitchedScenario load_scenario(const std::string& path);
SwitchedScenario parse_scenario(const std::string& json_text);

// Inverse of parse_scenario up to formatting; numbers survive a round trip
// exactly.
std::string scenario_to_json(const SwitchedScenario& scenario);

// Certificate files: {"m":..., "lambda":[...], "epsilon":..., "margin":...,
// "gains":[[[...]]]}, numbers written with 17 significant digits.
std::string certificate_to_json(const GdclfCertificate& cert);
void save_certificate(const GdclfCertificate& cert, const std::string& path);
GdclfCertificate load_certificate(const std::string& path);

}  // namespace flexmpc
