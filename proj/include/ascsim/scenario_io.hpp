#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "ascsim/runner.hpp"

namespace ascsim {

/// Scenario text format: '#' comments, [section] headers, key = value lines.
/// Sections: plant, thermal, faults, detector, discharge, run. Keys carry
/// their unit as a suffix (capacitance_uF, dt_us, ...). Unknown sections or
/// keys are rejected; missing keys take the documented defaults; fault lines
/// are `fault = <kind> targets=a[,b] [resistance_mOhm=x] t_start_ms=x
/// [t_end_ms=x]`.
ScenarioConfig parse_scenario(const std::string& text, const std::string& id = "scenario");

ScenarioConfig load_scenario(const std::filesystem::path& file);

/// Canonical serialization: every key written, fixed order. Feeding the
/// output back through parse_scenario yields an identical config.
std::string serialize_scenario(const ScenarioConfig& cfg);

/// FNV-1a over the canonical plant+thermal+faults text; protection and run
/// settings are excluded so baseline/protected pairs stay comparable.
std::uint64_t config_fingerprint(const ScenarioConfig& cfg);

}  // namespace ascsim
