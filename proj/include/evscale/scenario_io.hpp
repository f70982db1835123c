#pragma once

#include <optional>
#include <string>

#include "json.hpp"

#include "evscale/event_model.hpp"
#include "evscale/nuisance.hpp"
#include "evscale/simulator.hpp"

namespace evscale {

using Json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "1.0.0";

[[nodiscard]] Json model_to_json(const IntensityModel& m);
[[nodiscard]] Json scenario_to_json(const ScenarioConfig& c);

/// Reads a scenario document. With "preset" the named preset (built from
/// "defaults") is the base and the remaining keys override it field by field.
/// Unknown keys are schema violations (ConfigError).
[[nodiscard]] ScenarioConfig scenario_from_json(const Json& j);
[[nodiscard]] ScenarioConfig load_scenario_file(const std::string& path);

[[nodiscard]] Json intervention_to_json(const std::optional<InterventionSpec>& iv);
[[nodiscard]] std::optional<InterventionSpec> intervention_from_json(const Json& j);

/// Scenario, seed, size and intervention of a simulated cohort.
[[nodiscard]] Json cohort_manifest(const Cohort& cohort);
[[nodiscard]] Cohort cohort_from_manifest(const Json& manifest);

[[nodiscard]] Json nuisance_to_json(const NuisanceSet& set);

[[nodiscard]] Json read_json_file(const std::string& path);

}  // namespace evscale
