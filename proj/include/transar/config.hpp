#pragma once

// JSON manifests for simulation configs and experiment grids. Every field is
// optional on input; absent fields keep their defaults, unknown keys are errors.

#include "transar/estimators.hpp"
#include "transar/harness.hpp"
#include "transar/simulate.hpp"

#include <json.hpp>

#include <filesystem>

namespace transar {

using Json = nlohmann::ordered_json;

std::string to_string(FirstStageMethod m);
FirstStageMethod parse_first_stage(const std::string& s);

Json to_json(const SimulationConfig& c);
Json to_json(const TslsOptions& o);
Json to_json(const PenaltyConstants& c);
Json to_json(const ExperimentGrid& g);

SimulationConfig simulation_config_from_json(const Json& j);
TslsOptions tsls_options_from_json(const Json& j);
PenaltyConstants penalty_constants_from_json(const Json& j);
ExperimentGrid experiment_grid_from_json(const Json& j);

Json read_json_file(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline.
void write_json_file(const std::filesystem::path& path, const Json& j);

}  // namespace transar
