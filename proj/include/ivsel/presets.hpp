#pragma once

#include <map>
#include <string>
#include <string_view>

#include <json.hpp>

#include "ivsel/rng.hpp"
#include "ivsel/scenario.hpp"
#include "ivsel/sem.hpp"

namespace ivsel {

/// Parameter names each scenario reads, e.g. {"pi","beta","gamma","delta1","delta2"}.
std::span<const std::string_view> scenario_parameters(Scenario s);

/// Canonical graph for a scenario. Node order Z, U, [W,] T, S, Y.
PathModel build_preset(Scenario s, const ScenarioParams& params);

/// Preset by name with overrides keyed by spelled-out Greek names. Unknown
/// presets and parameters the preset does not use throw SpecError.
PathModel build_model(std::string_view preset, const std::map<std::string, double>& overrides);

/// Either a full model document
///   {"nodes":[{"name","role","latent"}...],"edges":[{"from","to","coef"}...]}
/// or a preset reference {"preset":"baseline","params":{"gamma":0.6,...}}.
PathModel model_from_json(const nlohmann::json& doc);
nlohmann::json model_to_json(const PathModel& model);

/// Uniform draws of the scenario's parameters, rejected until the model
/// standardizes with every shock variance >= min_shock and |pi| >= 0.05.
ScenarioParams draw_feasible_params(Scenario s, Xoshiro256ss& rng, double max_abs_coef = 0.95,
                                    double min_shock = 0.02);

}  // namespace ivsel
