#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace ivsel {

/// The four canned causal structures.
enum class Scenario {
  baseline,              // Z->T->Y, U->T, U->Y, T->S
  mediator,              // baseline + S->Y
  confounded_mediator,   // mediator + W->S, W->Y
  treatment_confounder,  // baseline + U->S
};

std::string_view to_string(Scenario s);
std::optional<Scenario> scenario_from_string(std::string_view name);

/// Path parameters of the presets. Parameters a scenario does not use are ignored.
struct ScenarioParams {
  double pi = 0.5;
  double beta = 0.4;
  double gamma = 0.6;
  double tau = 0.2;
  double delta1 = 0.5;
  double delta2 = 0.5;
  double delta3 = 0.3;
  double delta4 = 0.3;

  /// Access by spelled-out name ("pi", "beta", ..., "delta4"); throws SpecError.
  double& at(std::string_view name);
  double at(std::string_view name) const;
};

}  // namespace ivsel
