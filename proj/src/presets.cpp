#include "ivsel/presets.hpp"

#include <array>
#include <cmath>

#include "ivsel/error.hpp"

namespace ivsel {

namespace {

constexpr std::array<std::string_view, 5> kBaselineParams{"pi", "beta", "gamma", "delta1", "delta2"};
constexpr std::array<std::string_view, 6> kMediatorParams{"pi",     "beta",   "gamma",
                                                          "tau",    "delta1", "delta2"};
constexpr std::array<std::string_view, 8> kConfoundedMediatorParams{
    "pi", "beta", "gamma", "tau", "delta1", "delta2", "delta3", "delta4"};
constexpr std::array<std::string_view, 6> kTreatmentConfounderParams{
    "pi", "beta", "gamma", "delta1", "delta2", "delta3"};

}  // namespace

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::baseline: return "baseline";
    case Scenario::mediator: return "mediator";
    case Scenario::confounded_mediator: return "confounded_mediator";
    case Scenario::treatment_confounder: return "treatment_confounder";
  }
  return "baseline";
}

std::optional<Scenario> scenario_from_string(std::string_view name) {
  for (auto s : {Scenario::baseline, Scenario::mediator, Scenario::confounded_mediator,
                 Scenario::treatment_confounder})
    if (to_string(s) == name) return s;
  return std::nullopt;
}

double& ScenarioParams::at(std::string_view name) {
  if (name == "pi") return pi;
  if (name == "beta") return beta;
  if (name == "gamma") return gamma;
  if (name == "tau") return tau;
  if (name == "delta1") return delta1;
  if (name == "delta2") return delta2;
  if (name == "delta3") return delta3;
  if (name == "delta4") return delta4;
  throw SpecError("unknown parameter '" + std::string(name) + "'");
}

double ScenarioParams::at(std::string_view name) const {
  return const_cast<ScenarioParams&>(*this).at(name);
}

std::span<const std::string_view> scenario_parameters(Scenario s) {
  switch (s) {
    case Scenario::baseline: return kBaselineParams;
    case Scenario::mediator: return kMediatorParams;
    case Scenario::confounded_mediator: return kConfoundedMediatorParams;
    case Scenario::treatment_confounder: return kTreatmentConfounderParams;
  }
  return kBaselineParams;
}

PathModel build_preset(Scenario s, const ScenarioParams& p) {
  std::vector<Node> nodes{{"Z", Role::instrument, false}, {"U", Role::confounder, true}};
  if (s == Scenario::confounded_mediator) nodes.push_back({"W", Role::confounder, true});
  nodes.push_back({"T", Role::treatment, false});
  nodes.push_back({"S", Role::selection, false});
  nodes.push_back({"Y", Role::outcome, false});

  std::vector<Edge> edges{
      {"Z", "T", p.pi}, {"U", "T", p.delta1}, {"T", "S", p.gamma},
      {"T", "Y", p.beta}, {"U", "Y", p.delta2},
  };
  switch (s) {
    case Scenario::baseline: break;
    case Scenario::mediator: edges.push_back({"S", "Y", p.tau}); break;
    case Scenario::confounded_mediator:
      edges.push_back({"S", "Y", p.tau});
      edges.push_back({"W", "S", p.delta3});
      edges.push_back({"W", "Y", p.delta4});
      break;
    case Scenario::treatment_confounder: edges.push_back({"U", "S", p.delta3}); break;
  }
  return PathModel(std::move(nodes), std::move(edges), PresetTag{s, p});
}

PathModel build_model(std::string_view preset, const std::map<std::string, double>& overrides) {
  const auto s = scenario_from_string(preset);
  if (!s) throw SpecError("unknown preset '" + std::string(preset) + "'");
  ScenarioParams params;
  const auto allowed = scenario_parameters(*s);
  for (const auto& [name, value] : overrides) {
    if (std::find(allowed.begin(), allowed.end(), name) == allowed.end())
      throw SpecError("preset '" + std::string(preset) + "' has no parameter '" + name + "'");
    params.at(name) = value;
  }
  return build_preset(*s, params);
}

PathModel model_from_json(const nlohmann::json& doc) {
  try {
    if (!doc.is_object()) throw SpecError("model document must be a JSON object");
    if (doc.contains("preset")) {
      std::map<std::string, double> overrides;
      if (doc.contains("params"))
        for (const auto& [k, v] : doc.at("params").items()) overrides[k] = v.get<double>();
      return build_model(doc.at("preset").get<std::string>(), overrides);
    }
    std::vector<Node> nodes;
    for (const auto& jn : doc.at("nodes")) {
      Node n;
      n.name = jn.at("name").get<std::string>();
      const auto role_name = jn.value("role", std::string("other"));
      const auto role = role_from_string(role_name);
      if (!role) throw SpecError("unknown role '" + role_name + "' on node '" + n.name + "'");
      n.role = *role;
      n.latent = jn.value("latent", false);
      nodes.push_back(std::move(n));
    }
    std::vector<Edge> edges;
    for (const auto& je : doc.at("edges"))
      edges.push_back({je.at("from").get<std::string>(), je.at("to").get<std::string>(),
                       je.at("coef").get<double>()});
    return PathModel(std::move(nodes), std::move(edges));
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("malformed model document: ") + e.what());
  }
}

nlohmann::json model_to_json(const PathModel& model) {
  nlohmann::json doc;
  doc["nodes"] = nlohmann::json::array();
  for (const auto& n : model.nodes())
    doc["nodes"].push_back({{"name", n.name}, {"role", to_string(n.role)}, {"latent", n.latent}});
  doc["edges"] = nlohmann::json::array();
  for (const auto& e : model.edges())
    doc["edges"].push_back({{"from", e.from}, {"to", e.to}, {"coef", e.coef}});
  return doc;
}

ScenarioParams draw_feasible_params(Scenario s, Xoshiro256ss& rng, double max_abs_coef,
                                    double min_shock) {
  for (;;) {
    ScenarioParams p;
    for (auto name : scenario_parameters(s)) p.at(name) = rng.uniform(-max_abs_coef, max_abs_coef);
    if (std::abs(p.pi) < 0.05) continue;
    try {
      const auto shocks = solve_shock_variances(build_preset(s, p));
      if (*std::min_element(shocks.var.begin(), shocks.var.end()) >= min_shock) return p;
    } catch (const InfeasibleModelError&) {
    }
  }
}

}  // namespace ivsel
