#include "ivsel/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ivsel/error.hpp"
#include "ivsel/estimands.hpp"
#include "ivsel/monte_carlo.hpp"
#include "ivsel/presets.hpp"
#include "ivsel/sensitivity.hpp"

namespace ivsel::cli {

namespace {

using nlohmann::json;

struct ModelOptions {
  std::string preset;
  std::string model_path;
  std::vector<std::string> params;
};

struct RuleOptions {
  bool none = false;
  bool adjust = false;
  std::optional<double> severity;
  std::optional<double> threshold;
};

std::map<std::string, double> parse_assignments(const std::vector<std::string>& items,
                                                const char* flag) {
  std::map<std::string, double> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
      throw SpecError(std::string(flag) + " expects name=value, got '" + item + "'");
    const std::string name = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (value.empty() || *end != '\0' || !std::isfinite(v))
      throw SpecError(std::string(flag) + " value for '" + name + "' is not a number");
    out[name] = v;
  }
  return out;
}

void add_model_options(CLI::App* cmd, ModelOptions& m) {
  auto* preset = cmd->add_option("--preset", m.preset,
                                 "Preset graph: baseline, mediator, confounded_mediator, "
                                 "treatment_confounder");
  auto* model = cmd->add_option("--model", m.model_path, "Model-spec JSON file");
  preset->excludes(model);
  cmd->add_option("--param", m.params,
                  "Preset parameter override name=value (pi, beta, gamma, tau, delta1..delta4)");
}

void add_rule_options(CLI::App* cmd, RuleOptions& r) {
  auto* none = cmd->add_flag("--no-selection", r.none, "Do not condition on S");
  auto* adj = cmd->add_flag("--adjust", r.adjust, "Covariate adjustment on S");
  auto* sev = cmd->add_option("--truncate-severity", r.severity,
                              "Truncate at severity q = Pr(R=0) in (0,1)");
  auto* thr = cmd->add_option("--truncate-threshold", r.threshold, "Truncate at S >= s0");
  none->excludes(adj, sev, thr);
  adj->excludes(sev, thr);
  sev->excludes(thr);
}

PathModel load_model(const ModelOptions& m) {
  if (!m.model_path.empty()) {
    if (!m.params.empty()) throw SpecError("--param applies to --preset only");
    std::ifstream in(m.model_path);
    if (!in) throw SpecError("cannot open model file '" + m.model_path + "'");
    json doc;
    try {
      in >> doc;
    } catch (const json::exception& e) {
      throw SpecError(std::string("model file is not valid JSON: ") + e.what());
    }
    return model_from_json(doc);
  }
  if (m.preset.empty()) throw SpecError("one of --preset or --model is required");
  return build_model(m.preset, parse_assignments(m.params, "--param"));
}

SelectionRule to_rule(const RuleOptions& r, SelectionRule fallback) {
  if (r.adjust) return SelectionRule::adjustment();
  if (r.severity) return SelectionRule::truncate_at_severity(*r.severity);
  if (r.threshold) return SelectionRule::truncate_at_threshold(*r.threshold);
  if (r.none) return SelectionRule::none();
  return fallback;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("IVSEL_SEED")) {
    char* end = nullptr;
    const auto v = std::strtoull(env, &end, 10);
    if (*env == '\0' || *end != '\0') throw SpecError("IVSEL_SEED is not an unsigned integer");
    return v;
  }
  return kDefaultSeed;
}

// Writes to --output when given, else to `out`.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw SpecError("cannot open output file '" + path + "'");
      stream_ = file_.get();
    }
  }
  std::ostream& get() { return *stream_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_;
};

void print_report_text(std::ostream& out, const EstimandReport& r) {
  out << "engine     " << (r.engine == Engine::matrix ? "matrix" : "closed_form") << '\n'
      << "beta_true  " << r.beta_true << '\n'
      << "psi_used   " << r.psi_used << '\n'
      << "iv_plim    " << r.iv_plim << "  (bias " << r.iv_bias() << ")\n";
  for (const auto& t : r.iv_bias_terms) out << "  iv  " << t.path << "  " << t.value << '\n';
  out << "ols_plim   " << r.ols_plim << "  (bias " << r.ols_bias() << ")\n";
  for (const auto& t : r.ols_bias_terms) out << "  ols " << t.path << "  " << t.value << '\n';
}

// --- analyze -------------------------------------------------------------

struct AnalyzeOptions {
  ModelOptions model;
  RuleOptions rule;
  bool closed_form = false;
  std::string format = "json";
  std::string output;
};

int cmd_analyze(const AnalyzeOptions& o, std::ostream& out) {
  const auto model = load_model(o.model);
  const auto rule = to_rule(o.rule, SelectionRule::none());
  const auto report = plim_matrix(model, rule);

  std::optional<EstimandReport> cf;
  double max_abs_diff = 0.0;
  if (o.closed_form) {
    const auto& tag = model.preset();
    if (!tag) throw SpecError("--closed-form requires a preset model");
    cf = closed_form(tag->scenario, tag->params, rule.psi());
    max_abs_diff = std::max(std::abs(cf->iv_plim - report.iv_plim),
                            std::abs(cf->ols_plim - report.ols_plim));
  }

  Sink sink(o.output, out);
  auto& os = sink.get();
  if (o.format == "text") {
    os << "rule       " << rule.label() << '\n';
    print_report_text(os, report);
    if (cf) {
      os << "--\n";
      print_report_text(os, *cf);
      os << "max_abs_diff " << max_abs_diff << '\n';
    }
    return kOk;
  }
  if (o.format != "json") throw SpecError("analyze supports --format json or text");
  json doc;
  if (cf) {
    doc = {{"rule", rule.label()},
           {"matrix", to_json(report)},
           {"closed_form", to_json(*cf)},
           {"max_abs_diff", max_abs_diff}};
  } else {
    doc = to_json(report);
  }
  os << doc.dump(2) << '\n';
  return kOk;
}

// --- simulate ------------------------------------------------------------

struct SimulateOptions {
  ModelOptions model;
  RuleOptions rule;
  std::size_t n = 1000;
  std::optional<std::uint64_t> seed;
  bool observed_only = false;
  std::string output;
};

int cmd_simulate(const SimulateOptions& o, std::ostream& out) {
  const auto model = load_model(o.model);
  const auto rule = to_rule(o.rule, SelectionRule::none());
  const auto data = apply_selection(simulate(model, o.n, resolve_seed(o.seed)), rule);
  Sink sink(o.output, out);
  write_csv(data, sink.get(), o.observed_only);
  return kOk;
}

// --- verify --------------------------------------------------------------

struct VerifyOptions {
  std::size_t n = 1'000'000;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  double max_se = 4.0;
  bool formula_check = false;
  std::string output;
};

int cmd_verify(const VerifyOptions& o, std::ostream& out, std::ostream& err) {
  if (o.n < 10'000)
    err << "warning: n = " << o.n << " is below the recommended minimum of 10000\n";
  const auto seed = resolve_seed(o.seed);
  const std::vector<SelectionRule> rules{
      SelectionRule::none(), SelectionRule::adjustment(), SelectionRule::truncate_at_severity(0.25),
      SelectionRule::truncate_at_severity(0.5), SelectionRule::truncate_at_severity(0.75)};

  json checks = json::array();
  bool all_pass = true;
  for (auto scenario : {Scenario::baseline, Scenario::mediator, Scenario::confounded_mediator,
                        Scenario::treatment_confounder}) {
    const auto model = build_preset(scenario, ScenarioParams{});
    const auto data = simulate(model, o.n, seed);
    const auto mc = estimate_rules(data, rules, o.threads);
    for (std::size_t k = 0; k < rules.size(); ++k) {
      const auto analytic = plim_matrix(model, rules[k]);
      for (const auto* rep : {&mc[k].iv, &mc[k].ols}) {
        const double plim = rep->method == Method::iv ? analytic.iv_plim : analytic.ols_plim;
        const double z = std::abs(rep->estimate - plim) / rep->std_error;
        const bool pass = z <= o.max_se;
        all_pass = all_pass && pass;
        checks.push_back({{"scenario", to_string(scenario)},
                          {"rule", rules[k].label()},
                          {"method", to_string(rep->method)},
                          {"plim", plim},
                          {"estimate", rep->estimate},
                          {"std_error", rep->std_error},
                          {"n_retained", rep->n_retained},
                          {"z", z},
                          {"pass", pass}});
      }
    }
  }
  json doc{{"n", o.n},
           {"seed", seed},
           {"bootstrap_resamples", kBootstrapResamples},
           {"tolerance_se", o.max_se},
           {"checks", checks},
           {"pass", all_pass}};
  if (o.formula_check)
    doc["treatment_confounder_formula_check"] =
        to_json(treatment_confounder_formula_check(1000, seed), false);
  Sink sink(o.output, out);
  sink.get() << doc.dump(2) << '\n';
  return all_pass ? kOk : kVerifyFailed;
}

// --- sweep ---------------------------------------------------------------

struct SweepOptions {
  std::string scenario = "baseline";
  std::vector<std::string> axes;
  std::vector<std::string> fixed;
  std::string rule = "truncation";
  bool fig2a = false;
  bool fig2b = false;
  std::size_t steps = 201;
  unsigned threads = 0;
  std::string output;
};

SweepAxis parse_axis(const std::string& text) {
  // name=lo:hi:steps
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw SpecError("--axis expects name=lo:hi:steps");
  SweepAxis a;
  a.name = text.substr(0, eq);
  std::istringstream in(text.substr(eq + 1));
  char c1 = 0, c2 = 0;
  long long steps = 0;
  if (!(in >> a.lo >> c1 >> a.hi >> c2 >> steps) || c1 != ':' || c2 != ':' || steps < 1 ||
      !in.eof())
    throw SpecError("--axis '" + text + "' is not name=lo:hi:steps");
  a.steps = static_cast<std::size_t>(steps);
  return a;
}

int cmd_sweep(const SweepOptions& o, std::ostream& out) {
  Sink sink(o.output, out);
  if (o.fig2a) {
    const auto rows = figure_psi_curve();
    write_psi_csv(rows, sink.get());
    return kOk;
  }
  SweepGrid grid;
  RuleFamily family = RuleFamily::truncation;
  if (o.fig2b) {
    grid = figure_region_grid(o.steps);
    grid.fixed = parse_assignments(o.fixed, "--fixed");
  } else {
    const auto s = scenario_from_string(o.scenario);
    if (!s) throw SpecError("unknown scenario '" + o.scenario + "'");
    grid.scenario = *s;
    grid.fixed = parse_assignments(o.fixed, "--fixed");
    for (const auto& a : o.axes) grid.axes.push_back(parse_axis(a));
    if (o.rule == "adjustment")
      family = RuleFamily::adjustment;
    else if (o.rule == "both")
      family = RuleFamily::both;
    else if (o.rule != "truncation")
      throw SpecError("--rule must be truncation, adjustment or both");
  }
  const auto result = run_sweep(grid, family, o.threads);
  write_sweep_csv(result, sink.get());
  return kOk;
}

// --- presets -------------------------------------------------------------

int cmd_presets(const std::string& format, std::ostream& out) {
  const ScenarioParams defaults;
  json doc = json::array();
  for (auto s : {Scenario::baseline, Scenario::mediator, Scenario::confounded_mediator,
                 Scenario::treatment_confounder}) {
    json params;
    for (auto name : scenario_parameters(s)) params[std::string(name)] = defaults.at(name);
    doc.push_back({{"name", to_string(s)},
                   {"params", params},
                   {"model", model_to_json(build_preset(s, defaults))}});
  }
  if (format == "text") {
    for (const auto& p : doc) {
      out << p["name"].get<std::string>() << ':';
      for (const auto& [k, v] : p["params"].items()) out << ' ' << k << '=' << v.get<double>();
      out << '\n';
    }
    return kOk;
  }
  out << doc.dump(2) << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Asymptotic IV/OLS bias under treatment-induced selection", "ivsel"};
  app.require_subcommand(1);

  AnalyzeOptions analyze;
  auto* a = app.add_subcommand("analyze", "Probability limits of IV and OLS under a selection rule");
  add_model_options(a, analyze.model);
  add_rule_options(a, analyze.rule);
  a->add_flag("--closed-form", analyze.closed_form,
              "Also print the preset closed form and its max abs difference");
  a->add_option("--format", analyze.format, "json or text")->check(CLI::IsMember({"json", "text"}));
  a->add_option("--output,-o", analyze.output, "Write to file instead of stdout");

  SimulateOptions sim;
  auto* s = app.add_subcommand("simulate", "Draw a synthetic dataset as CSV");
  add_model_options(s, sim.model);
  add_rule_options(s, sim.rule);
  s->add_option("--n", sim.n, "Sample size")->check(CLI::PositiveNumber);
  s->add_option("--seed", sim.seed, "RNG seed (default: $IVSEL_SEED or 20211)");
  s->add_flag("--observed-only", sim.observed_only,
              "Drop latent columns and truncated (R=0) rows");
  s->add_option("--output,-o", sim.output, "Write to file instead of stdout");

  VerifyOptions verify;
  auto* v = app.add_subcommand("verify", "Check analytic plims against the Monte Carlo oracle");
  v->add_option("--n", verify.n, "Sample size per preset (>= 10000 recommended)")
      ->check(CLI::PositiveNumber);
  v->add_option("--seed", verify.seed, "RNG seed (default: $IVSEL_SEED or 20211)");
  v->add_option("--threads", verify.threads, "Worker cap (0 = all cores)");
  v->add_option("--tolerance-se", verify.max_se, "Pass band in bootstrap standard errors");
  v->add_flag("--formula-check", verify.formula_check,
              "Include the treatment-confounder closed-form comparison");
  v->add_option("--output,-o", verify.output, "Write to file instead of stdout");

  SweepOptions sweep;
  auto* w = app.add_subcommand("sweep", "Sensitivity sweep over one or two parameters (CSV)");
  w->add_option("--scenario", sweep.scenario, "Preset scenario");
  w->add_option("--axis", sweep.axes, "Axis name=lo:hi:steps (gamma, severity, psi, tau, ...)");
  w->add_option("--fixed,--param", sweep.fixed, "Fixed parameter name=value");
  w->add_option("--rule", sweep.rule, "truncation, adjustment or both");
  auto* f2a = w->add_flag("--fig2a", sweep.fig2a, "psi versus truncation severity table");
  auto* f2b = w->add_flag("--fig2b", sweep.fig2b,
                          "Baseline least-biased region map over gamma x severity");
  f2a->excludes(f2b);
  w->add_option("--steps", sweep.steps, "Grid points per axis for --fig2b")
      ->check(CLI::PositiveNumber);
  w->add_option("--threads", sweep.threads, "Worker cap (0 = all cores)");
  w->add_option("--output,-o", sweep.output, "Write to file instead of stdout");

  std::string presets_format = "json";
  auto* p = app.add_subcommand("presets", "List preset graphs and default parameters");
  p->add_option("--format", presets_format, "json or text")->check(CLI::IsMember({"json", "text"}));

  std::vector<std::string> argv_store{"ivsel"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& arg : argv_store) argv.push_back(arg.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  for (const auto* m : {*a ? &analyze.model : nullptr, *s ? &sim.model : nullptr})
    if (m && m->preset.empty() && m->model_path.empty()) {
      err << "one of --preset or --model is required\nRun with --help for more information.\n";
      return kUsage;
    }

  try {
    if (*a) return cmd_analyze(analyze, out);
    if (*s) return cmd_simulate(sim, out);
    if (*v) return cmd_verify(verify, out, err);
    if (*w) {
      if (!sweep.fig2a && !sweep.fig2b && sweep.axes.empty())
        throw SpecError("sweep needs --axis, --fig2a or --fig2b");
      return cmd_sweep(sweep, out);
    }
    if (*p) return cmd_presets(presets_format, out);
  } catch (const InfeasibleModelError& e) {
    err << "error: " << e.what() << '\n';
    return kInfeasible;
  } catch (const DegenerateEstimandError& e) {
    err << "error: " << e.what() << '\n';
    return kDegenerate;
  } catch (const SpecError& e) {
    err << "error: " << e.what() << '\n';
    return kSpecError;
  } catch (const std::domain_error& e) {
    err << "error: " << e.what() << '\n';
    return kSpecError;
  }
  return kUsage;
}

}  // namespace ivsel::cli
