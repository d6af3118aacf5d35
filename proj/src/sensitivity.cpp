#include "ivsel/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "ivsel/error.hpp"
#include "ivsel/normal.hpp"
#include "ivsel/parallel.hpp"
#include "ivsel/presets.hpp"

namespace ivsel {

namespace {

std::string fmt12(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

bool is_parameter(Scenario s, std::string_view name) {
  const auto ps = scenario_parameters(s);
  return std::find(ps.begin(), ps.end(), name) != ps.end();
}

struct CellSetup {
  ScenarioParams params;
  std::optional<double> severity;
  std::optional<double> psi;
  std::string overrides;
};

}  // namespace

std::string_view to_string(LeastBiased l) {
  switch (l) {
    case LeastBiased::iv: return "IV";
    case LeastBiased::ols: return "OLS";
    case LeastBiased::tie: return "tie";
    case LeastBiased::infeasible: return "infeasible";
  }
  return "infeasible";
}

LeastBiased classify_least_biased(double iv_bias, double ols_bias, double tol) {
  const double a = std::abs(iv_bias);
  const double b = std::abs(ols_bias);
  if (std::abs(a - b) <= tol) return LeastBiased::tie;
  return a < b ? LeastBiased::iv : LeastBiased::ols;
}

std::vector<PsiRow> psi_curve(std::span<const double> severities) {
  std::vector<PsiRow> rows;
  rows.reserve(severities.size());
  for (const double q : severities) {
    const double s0 = severity_to_threshold(q);
    rows.push_back({q, s0, psi(s0)});
  }
  return rows;
}

double SweepAxis::value(std::size_t i) const {
  if (steps <= 1) return lo;
  return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps - 1);
}

void SweepGrid::validate() const {
  if (axes.empty() || axes.size() > 2) throw SpecError("sweep needs one or two axes");
  for (const auto& a : axes) {
    if (a.steps == 0) throw SpecError("axis '" + a.name + "' has zero steps");
    if (!std::isfinite(a.lo) || !std::isfinite(a.hi))
      throw SpecError("axis '" + a.name + "' has a non-finite bound");
    if (a.name == "severity" || a.name == "psi") {
      if (a.lo < 0.0 || a.hi > 1.0) throw SpecError("axis '" + a.name + "' must lie in [0, 1]");
    } else if (is_parameter(scenario, a.name)) {
      if (a.lo < -1.0 || a.hi > 1.0) throw SpecError("axis '" + a.name + "' must lie in [-1, 1]");
    } else {
      throw SpecError("unknown axis '" + a.name + "' for scenario " +
                      std::string(to_string(scenario)));
    }
  }
  if (axes.size() == 2 && axes[0].name == axes[1].name)
    throw SpecError("duplicate axis '" + axes[0].name + "'");
  const bool sev_axis = std::any_of(axes.begin(), axes.end(), [](const SweepAxis& a) {
    return a.name == "severity" || a.name == "psi";
  });
  if (sev_axis && (fixed.count("severity") || fixed.count("psi")))
    throw SpecError("severity/psi given both as an axis and as a fixed value");
  if (fixed.count("severity") && fixed.count("psi"))
    throw SpecError("give either severity or psi, not both");
  for (const auto& [name, value] : fixed) {
    if (name == "severity" || name == "psi") continue;
    if (!is_parameter(scenario, name))
      throw SpecError("scenario " + std::string(to_string(scenario)) + " has no parameter '" +
                      name + "'");
  }
}

SweepResult run_sweep(const SweepGrid& grid, RuleFamily family, unsigned threads) {
  grid.validate();
  const std::size_t n0 = grid.axes[0].steps;
  const std::size_t n1 = grid.axes.size() > 1 ? grid.axes[1].steps : 1;
  const std::size_t cells = n0 * n1;
  const std::size_t per_cell = family == RuleFamily::both ? 2 : 1;

  SweepResult result;
  result.scenario = grid.scenario;
  result.rows.resize(cells * per_cell);

  parallel_for(cells, threads, [&](std::size_t cell) {
    const std::size_t i0 = cell / n1;
    const std::size_t i1 = cell % n1;

    CellSetup setup;
    std::vector<double> axis_values;
    std::ostringstream overrides;
    auto set = [&](const std::string& name, double value) {
      if (name == "severity") {
        setup.severity = std::clamp(value, kSeverityClamp, 1.0 - kSeverityClamp);
      } else if (name == "psi") {
        setup.psi = std::clamp(value, kSeverityClamp, 1.0 - kSeverityClamp);
      } else {
        setup.params.at(name) = value;
        if (name != "gamma") {
          if (overrides.tellp() > 0) overrides << ';';
          overrides << name << '=' << fmt12(value);
        }
      }
    };
    for (const auto& [name, value] : grid.fixed) set(name, value);
    for (std::size_t a = 0; a < grid.axes.size(); ++a) {
      const double v = grid.axes[a].value(a == 0 ? i0 : i1);
      axis_values.push_back(v);
      set(grid.axes[a].name, v);
    }
    setup.overrides = overrides.str();

    std::vector<SelectionRule> rules;
    if (family != RuleFamily::adjustment) {
      if (setup.psi)
        rules.push_back(SelectionRule::truncate_at_threshold(psi_to_threshold(*setup.psi)));
      else
        rules.push_back(SelectionRule::truncate_at_severity(setup.severity.value_or(0.5)));
    }
    if (family != RuleFamily::truncation) rules.push_back(SelectionRule::adjustment());

    for (std::size_t k = 0; k < rules.size(); ++k) {
      auto& row = result.rows[cell * per_cell + k];
      const auto& rule = rules[k];
      row.axis_values = axis_values;
      row.rule = rule.kind();
      row.gamma = setup.params.gamma;
      row.param_overrides = setup.overrides;
      if (rule.kind() == SelectionRule::Kind::truncation) row.severity = rule.severity();
      row.psi = rule.psi();
      try {
        const auto report = plim_matrix(build_preset(grid.scenario, setup.params), rule);
        row.iv_plim = report.iv_plim;
        row.ols_plim = report.ols_plim;
        row.iv_bias = report.iv_bias();
        row.ols_bias = report.ols_bias();
        row.margin = std::abs(row.ols_bias) - std::abs(row.iv_bias);
        row.least_biased = classify_least_biased(row.iv_bias, row.ols_bias);
        row.status = "ok";
      } catch (const InfeasibleModelError&) {
        row.status = "infeasible";
      } catch (const DegenerateEstimandError&) {
        row.status = "degenerate";
      }
      if (row.status != "ok") {
        const double nan = std::nan("");
        row.iv_plim = row.ols_plim = row.iv_bias = row.ols_bias = row.margin = nan;
        row.least_biased = LeastBiased::infeasible;
      }
    }
  });
  return result;
}

void write_sweep_csv(const SweepResult& result, std::ostream& out) {
  out << "scenario,rule,gamma,severity,psi,param_overrides,iv_plim,ols_plim,iv_bias,ols_bias,"
         "margin,least_biased,status\n";
  auto num = [](double x) { return std::isnan(x) ? std::string() : fmt12(x); };
  for (const auto& r : result.rows) {
    out << to_string(result.scenario) << ',' << to_string(r.rule) << ',' << fmt12(r.gamma) << ','
        << (r.severity ? fmt12(*r.severity) : std::string()) << ',' << fmt12(r.psi) << ','
        << r.param_overrides << ',' << num(r.iv_plim) << ',' << num(r.ols_plim) << ','
        << num(r.iv_bias) << ',' << num(r.ols_bias) << ',' << num(r.margin) << ','
        << to_string(r.least_biased) << ',' << r.status << '\n';
  }
}

void write_psi_csv(std::span<const PsiRow> rows, std::ostream& out) {
  out << "severity,threshold,psi\n";
  for (const auto& r : rows)
    out << fmt12(r.severity) << ',' << fmt12(r.threshold) << ',' << fmt12(r.psi) << '\n';
}

std::vector<PsiRow> figure_psi_curve() {
  std::vector<double> q;
  for (int i = 1; i <= 999; ++i) q.push_back(i / 1000.0);
  return psi_curve(q);
}

SweepGrid figure_region_grid(std::size_t steps) {
  SweepGrid g;
  g.scenario = Scenario::baseline;
  g.axes = {{"gamma", 0.0, 1.0, steps}, {"severity", 0.0, 1.0, steps}};
  return g;
}

}  // namespace ivsel
