#include "ivsel/estimands.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ivsel/error.hpp"
#include "ivsel/normal.hpp"
#include "ivsel/presets.hpp"
#include "ivsel/rng.hpp"

namespace ivsel {

namespace {

constexpr const char* kConfounding = "T<-U->Y";
constexpr const char* kMediation = "T->S->Y";
constexpr const char* kMediatorConfounding = "T->S<-W->Y";
constexpr const char* kSelectionOnConfounder = "T->S<-U->Y";
constexpr const char* kTotal = "total";

// Second moments the two estimators need, after conditioning.
struct Moments {
  double zy, zt, ty, tt;
};

Moments extract(const Eigen::MatrixXd& s, const PathModel& m) {
  const auto z = static_cast<Eigen::Index>(m.instrument());
  const auto t = static_cast<Eigen::Index>(m.treatment());
  const auto y = static_cast<Eigen::Index>(m.outcome());
  return {s(z, y), s(z, t), s(t, y), s(t, t)};
}

double ratio(double num, double den, const char* what) {
  if (std::abs(den) < kDegenerateDenominator) {
    std::ostringstream msg;
    msg << what << " denominator " << den << " is (near) zero; estimand not defined";
    throw DegenerateEstimandError(msg.str());
  }
  return num / den;
}

double iv_of(const Moments& m) { return ratio(m.zy, m.zt, "IV first-stage"); }
double ols_of(const Moments& m) { return ratio(m.ty, m.tt, "OLS treatment-variance"); }

Eigen::MatrixXd deflate_along_selection(const PathModel& model, double psi) {
  const auto sigma = implied_covariance(model);
  const auto s = static_cast<Eigen::Index>(model.selection());
  const Eigen::VectorXd col = sigma.sigma.col(s);
  return sigma.sigma - col * col.transpose() * (psi / sigma.sigma(s, s));
}

void check_psi(double psi) {
  if (!(psi >= 0.0 && psi <= 1.0))
    throw std::domain_error("psi " + std::to_string(psi) + " outside [0, 1]");
}

double guarded(double den, const char* what) {
  if (std::abs(den) < kDegenerateDenominator)
    throw DegenerateEstimandError(std::string(what) + " denominator is (near) zero");
  return den;
}

EstimandReport make_report(const ScenarioParams& p, double psi, Scenario s,
                           std::vector<BiasTerm> iv, std::vector<BiasTerm> ols) {
  EstimandReport r;
  r.beta_true = p.beta;
  r.psi_used = psi;
  r.engine = Engine::closed_form;
  r.scenario = s;
  auto sum = [](const std::vector<BiasTerm>& t) {
    return std::accumulate(t.begin(), t.end(), 0.0,
                           [](double acc, const BiasTerm& b) { return acc + b.value; });
  };
  r.iv_plim = p.beta + sum(iv);
  r.ols_plim = p.beta + sum(ols);
  r.iv_bias_terms = std::move(iv);
  r.ols_bias_terms = std::move(ols);
  return r;
}

double sum_terms(const std::vector<BiasTerm>& terms) {
  double s = 0.0;
  for (const auto& t : terms) s += t.value;
  return s;
}

// Labels come from the closed form; values are the closed-form terms except
// the last, which takes whatever keeps the sum equal to the matrix bias.
std::vector<BiasTerm> allocate(std::vector<BiasTerm> closed, double matrix_bias) {
  if (closed.empty()) return {{kTotal, matrix_bias}};
  closed.back().value = 0.0;
  closed.back().value = matrix_bias - sum_terms(closed);
  return closed;
}

}  // namespace

SelectionRule SelectionRule::truncate_at_threshold(double s0) {
  if (std::isnan(s0) || s0 == HUGE_VAL)
    throw std::domain_error("truncation threshold must be finite or -inf");
  return SelectionRule(Kind::truncation, s0, std::nullopt);
}

SelectionRule SelectionRule::truncate_at_severity(double q) {
  if (!(q > 0.0 && q < 1.0))
    throw std::domain_error("severity " + std::to_string(q) + " outside (0, 1)");
  return SelectionRule(Kind::truncation, std::nullopt, q);
}

double SelectionRule::threshold() const {
  if (kind_ != Kind::truncation) throw std::logic_error("threshold of a non-truncation rule");
  return threshold_ ? *threshold_ : severity_to_threshold(*severity_);
}

double SelectionRule::severity() const {
  if (kind_ != Kind::truncation) throw std::logic_error("severity of a non-truncation rule");
  return severity_ ? *severity_ : threshold_to_severity(*threshold_);
}

double SelectionRule::psi() const {
  switch (kind_) {
    case Kind::none: return 0.0;
    case Kind::adjustment: return 1.0;
    case Kind::truncation: {
      const double s0 = threshold();
      return std::isinf(s0) ? 0.0 : ivsel::psi(s0);
    }
  }
  return 0.0;
}

TruncationSpec SelectionRule::truncation_spec(const PathModel& model) const {
  if (severity_)
    return TruncationSpec::on_coordinate_severity(model.size(), model.selection(), *severity_);
  return TruncationSpec::on_coordinate(model.size(), model.selection(), threshold());
}

std::string SelectionRule::label() const {
  std::ostringstream out;
  switch (kind_) {
    case Kind::none: return "none";
    case Kind::adjustment: return "adjust";
    case Kind::truncation:
      if (severity_)
        out << "truncate@q=" << *severity_;
      else
        out << "truncate@s0=" << *threshold_;
      return out.str();
  }
  return "none";
}

std::string to_string(SelectionRule::Kind k) {
  switch (k) {
    case SelectionRule::Kind::none: return "none";
    case SelectionRule::Kind::adjustment: return "adjustment";
    case SelectionRule::Kind::truncation: return "truncation";
  }
  return "none";
}

nlohmann::json to_json(const EstimandReport& r) {
  auto terms = [](const std::vector<BiasTerm>& ts) {
    auto arr = nlohmann::json::array();
    for (const auto& t : ts) arr.push_back({{"path", t.path}, {"value", t.value}});
    return arr;
  };
  return {
      {"beta_true", r.beta_true},
      {"iv_plim", r.iv_plim},
      {"ols_plim", r.ols_plim},
      {"iv_bias_terms", terms(r.iv_bias_terms)},
      {"ols_bias_terms", terms(r.ols_bias_terms)},
      {"psi_used", r.psi_used},
      {"engine", r.engine == Engine::matrix ? "matrix" : "closed_form"},
  };
}

std::pair<double, double> plims_at_psi(const PathModel& model, double psi) {
  check_psi(psi);
  const auto m = extract(deflate_along_selection(model, psi), model);
  return {iv_of(m), ols_of(m)};
}

EstimandReport plim_matrix(const PathModel& model, const SelectionRule& rule) {
  const auto sigma = implied_covariance(model);
  Eigen::MatrixXd conditioned;
  switch (rule.kind()) {
    case SelectionRule::Kind::none: conditioned = sigma.sigma; break;
    case SelectionRule::Kind::adjustment: {
      // Every stratum S = s shares one conditional covariance, so the
      // stratified-and-averaged estimand is the Schur complement.
      const std::vector<std::string> given{model.name(model.selection())};
      conditioned = conditional_covariance(sigma, given).sigma;
      break;
    }
    case SelectionRule::Kind::truncation:
      conditioned = tallis_truncated_moments(sigma.sigma, rule.truncation_spec(model)).variance;
      break;
  }
  const auto m = extract(conditioned, model);

  EstimandReport r;
  r.beta_true = model.beta();
  r.iv_plim = iv_of(m);
  r.ols_plim = ols_of(m);
  r.psi_used = rule.psi();
  r.engine = Engine::matrix;

  const double iv_bias = r.iv_plim - r.beta_true;
  const double ols_bias = r.ols_plim - r.beta_true;
  if (const auto& tag = model.preset()) {
    r.scenario = tag->scenario;
    std::vector<BiasTerm> iv_terms;
    std::vector<BiasTerm> ols_terms;
    try {
      const auto cf = closed_form(tag->scenario, tag->params, r.psi_used);
      iv_terms = cf.iv_bias_terms;
      ols_terms = cf.ols_bias_terms;
    } catch (const DegenerateEstimandError&) {
      // Closed form undefined while the matrix route is not: report totals.
    }
    r.iv_bias_terms = allocate(std::move(iv_terms), iv_bias);
    r.ols_bias_terms = allocate(std::move(ols_terms), ols_bias);
  } else {
    r.iv_bias_terms = {{kTotal, iv_bias}};
    r.ols_bias_terms = {{kTotal, ols_bias}};
  }
  return r;
}

EstimandReport closed_form_baseline(const ScenarioParams& p, double psi) {
  check_psi(psi);
  const double g2 = p.gamma * p.gamma;
  const double d = guarded(1.0 - psi * g2, "baseline");
  const double conf = p.delta1 * p.delta2;
  return make_report(p, psi, Scenario::baseline, {{kConfounding, -conf * psi * g2 / d}},
                     {{kConfounding, conf}});
}

EstimandReport closed_form_mediator(const ScenarioParams& p, double psi) {
  check_psi(psi);
  const double g2 = p.gamma * p.gamma;
  const double d = guarded(1.0 - psi * g2, "mediator");
  const double conf = p.delta1 * p.delta2;
  const double mediated = p.gamma * p.tau * (1.0 - psi) / d;
  return make_report(p, psi, Scenario::mediator,
                     {{kConfounding, -conf * psi * g2 / d}, {kMediation, mediated}},
                     {{kConfounding, conf}, {kMediation, mediated}});
}

EstimandReport closed_form_confounded_mediator(const ScenarioParams& p, double psi) {
  auto r = closed_form_mediator(p, psi);
  const double d = 1.0 - psi * p.gamma * p.gamma;
  const double extra = -p.gamma * p.delta3 * p.delta4 * psi / d;
  r.iv_bias_terms.push_back({kMediatorConfounding, extra});
  r.ols_bias_terms.push_back({kMediatorConfounding, extra});
  r.iv_plim += extra;
  r.ols_plim += extra;
  r.scenario = Scenario::confounded_mediator;
  return r;
}

EstimandReport closed_form_treatment_confounder(const ScenarioParams& p, double psi) {
  check_psi(psi);
  const double d =
      guarded(1.0 - psi * p.gamma * (p.gamma + p.delta1 * p.delta3), "treatment-confounder IV");
  const double t1 = -p.delta1 * p.delta2 * psi * p.gamma * p.gamma / d;
  const double t2 = -p.gamma * p.delta3 * p.delta2 * psi / d;

  const auto model = build_preset(Scenario::treatment_confounder, p);
  const auto m = extract(deflate_along_selection(model, psi), model);
  const double ols = ols_of(m);
  return make_report(p, psi, Scenario::treatment_confounder,
                     {{kConfounding, t1}, {kSelectionOnConfounder, t2}}, {{kTotal, ols - p.beta}});
}

EstimandReport closed_form(Scenario s, const ScenarioParams& p, double psi) {
  switch (s) {
    case Scenario::baseline: return closed_form_baseline(p, psi);
    case Scenario::mediator: return closed_form_mediator(p, psi);
    case Scenario::confounded_mediator: return closed_form_confounded_mediator(p, psi);
    case Scenario::treatment_confounder: return closed_form_treatment_confounder(p, psi);
  }
  throw SpecError("unknown scenario");
}

namespace {

double treatment_confounder_ols_numerator_terms(const ScenarioParams& p, double psi, double den) {
  const double g = p.gamma, d1 = p.delta1, d2 = p.delta2, d3 = p.delta3;
  return p.beta + d1 * d2 * (1.0 - psi * (g * g + g * d1 * d3 + d3 * d3)) / den -
         g * d3 * d2 * psi / den;
}

}  // namespace

double treatment_confounder_ols_printed(const ScenarioParams& p, double psi) {
  check_psi(psi);
  const double a = p.gamma + p.delta1 * p.delta3;
  const double den = guarded(1.0 - psi * p.gamma * a * a, "printed treatment-confounder OLS");
  return treatment_confounder_ols_numerator_terms(p, psi, den);
}

double treatment_confounder_ols_corrected(const ScenarioParams& p, double psi) {
  check_psi(psi);
  const double a = p.gamma + p.delta1 * p.delta3;
  const double den = guarded(1.0 - psi * a * a, "treatment-confounder OLS");
  return treatment_confounder_ols_numerator_terms(p, psi, den);
}

FormulaCheckReport treatment_confounder_formula_check(std::size_t count, std::uint64_t seed) {
  Xoshiro256ss rng(seed, 0xF0C5);
  FormulaCheckReport out;
  out.rows.reserve(count);
  while (out.rows.size() < count) {
    FormulaCheckRow row;
    row.params = draw_feasible_params(Scenario::treatment_confounder, rng);
    row.psi = 1.0 - rng.uniform();  // (0, 1]
    try {
      const auto model = build_preset(Scenario::treatment_confounder, row.params);
      const auto [iv, ols] = plims_at_psi(model, row.psi);
      row.iv_matrix = iv;
      row.ols_matrix = ols;
      row.iv_closed_form = closed_form_treatment_confounder(row.params, row.psi).iv_plim;
      row.ols_printed = treatment_confounder_ols_printed(row.params, row.psi);
      row.ols_corrected = treatment_confounder_ols_corrected(row.params, row.psi);
    } catch (const DegenerateEstimandError&) {
      continue;
    }
    out.max_iv_abs_diff = std::max(out.max_iv_abs_diff, std::abs(row.iv_closed_form - row.iv_matrix));
    out.max_ols_printed_abs_diff =
        std::max(out.max_ols_printed_abs_diff, std::abs(row.ols_printed - row.ols_matrix));
    out.max_ols_corrected_abs_diff =
        std::max(out.max_ols_corrected_abs_diff, std::abs(row.ols_corrected - row.ols_matrix));
    out.rows.push_back(row);
  }
  return out;
}

nlohmann::json to_json(const FormulaCheckReport& r, bool include_rows) {
  nlohmann::json doc{
      {"scenario", "treatment_confounder"},
      {"parameterizations", r.rows.size()},
      {"max_iv_abs_diff", r.max_iv_abs_diff},
      {"max_ols_printed_abs_diff", r.max_ols_printed_abs_diff},
      {"max_ols_corrected_abs_diff", r.max_ols_corrected_abs_diff},
      {"ols_printed_denominator", "1 - psi*gamma*(gamma + delta1*delta3)^2"},
      {"ols_corrected_denominator", "1 - psi*(gamma + delta1*delta3)^2"},
  };
  if (include_rows) {
    auto rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
      nlohmann::json params;
      for (auto name : scenario_parameters(Scenario::treatment_confounder))
        params[std::string(name)] = row.params.at(name);
      rows.push_back({{"params", params},
                      {"psi", row.psi},
                      {"iv_closed_form", row.iv_closed_form},
                      {"iv_matrix", row.iv_matrix},
                      {"ols_printed", row.ols_printed},
                      {"ols_corrected", row.ols_corrected},
                      {"ols_matrix", row.ols_matrix}});
    }
    doc["rows"] = std::move(rows);
  }
  return doc;
}

double preference_margin(double gamma, double delta1, double delta2, double psi) {
  const double pg2 = psi * gamma * gamma;
  return std::abs(delta1 * delta2) * (1.0 - 2.0 * pg2) / guarded(1.0 - pg2, "preference margin");
}

BoundsInterval bounds_interval(const EstimandReport& report_iv, const EstimandReport& report_ols) {
  if (!report_iv.scenario || !report_ols.scenario)
    throw SpecError("bounds_interval needs reports computed on a preset scenario");
  if (*report_iv.scenario != *report_ols.scenario)
    throw SpecError("bounds_interval: reports come from different scenarios");
  BoundsInterval b;
  b.lo = std::min(report_iv.iv_plim, report_ols.ols_plim);
  b.hi = std::max(report_iv.iv_plim, report_ols.ols_plim);
  b.applies = *report_iv.scenario == Scenario::baseline;
  return b;
}

}  // namespace ivsel
