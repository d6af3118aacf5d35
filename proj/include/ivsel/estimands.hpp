#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ivsel/scenario.hpp"
#include "ivsel/sem.hpp"
#include "ivsel/truncation.hpp"

namespace ivsel {

/// How the analysis conditions on the selection node S.
class SelectionRule {
 public:
  enum class Kind { none, adjustment, truncation };

  static SelectionRule none() { return SelectionRule(Kind::none, std::nullopt, std::nullopt); }
  static SelectionRule adjustment() {
    return SelectionRule(Kind::adjustment, std::nullopt, std::nullopt);
  }
  /// Retain units with S >= s0.
  static SelectionRule truncate_at_threshold(double s0);
  /// Retain units with S >= Phi^-1(q); q = Pr(R = 0) in (0, 1).
  static SelectionRule truncate_at_severity(double q);

  Kind kind() const noexcept { return kind_; }
  double threshold() const;  // truncation only
  double severity() const;   // truncation only
  /// 0 without selection, 1 under adjustment, psi(s0) under truncation.
  double psi() const;

  /// Direction e_S over the model's node order.
  TruncationSpec truncation_spec(const PathModel& model) const;

  std::string label() const;  // "none", "adjust", "truncate@q=0.25"

 private:
  SelectionRule(Kind kind, std::optional<double> threshold, std::optional<double> severity)
      : kind_(kind), threshold_(threshold), severity_(severity) {}

  Kind kind_;
  std::optional<double> threshold_;
  std::optional<double> severity_;
};

std::string to_string(SelectionRule::Kind k);

enum class Engine { matrix, closed_form };

struct BiasTerm {
  std::string path;
  double value = 0.0;
};

/// Probability limits of IV and OLS under a selection rule.
/// iv_plim == beta_true + sum(iv_bias_terms); likewise for OLS.
struct EstimandReport {
  double beta_true = 0.0;
  double iv_plim = 0.0;
  double ols_plim = 0.0;
  std::vector<BiasTerm> iv_bias_terms;
  std::vector<BiasTerm> ols_bias_terms;
  double psi_used = 0.0;
  Engine engine = Engine::matrix;
  /// Set when the report describes a preset graph. Not serialized.
  std::optional<Scenario> scenario;

  double iv_bias() const { return iv_plim - beta_true; }
  double ols_bias() const { return ols_plim - beta_true; }
};

nlohmann::json to_json(const EstimandReport& r);

/// Denominators with magnitude below this raise DegenerateEstimandError.
inline constexpr double kDegenerateDenominator = 1e-10;

/// General engine. Conditions the implied covariance on S (Schur complement
/// for adjustment, Tallis variance for truncation) and forms
///   IV  = Cov(Z,Y|.) / Cov(Z,T|.),   OLS = Cov(T,Y|.) / Var(T|.).
/// Models tagged with a preset get path-labelled bias terms; the last term
/// absorbs the remainder so the terms always sum to the matrix plim.
EstimandReport plim_matrix(const PathModel& model, const SelectionRule& rule);

/// Same computation on a given covariance with the deflation factor psi
/// applied along S: Sigma - psi * Sigma e_S e_S' Sigma / Var(S).
/// psi = 1 is adjustment, psi = 0 no selection.
std::pair<double, double> plims_at_psi(const PathModel& model, double psi);

// Closed forms. psi in [0, 1]: 0 is no selection, 1 adjustment. Throw
// std::domain_error for psi outside [0, 1] and DegenerateEstimandError for a
// vanishing denominator.

/// IV bias -d1 d2 psi g^2 / (1 - psi g^2); OLS bias d1 d2.
EstimandReport closed_form_baseline(const ScenarioParams& p, double psi);

/// Adds g tau (1 - psi) / (1 - psi g^2) to both estimators.
EstimandReport closed_form_mediator(const ScenarioParams& p, double psi);

/// Mediator terms plus -g d3 d4 psi / (1 - psi g^2) on both estimators.
EstimandReport closed_form_confounded_mediator(const ScenarioParams& p, double psi);

/// IV: -d1 d2 psi g^2 / D - g d3 d2 psi / D with D = 1 - psi g (g + d1 d3).
/// OLS comes from the matrix engine (see treatment_confounder_ols_printed).
EstimandReport closed_form_treatment_confounder(const ScenarioParams& p, double psi);

/// Dispatch on scenario.
EstimandReport closed_form(Scenario s, const ScenarioParams& p, double psi);

/// The published OLS display for the treatment-confounder graph, whose
/// denominator reads 1 - psi g (g + d1 d3)^2. Kept for comparison only.
double treatment_confounder_ols_printed(const ScenarioParams& p, double psi);

/// Same numerator over the denominator 1 - psi (g + d1 d3)^2, i.e. Var(T | selection).
double treatment_confounder_ols_corrected(const ScenarioParams& p, double psi);

struct FormulaCheckRow {
  ScenarioParams params;
  double psi = 0.0;
  double iv_closed_form = 0.0;
  double iv_matrix = 0.0;
  double ols_printed = 0.0;
  double ols_corrected = 0.0;
  double ols_matrix = 0.0;
};

struct FormulaCheckReport {
  std::vector<FormulaCheckRow> rows;
  double max_iv_abs_diff = 0.0;
  double max_ols_printed_abs_diff = 0.0;
  double max_ols_corrected_abs_diff = 0.0;
};

/// Compares the treatment-confounder closed forms against the matrix engine
/// over `count` random feasible parameterizations, psi drawn from (0, 1].
FormulaCheckReport treatment_confounder_formula_check(std::size_t count, std::uint64_t seed);
nlohmann::json to_json(const FormulaCheckReport& r, bool include_rows = true);

/// |OLS bias| - |IV bias| for the baseline graph under truncation:
/// |d1 d2| (1 - 2 psi g^2) / (1 - psi g^2). Positive means IV is less biased.
double preference_margin(double gamma, double delta1, double delta2, double psi);

struct BoundsInterval {
  double lo = 0.0;
  double hi = 0.0;
  bool applies = false;
};

/// [min, max] of the IV plim under selection and the OLS plim. Only the
/// baseline graph guarantees the interval contains beta; other scenarios
/// return applies = false. Throws SpecError when the reports lack a scenario
/// or come from different scenarios.
BoundsInterval bounds_interval(const EstimandReport& report_iv, const EstimandReport& report_ols);

}  // namespace ivsel
