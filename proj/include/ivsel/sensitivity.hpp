#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ivsel/estimands.hpp"
#include "ivsel/scenario.hpp"

namespace ivsel {

enum class LeastBiased { iv, ols, tie, infeasible };
std::string_view to_string(LeastBiased l);

/// Compares |iv_bias| with |ols_bias|; a tie when they differ by at most tol.
LeastBiased classify_least_biased(double iv_bias, double ols_bias, double tol = 1e-12);

struct PsiRow {
  double severity = 0.0;
  double threshold = 0.0;
  double psi = 0.0;
};

/// (q, s0 = Phi^-1(q), psi(s0)) per severity; throws std::domain_error outside (0, 1).
std::vector<PsiRow> psi_curve(std::span<const double> severities);

/// Inclusive, linearly spaced axis over one parameter. Names: the scenario
/// parameters (pi, beta, gamma, tau, delta1..delta4), "severity" or "psi".
struct SweepAxis {
  std::string name;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t steps = 1;

  double value(std::size_t i) const;
};

/// Severities are clamped to [kSeverityClamp, 1 - kSeverityClamp].
inline constexpr double kSeverityClamp = 1e-4;

struct SweepGrid {
  Scenario scenario = Scenario::baseline;
  /// Non-axis overrides; may include "severity" or "psi" (default severity 0.5).
  std::map<std::string, double> fixed;
  std::vector<SweepAxis> axes;  // 1 or 2

  /// Throws SpecError on unknown names, bad ranges or axis count.
  void validate() const;
};

enum class RuleFamily { truncation, adjustment, both };

struct SweepRow {
  std::vector<double> axis_values;
  SelectionRule::Kind rule = SelectionRule::Kind::truncation;
  double gamma = 0.0;
  std::optional<double> severity;  // truncation rows only
  double psi = 0.0;
  std::string param_overrides;     // "name=value;..." for non-gamma parameters set by the grid
  double iv_plim = 0.0;
  double ols_plim = 0.0;
  double iv_bias = 0.0;
  double ols_bias = 0.0;
  double margin = 0.0;             // |ols_bias| - |iv_bias|
  LeastBiased least_biased = LeastBiased::infeasible;
  std::string status;              // "ok", "infeasible", "degenerate"
};

struct SweepResult {
  Scenario scenario = Scenario::baseline;
  std::vector<SweepRow> rows;
};

/// Evaluates the matrix engine on every cell, row-major over axes in
/// declaration order; with RuleFamily::both each cell yields a truncation row
/// followed by an adjustment row. Infeasible or degenerate cells are kept
/// with a status flag.
SweepResult run_sweep(const SweepGrid& grid, RuleFamily family, unsigned threads = 0);

/// Header: scenario,rule,gamma,severity,psi,param_overrides,iv_plim,ols_plim,
/// iv_bias,ols_bias,margin,least_biased,status. 12 significant digits.
void write_sweep_csv(const SweepResult& result, std::ostream& out);
void write_psi_csv(std::span<const PsiRow> rows, std::ostream& out);

/// Severity grid used for the psi-vs-severity figure: 0.001..0.999 in 999 steps.
std::vector<PsiRow> figure_psi_curve();
/// Baseline region map: gamma in [0, 1] x severity in [0, 1] (clamped), 201 x 201.
SweepGrid figure_region_grid(std::size_t steps = 201);

}  // namespace ivsel
