#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ivsel/estimands.hpp"
#include "ivsel/sem.hpp"

namespace ivsel {

enum class Method { iv, ols };
std::string_view to_string(Method m);

/// Synthetic draws from a PathModel, one column per node in model order.
struct Dataset {
  std::vector<std::string> names;
  std::vector<bool> latent;
  std::vector<std::vector<double>> columns;
  std::size_t n = 0;
  /// Selection indicator R; empty until apply_selection.
  std::vector<std::uint8_t> retained;
  /// Seed the data were drawn with; bootstrap streams derive from it.
  std::uint64_t seed = 0;
  std::size_t instrument = 0;
  std::size_t treatment = 0;
  std::size_t outcome = 0;
  std::size_t selection = 0;

  std::span<const double> column(std::string_view name) const;
  bool selection_applied() const noexcept { return !retained.empty(); }
  std::size_t n_retained() const;
};

struct McReport {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t n_retained = 0;
  SelectionRule rule = SelectionRule::none();
  Method method = Method::iv;
};

inline constexpr int kBootstrapResamples = 200;
inline constexpr std::size_t kMinRetained = 10;
inline constexpr double kMinSampleFirstStage = 1e-6;

/// Draws n rows. Node k's shocks come from Xoshiro256ss(seed, k) through
/// std::normal_distribution scaled by the standardizing shock variance, and
/// values are propagated in topological order. Samples drawn with the same
/// seed are prefixes of one another.
Dataset simulate(const PathModel& model, std::size_t n, std::uint64_t seed);

/// truncation: R = 1(S >= s0); none / adjustment: every row retained.
Dataset apply_selection(const Dataset& data, const SelectionRule& rule);

/// Covariance-ratio estimate on retained rows (rows with R = 0 from a prior
/// apply_selection are excluded, and a truncation rule filters further).
/// Under adjustment Z, T and Y are residualized on S with an intercept first.
/// Standard error: Poisson(1) bootstrap over rows with kBootstrapResamples
/// replicates, replicate r seeded from (data.seed, r).
McReport estimate(const Dataset& data, Method method, const SelectionRule& rule,
                  unsigned threads = 0);

struct RuleEstimates {
  McReport iv;
  McReport ols;
};

/// estimate() for several rules and both methods with shared bootstrap
/// replicates, so a single pass over the rows serves every rule.
std::vector<RuleEstimates> estimate_rules(const Dataset& data, std::span<const SelectionRule> rules,
                                          unsigned threads = 0);

struct StratifiedEstimate {
  double estimate = 0.0;
  std::size_t strata_used = 0;
};

/// Literal stratify-and-average adjustment: split retained rows into
/// `strata` equal-count bins of S, compute Cov(Z,Y)/Cov(Z,T) within each bin
/// holding at least `min_rows` rows, and average weighted by bin size.
StratifiedEstimate stratified_adjustment_iv(const Dataset& data, std::size_t strata = 20,
                                            std::size_t min_rows = 500);

struct ConvergenceRow {
  std::size_t n = 0;
  double estimate = 0.0;
  double std_error = 0.0;
  double plim = 0.0;
  double abs_error = 0.0;
};

/// MC estimate against the matrix-engine plim at each sample size.
std::vector<ConvergenceRow> convergence_report(const PathModel& model, const SelectionRule& rule,
                                               Method method, std::span<const std::size_t> n_grid,
                                               std::uint64_t seed, unsigned threads = 0);

/// CSV with one column per node plus R. observed_only drops latent columns
/// and rows with R = 0.
void write_csv(const Dataset& data, std::ostream& out, bool observed_only);

}  // namespace ivsel
