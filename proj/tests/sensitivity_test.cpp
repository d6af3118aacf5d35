#include "ivsel/sensitivity.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "ivsel/error.hpp"
#include "ivsel/normal.hpp"

namespace ivsel {
namespace {

std::map<std::string, double> reference_fixed() {
  return {{"pi", 0.5}, {"beta", 0.4}, {"delta1", 0.5}, {"delta2", 0.5}};
}

TEST(Classify, Examples) {
  EXPECT_EQ(classify_least_biased(-0.054878, 0.25), LeastBiased::iv);
  EXPECT_EQ(classify_least_biased(0.1, 0.1), LeastBiased::tie);
  EXPECT_EQ(classify_least_biased(-0.1, 0.1), LeastBiased::tie);
  EXPECT_EQ(classify_least_biased(-0.3, 0.25), LeastBiased::ols);
  EXPECT_EQ(to_string(LeastBiased::ols), "OLS");
  EXPECT_EQ(to_string(LeastBiased::iv), "IV");
}

TEST(PsiCurve, ValuesAndErrors) {
  const std::vector<double> q{0.291, 0.5, 0.9};
  const auto rows = psi_curve(q);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_NEAR(rows[0].threshold, -0.5504656950201126, 1e-9);
  EXPECT_NEAR(rows[0].psi, 0.5, 0.005);
  EXPECT_NEAR(rows[1].psi, 2.0 / std::numbers::pi, 1e-12);
  EXPECT_NEAR(rows[2].threshold, 1.2815515655446004, 1e-9);
  const std::vector<double> bad{0.5, 1.0};
  EXPECT_THROW(psi_curve(bad), std::domain_error);
}

TEST(PsiCurve, FigureGridIsMonotone) {
  const auto rows = figure_psi_curve();
  ASSERT_EQ(rows.size(), 999u);
  EXPECT_NEAR(rows.front().severity, 0.001, 1e-15);
  EXPECT_NEAR(rows.back().severity, 0.999, 1e-12);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_GT(rows[i].psi, rows[i - 1].psi);
}

TEST(SweepAxis, InclusiveEndpoints) {
  SweepAxis a{"tau", -1.0, 1.0, 41};
  EXPECT_EQ(a.value(0), -1.0);
  EXPECT_EQ(a.value(40), 1.0);
  EXPECT_NEAR(a.value(20), 0.0, 1e-15);
  SweepAxis single{"gamma", 0.3, 0.3, 1};
  EXPECT_EQ(single.value(0), 0.3);
}

TEST(SweepGrid, Validation) {
  SweepGrid g;
  EXPECT_THROW(g.validate(), SpecError);
  g.axes = {{"tau", 0, 1, 3}};
  EXPECT_THROW(g.validate(), SpecError);  // baseline has no tau
  g.axes = {{"gamma", 0, 1, 0}};
  EXPECT_THROW(g.validate(), SpecError);
  g.axes = {{"gamma", -2, 1, 3}};
  EXPECT_THROW(g.validate(), SpecError);
  g.axes = {{"gamma", 0, 1, 3}, {"gamma", 0, 1, 3}};
  EXPECT_THROW(g.validate(), SpecError);
  g.axes = {{"gamma", 0, 1, 3}, {"severity", 0, 1, 3}};
  g.fixed = {{"psi", 0.3}};
  EXPECT_THROW(g.validate(), SpecError);
  g.fixed = {{"delta3", 0.3}};
  EXPECT_THROW(g.validate(), SpecError);
  g.fixed = reference_fixed();
  EXPECT_NO_THROW(g.validate());
}

TEST(RunSweep, CardinalityAndOrdering) {
  SweepGrid g;
  g.scenario = Scenario::mediator;
  g.fixed = {{"beta", 0.1}, {"gamma", 0.6}, {"severity", 0.5}};
  g.axes = {{"tau", -1.0, 1.0, 41}};
  const auto one = run_sweep(g, RuleFamily::truncation, 1);
  ASSERT_EQ(one.rows.size(), 41u);
  for (std::size_t i = 0; i < 41; ++i) EXPECT_NEAR(one.rows[i].axis_values[0], -1.0 + 0.05 * i, 1e-12);
  EXPECT_EQ(one.rows[20].param_overrides, "beta=0.1;tau=0");

  const auto both = run_sweep(g, RuleFamily::both, 1);
  ASSERT_EQ(both.rows.size(), 82u);
  EXPECT_EQ(both.rows[0].rule, SelectionRule::Kind::truncation);
  EXPECT_EQ(both.rows[1].rule, SelectionRule::Kind::adjustment);
  EXPECT_FALSE(both.rows[1].severity.has_value());
  EXPECT_EQ(both.rows[1].psi, 1.0);

  g.scenario = Scenario::baseline;
  g.fixed = reference_fixed();
  g.axes = {{"gamma", 0.0, 0.9, 4}, {"severity", 0.1, 0.9, 3}};
  const auto grid = run_sweep(g, RuleFamily::truncation, 2);
  ASSERT_EQ(grid.rows.size(), 12u);
  EXPECT_NEAR(grid.rows[4].gamma, 0.3, 1e-15);
  EXPECT_NEAR(*grid.rows[4].severity, 0.5, 1e-15);
  EXPECT_NEAR(*grid.rows[5].severity, 0.9, 1e-15);
}

TEST(RunSweep, ThreadCountDoesNotChangeResults) {
  auto g = figure_region_grid(21);
  g.fixed = reference_fixed();
  const auto a = run_sweep(g, RuleFamily::both, 1);
  const auto b = run_sweep(g, RuleFamily::both, 4);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].status, b.rows[i].status);
    if (a.rows[i].status == "ok") EXPECT_EQ(a.rows[i].iv_plim, b.rows[i].iv_plim);
  }
}

TEST(RunSweep, PsiAxisUsesThreshold) {
  SweepGrid g;
  g.fixed = reference_fixed();
  g.fixed["gamma"] = 0.6;
  g.axes = {{"psi", 0.1, 0.9, 5}};
  const auto r = run_sweep(g, RuleFamily::truncation, 1);
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    EXPECT_NEAR(r.rows[i].psi, 0.1 + 0.2 * i, 1e-10);
    const double psi_g2 = r.rows[i].psi * 0.36;
    EXPECT_NEAR(r.rows[i].iv_bias, -0.25 * psi_g2 / (1 - psi_g2), 1e-10);
  }
}

TEST(RunSweep, GammaSymmetry) {
  SweepGrid g;
  g.fixed = reference_fixed();
  g.axes = {{"gamma", -0.95, 0.95, 39}, {"severity", 0.05, 0.95, 10}};
  const auto r = run_sweep(g, RuleFamily::both, 1);
  const std::size_t per_gamma = 20;
  for (std::size_t i = 0; i < 39; ++i)
    for (std::size_t k = 0; k < per_gamma; ++k) {
      const auto& a = r.rows[i * per_gamma + k];
      const auto& b = r.rows[(38 - i) * per_gamma + k];
      EXPECT_NEAR(a.iv_plim, b.iv_plim, 1e-12);
      EXPECT_NEAR(a.ols_plim, b.ols_plim, 1e-12);
      EXPECT_EQ(a.least_biased, b.least_biased);
    }
}

TEST(RunSweep, RegionBoundaryMatchesCriterion) {
  auto g = figure_region_grid();
  g.fixed = reference_fixed();
  const auto r = run_sweep(g, RuleFamily::truncation, 0);
  ASSERT_EQ(r.rows.size(), 201u * 201u);
  auto side = [](const SweepRow& row) { return row.psi * row.gamma * row.gamma <= 0.5; };
  std::size_t infeasible = 0;
  for (std::size_t i = 0; i < 201; ++i)
    for (std::size_t j = 0; j < 201; ++j) {
      const auto& row = r.rows[i * 201 + j];
      if (row.status != "ok") {
        ++infeasible;
        continue;
      }
      if (std::abs(row.gamma) < 0.707) EXPECT_EQ(row.least_biased, LeastBiased::iv);
      const bool iv_side = row.margin >= 0;
      if (iv_side == side(row)) continue;
      // Misclassified cells must border the analytic boundary.
      bool borders = false;
      for (std::size_t jj : {j - 1, j + 1})
        if (jj < 201 && side(r.rows[i * 201 + jj]) != side(row)) borders = true;
      EXPECT_TRUE(borders) << "gamma=" << row.gamma << " psi=" << row.psi;
    }
  // gamma = 1 makes S a copy of T.
  EXPECT_EQ(infeasible, 201u);
}

TEST(RunSweep, BoundsContainBeta) {
  SweepGrid g;
  g.fixed = {{"pi", 0.5}, {"beta", -0.3}, {"delta1", 0.6}, {"delta2", -0.4}};
  g.axes = {{"gamma", -0.9, 0.9, 19}, {"severity", 0.0, 1.0, 21}};
  const auto r = run_sweep(g, RuleFamily::both, 1);
  for (const auto& row : r.rows) {
    ASSERT_EQ(row.status, "ok");
    EXPECT_LE(std::min(row.iv_plim, row.ols_plim), -0.3 + 1e-12);
    EXPECT_GE(std::max(row.iv_plim, row.ols_plim), -0.3 - 1e-12);
  }
}

TEST(RunSweep, MediatorTruncationCanExceedAdjustment) {
  SweepGrid g;
  g.scenario = Scenario::mediator;
  g.fixed = {{"pi", 0.5}, {"beta", 0.1}, {"gamma", 0.6}, {"tau", 0.4}, {"delta1", 0.5}, {"delta2", 0.5}};
  g.axes = {{"severity", 0.05, 0.95, 19}};
  const auto r = run_sweep(g, RuleFamily::both, 1);
  const double adj = std::abs(r.rows[1].iv_bias);
  EXPECT_NEAR(adj, 0.140625, 1e-12);
  std::size_t exceed = 0;
  for (std::size_t i = 0; i < r.rows.size(); i += 2)
    if (std::abs(r.rows[i].iv_bias) > adj) ++exceed;
  EXPECT_GT(exceed, 0u);
}

TEST(RunSweep, InfeasibleCellsAreFlagged) {
  SweepGrid g;
  g.fixed = {{"pi", 0.9}, {"delta1", 0.9}};
  g.axes = {{"gamma", 0.0, 0.0, 1}};
  const auto r = run_sweep(g, RuleFamily::both, 1);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[0].status, "infeasible");
  EXPECT_TRUE(std::isnan(r.rows[0].iv_plim));
  EXPECT_EQ(r.rows[0].least_biased, LeastBiased::infeasible);

  std::ostringstream out;
  write_sweep_csv(r, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line,
            "scenario,rule,gamma,severity,psi,param_overrides,iv_plim,ols_plim,iv_bias,ols_bias,"
            "margin,least_biased,status");
  std::getline(in, line);
  EXPECT_EQ(line.rfind("baseline,truncation,0,0.5,", 0), 0u);
  EXPECT_NE(line.find(",,,,,infeasible,infeasible"), std::string::npos);
}

TEST(WritePsiCsv, Format) {
  const std::vector<double> q{0.5};
  std::ostringstream out;
  write_psi_csv(psi_curve(q), out);
  EXPECT_EQ(out.str(), "severity,threshold,psi\n0.5,0,0.636619772368\n");
}

}  // namespace
}  // namespace ivsel
