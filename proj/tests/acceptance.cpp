#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ivsel/estimands.hpp"
#include "ivsel/monte_carlo.hpp"
#include "ivsel/normal.hpp"
#include "ivsel/presets.hpp"
#include "ivsel/rng.hpp"
#include "ivsel/sensitivity.hpp"
#include "ivsel/truncation.hpp"

namespace {

using namespace ivsel;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass;
  std::string detail;
};

char buf[512];

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

ScenarioParams reference() {
  ScenarioParams p;
  p.pi = 0.5;
  p.beta = 0.4;
  p.gamma = 0.6;
  p.delta1 = 0.5;
  p.delta2 = 0.5;
  return p;
}

Outcome engines_agree() {
  const auto t0 = Clock::now();
  Xoshiro256ss rng(1001);
  double worst = 0.0;
  for (auto s : {Scenario::baseline, Scenario::mediator, Scenario::confounded_mediator})
    for (int rep = 0; rep < 1000; ++rep) {
      const auto p = draw_feasible_params(s, rng);
      const auto m = build_preset(s, p);
      for (int k = 1; k <= 10; ++k) {
        const double psi = 0.1 * k;
        const auto [iv, ols] = plims_at_psi(m, psi);
        const auto cf = closed_form(s, p, psi);
        worst = std::max({worst, std::abs(iv - cf.iv_plim), std::abs(ols - cf.ols_plim)});
      }
    }
  const double secs = seconds_since(t0);
  return {worst < 1e-10 && secs < 10.0, fmt("max |closed_form - matrix| = %.3g, %.2f s", worst, secs)};
}

Outcome point_checks() {
  const auto m = build_preset(Scenario::baseline, reference());
  const double adj = plim_matrix(m, SelectionRule::adjustment()).iv_plim;
  const double trunc = plim_matrix(m, SelectionRule::truncate_at_severity(0.5)).iv_plim;
  // At the median threshold psi = 2/pi exactly.
  const double psi0 = 2.0 / std::numbers::pi;
  const double expected = 0.4 - 0.25 * psi0 * 0.36 / (1.0 - psi0 * 0.36);
  const bool ok = std::abs(adj - 0.259375) <= 1e-12 && std::abs(trunc - expected) <= 1e-6;
  return {ok, fmt("adjustment %.15g, truncation@0.5 %.10f (evaluated %.10f; quoted 0.325673)", adj,
                  trunc, expected)};
}

Outcome psi_calibration() {
  const double at = psi(severity_to_threshold(0.291));
  bool increasing = true;
  double prev = -1.0;
  for (int i = 1; i <= 600; ++i) {
    const double v = psi(severity_to_threshold(i / 601.0));
    increasing = increasing && v > prev;
    prev = v;
  }
  return {std::abs(at - 0.5) <= 0.005 && increasing,
          fmt("psi(severity 0.291) = %.6f, strictly increasing on 600 points: %s", at,
              increasing ? "yes" : "no")};
}

SweepResult region_grid() {
  auto g = figure_region_grid(201);
  g.fixed = {{"pi", 0.5}, {"beta", 0.4}, {"delta1", 0.5}, {"delta2", 0.5}};
  return run_sweep(g, RuleFamily::both, 0);
}

Outcome preference_boundary(const SweepResult& r) {
  constexpr std::size_t n = 201;
  auto row = [&](std::size_t i, std::size_t j) -> const SweepRow& { return r.rows[2 * (i * n + j)]; };
  auto side = [](const SweepRow& x) { return x.psi * x.gamma * x.gamma <= 0.5; };
  std::size_t misplaced = 0, flips = 0, weak_not_iv = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const auto& x = row(i, j);
      if (x.status != "ok") continue;
      if (std::abs(x.gamma) < 0.707 && x.least_biased != LeastBiased::iv) ++weak_not_iv;
      if (j + 1 < n && row(i, j + 1).status == "ok" &&
          (x.margin >= 0) != (row(i, j + 1).margin >= 0))
        ++flips;
      if ((x.margin >= 0) == side(x)) continue;
      bool borders = false;
      for (auto [di, dj] : {std::pair{-1, 0}, {1, 0}, {0, -1}, {0, 1}}) {
        const auto ii = static_cast<std::size_t>(static_cast<long>(i) + di);
        const auto jj = static_cast<std::size_t>(static_cast<long>(j) + dj);
        if (ii < n && jj < n && side(row(ii, jj)) != side(x)) borders = true;
      }
      if (!borders) ++misplaced;
    }
  return {misplaced == 0 && weak_not_iv == 0 && flips > 0,
          fmt("%zu sign flips, %zu off-boundary misclassifications, %zu |gamma|<0.707 cells not IV",
              flips, misplaced, weak_not_iv)};
}

Outcome adjustment_dominates(const SweepResult& r) {
  std::size_t violations = 0, cells = 0;
  double worst = 0.0;
  for (std::size_t k = 0; k + 1 < r.rows.size(); k += 2) {
    const auto& tr = r.rows[k];
    const auto& adj = r.rows[k + 1];
    if (tr.status != "ok" || adj.status != "ok") continue;
    ++cells;
    const double excess = std::abs(tr.iv_bias) - std::abs(adj.iv_bias);
    worst = std::max(worst, excess);
    if (excess > 1e-12) ++violations;
  }
  return {violations == 0, fmt("%zu cells, %zu violations, max excess %.3g", cells, violations, worst)};
}

Outcome truncation_limit() {
  const auto m = build_preset(Scenario::baseline, reference());
  const auto adj = plim_matrix(m, SelectionRule::adjustment());
  const double adj_bias = std::abs(adj.iv_bias());
  bool decreasing = true;
  double prev = HUGE_VAL, gap = 0.0;
  for (int s0 = 0; s0 <= 8; ++s0) {
    gap = std::abs(plim_matrix(m, SelectionRule::truncate_at_threshold(s0)).iv_plim - adj.iv_plim);
    decreasing = decreasing && gap < prev;
    prev = gap;
  }
  const double rel = gap / adj_bias;
  return {decreasing && rel <= 0.02,
          fmt("decreasing: %s; gap at s0=8 is %.4f of |adjustment bias| (bar 0.02)",
              decreasing ? "yes" : "no", rel)};
}

Outcome bounds_contain_beta() {
  Xoshiro256ss rng(7007);
  std::size_t misses = 0;
  double worst = 0.0;
  for (int rep = 0; rep < 10'000; ++rep) {
    const auto p = draw_feasible_params(Scenario::baseline, rng);
    const auto m = build_preset(Scenario::baseline, p);
    const auto rule = rep % 2 ? SelectionRule::adjustment()
                              : SelectionRule::truncate_at_severity(rng.uniform(0.001, 0.999));
    const auto r = plim_matrix(m, rule);
    const auto b = bounds_interval(r, r);
    const double outside = std::max(b.lo - p.beta, p.beta - b.hi);
    worst = std::max(worst, outside);
    if (outside > 1e-12) ++misses;
  }
  return {misses == 0, fmt("10000 parameterizations, %zu outside, max excursion %.3g", misses, worst)};
}

Outcome monte_carlo_oracle() {
  const auto t0 = Clock::now();
  const std::vector<SelectionRule> rules{
      SelectionRule::none(), SelectionRule::adjustment(), SelectionRule::truncate_at_severity(0.25),
      SelectionRule::truncate_at_severity(0.5), SelectionRule::truncate_at_severity(0.75)};
  std::size_t checks = 0, failed = 0;
  double worst_z = 0.0;
  for (auto s : {Scenario::baseline, Scenario::mediator, Scenario::confounded_mediator,
                 Scenario::treatment_confounder}) {
    const auto model = build_preset(s, ScenarioParams{});
    const auto data = simulate(model, 1'000'000, 20211);
    const auto mc = estimate_rules(data, rules, 0);
    for (std::size_t k = 0; k < rules.size(); ++k) {
      const auto plim = plim_matrix(model, rules[k]);
      for (const auto& [est, target] : {std::pair{mc[k].iv, plim.iv_plim}, {mc[k].ols, plim.ols_plim}}) {
        const double z = std::abs(est.estimate - target) / est.std_error;
        worst_z = std::max(worst_z, z);
        ++checks;
        if (!(z <= 4.0)) ++failed;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {failed == 0 && secs < 120.0,
          fmt("%zu checks, %zu beyond 4 SE, max |z| %.2f, %.1f s", checks, failed, worst_z, secs)};
}

Outcome tallis_vs_rejection() {
  constexpr int dim = 5;
  constexpr long draws = 10'000'000;
  Xoshiro256ss rng(9009);
  std::normal_distribution<double> normal;
  std::size_t entries = 0, failed = 0;
  double worst_z = 0.0;
  for (int rep = 0; rep < 5; ++rep) {
    Eigen::MatrixXd a(dim, dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) a(i, j) = rng.uniform(-1.0, 1.0);
    const Eigen::MatrixXd sigma = a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(dim, dim);
    Eigen::VectorXd c(dim);
    for (int i = 0; i < dim; ++i) c(i) = rng.uniform(-1.0, 1.0);
    const double scale = std::sqrt(c.dot(sigma * c) / c.squaredNorm());
    const auto spec = TruncationSpec::at_threshold(c, rng.uniform(-1.0, 1.0) * scale);
    const auto lemma = tallis_truncated_moments(sigma, spec);

    const Eigen::MatrixXd l = sigma.llt().matrixL();
    const Eigen::VectorXd dir = spec.direction();
    const double p = spec.threshold();
    // Moments about the analytic mean.
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
    Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::MatrixXd s4 = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd e(dim);
    long kept = 0;
    for (long k = 0; k < draws; ++k) {
      for (int i = 0; i < dim; ++i) e(i) = normal(rng);
      const Eigen::VectorXd v = l * e;
      if (dir.dot(v) < p) continue;
      const Eigen::VectorXd d = v - lemma.mean;
      sum += d;
      const Eigen::MatrixXd prod = d * d.transpose();
      s2 += prod;
      s4 += prod.cwiseProduct(prod);
      ++kept;
    }
    const double nk = static_cast<double>(kept);
    const Eigen::VectorXd shift = sum / nk;
    const Eigen::MatrixXd cov = s2 / nk - shift * shift.transpose();
    for (int i = 0; i < dim; ++i)
      for (int j = i; j < dim; ++j) {
        const double m2 = s2(i, j) / nk;
        const double se = std::sqrt((s4(i, j) / nk - m2 * m2) / nk);
        const double z = std::abs(cov(i, j) - lemma.variance(i, j)) / se;
        worst_z = std::max(worst_z, z);
        ++entries;
        if (!(z <= 4.0)) ++failed;
      }
  }
  return {failed == 0, fmt("%zu covariance entries, %zu beyond 4 SE, max |z| %.2f", entries, failed,
                           worst_z)};
}

Outcome formula_report() {
  const auto report = treatment_confounder_formula_check(1000, 20211);
  const auto doc = to_json(report, true);
  const std::string path = "treatment_confounder_formula_check.json";
  {
    std::ofstream out(path);
    out << doc.dump(2) << '\n';
  }
  std::ifstream in(path);
  const auto back = nlohmann::json::parse(in, nullptr, false);
  const bool produced = !back.is_discarded() && back["rows"].size() == 1000;
  return {produced && report.max_iv_abs_diff < 1e-10,
          fmt("report %s; IV max diff %.3g; OLS printed max diff %.3g, corrected %.3g",
              produced ? ("written to " + path).c_str() : "missing", report.max_iv_abs_diff,
              report.max_ols_printed_abs_diff, report.max_ols_corrected_abs_diff)};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    Outcome o{false, ""};
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "closed-form/matrix equivalence", engines_agree);
  report(2, "reference point values", point_checks);
  report(3, "psi calibration", psi_calibration);
  const auto grid = region_grid();
  report(4, "preference criterion", [&] { return preference_boundary(grid); });
  report(5, "adjustment bias dominates truncation bias", [&] { return adjustment_dominates(grid); });
  report(6, "truncation converges to adjustment", truncation_limit);
  report(7, "IV and OLS bound the causal effect", bounds_contain_beta);
  report(8, "Monte Carlo oracle", monte_carlo_oracle);
  report(9, "truncated moments vs rejection sampling", tallis_vs_rejection);
  report(10, "treatment-confounder formula report", formula_report);
  return failures == 0 ? 0 : 1;
}
