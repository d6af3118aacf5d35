#include "ivsel/monte_carlo.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

#include "ivsel/error.hpp"
#include "ivsel/parallel.hpp"
#include "ivsel/rng.hpp"

namespace ivsel {

namespace {

constexpr std::uint64_t kBootstrapStream = 0xB0075742ULL << 20;

// Weighted sums of Z, T, Y, S and the cross products the two estimators need.
struct Sums {
  double w = 0, z = 0, t = 0, y = 0, s = 0;
  double zt = 0, zy = 0, ty = 0, tt = 0, zs = 0, ts = 0, ys = 0, ss = 0;

  void add(double wt, double zv, double tv, double yv, double sv) {
    w += wt;
    z += wt * zv;
    t += wt * tv;
    y += wt * yv;
    s += wt * sv;
    zt += wt * zv * tv;
    zy += wt * zv * yv;
    ty += wt * tv * yv;
    tt += wt * tv * tv;
    zs += wt * zv * sv;
    ts += wt * tv * sv;
    ys += wt * yv * sv;
    ss += wt * sv * sv;
  }

  Sums& operator+=(const Sums& o) {
    w += o.w, z += o.z, t += o.t, y += o.y, s += o.s;
    zt += o.zt, zy += o.zy, ty += o.ty, tt += o.tt;
    zs += o.zs, ts += o.ts, ys += o.ys, ss += o.ss;
    return *this;
  }
};

struct Estimates {
  double iv = 0.0;
  double ols = 0.0;
  double first_stage = 0.0;
};

Estimates finish(const Sums& m, bool adjust) {
  const double inv = 1.0 / m.w;
  const double mz = m.z * inv, mt = m.t * inv, my = m.y * inv, ms = m.s * inv;
  double c_zt = m.zt * inv - mz * mt;
  double c_zy = m.zy * inv - mz * my;
  double c_ty = m.ty * inv - mt * my;
  double c_tt = m.tt * inv - mt * mt;
  if (adjust) {
    // Frisch-Waugh: covariances of residuals after regressing on S with intercept.
    const double c_zs = m.zs * inv - mz * ms;
    const double c_ts = m.ts * inv - mt * ms;
    const double c_ys = m.ys * inv - my * ms;
    const double c_ss = m.ss * inv - ms * ms;
    c_zt -= c_zs * c_ts / c_ss;
    c_zy -= c_zs * c_ys / c_ss;
    c_ty -= c_ts * c_ys / c_ss;
    c_tt -= c_ts * c_ts / c_ss;
  }
  return {c_zy / c_zt, c_ty / c_tt, c_zt};
}

// Poisson(1) weight from one 64-bit draw by inverting the CDF.
class PoissonOne {
 public:
  PoissonOne() {
    double p = std::exp(-1.0);
    double cdf = 0.0;
    for (std::size_t k = 0; k < cut_.size(); ++k) {
      cdf += p;
      p /= static_cast<double>(k + 1);
      cut_[k] = cdf >= 1.0 ? ~0ULL : static_cast<std::uint64_t>(std::ldexp(cdf, 64));
    }
  }
  unsigned operator()(std::uint64_t u) const {
    unsigned k = 0;
    while (k + 1 < cut_.size() && u >= cut_[k]) ++k;
    return k;
  }

 private:
  std::array<std::uint64_t, 20> cut_{};
};

double sample_sd(std::span<const double> xs) {
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

std::string_view to_string(Method m) { return m == Method::iv ? "IV" : "OLS"; }

std::span<const double> Dataset::column(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return columns[i];
  throw SpecError("dataset has no column '" + std::string(name) + "'");
}

std::size_t Dataset::n_retained() const {
  if (retained.empty()) return n;
  return static_cast<std::size_t>(std::count(retained.begin(), retained.end(), std::uint8_t{1}));
}

Dataset simulate(const PathModel& model, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::domain_error("simulate: n must be at least 1");
  const auto shocks = solve_shock_variances(model);
  Dataset d;
  d.n = n;
  d.seed = seed;
  d.instrument = model.instrument();
  d.treatment = model.treatment();
  d.outcome = model.outcome();
  d.selection = model.selection();
  for (const auto& node : model.nodes()) {
    d.names.push_back(node.name);
    d.latent.push_back(node.latent);
  }
  d.columns.assign(model.size(), std::vector<double>(n));
  for (const auto v : model.topological_order()) {
    Xoshiro256ss rng(seed, v);
    std::normal_distribution<double> normal(0.0, std::sqrt(shocks.var[v]));
    auto& col = d.columns[v];
    for (auto& x : col) x = normal(rng);
    for (const auto& [p, coef] : model.parents(v)) {
      const auto& parent = d.columns[p];
      for (std::size_t i = 0; i < n; ++i) col[i] += coef * parent[i];
    }
  }
  return d;
}

Dataset apply_selection(const Dataset& data, const SelectionRule& rule) {
  Dataset out = data;
  out.retained.assign(data.n, 1);
  if (rule.kind() == SelectionRule::Kind::truncation) {
    const double s0 = rule.threshold();
    const auto& s = data.columns[data.selection];
    for (std::size_t i = 0; i < data.n; ++i) out.retained[i] = s[i] >= s0 ? 1 : 0;
  }
  return out;
}

std::vector<RuleEstimates> estimate_rules(const Dataset& data, std::span<const SelectionRule> rules,
                                          unsigned threads) {
  // Rows fall into bands delimited by the sorted truncation thresholds; the
  // statistic for threshold k sums bands k+1.., and "all rows" sums every band.
  std::vector<double> thresholds;
  for (const auto& r : rules)
    if (r.kind() == SelectionRule::Kind::truncation) thresholds.push_back(r.threshold());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  const std::size_t bands = thresholds.size() + 1;

  const auto& z = data.columns[data.instrument];
  const auto& t = data.columns[data.treatment];
  const auto& y = data.columns[data.outcome];
  const auto& s = data.columns[data.selection];

  std::vector<std::uint8_t> band(data.n);
  std::vector<std::size_t> band_rows(bands, 0);
  for (std::size_t i = 0; i < data.n; ++i) {
    if (!data.retained.empty() && !data.retained[i]) {
      band[i] = 0xFF;
      continue;
    }
    band[i] = static_cast<std::uint8_t>(
        std::upper_bound(thresholds.begin(), thresholds.end(), s[i]) - thresholds.begin());
    ++band_rows[band[i]];
  }

  auto group = [&](const SelectionRule& r, const std::vector<Sums>& per_band) {
    std::size_t first = 0;
    if (r.kind() == SelectionRule::Kind::truncation)
      first = static_cast<std::size_t>(
                  std::lower_bound(thresholds.begin(), thresholds.end(), r.threshold()) -
                  thresholds.begin()) +
              1;
    Sums total;
    for (std::size_t b = first; b < bands; ++b) total += per_band[b];
    return total;
  };
  auto rows_for = [&](const SelectionRule& r) {
    std::size_t first = 0;
    if (r.kind() == SelectionRule::Kind::truncation)
      first = static_cast<std::size_t>(
                  std::lower_bound(thresholds.begin(), thresholds.end(), r.threshold()) -
                  thresholds.begin()) +
              1;
    std::size_t count = 0;
    for (std::size_t b = first; b < bands; ++b) count += band_rows[b];
    return count;
  };

  auto accumulate_rows = [&](auto&& weight) {
    std::vector<Sums> per_band(bands);
    for (std::size_t i = 0; i < data.n; ++i) {
      if (band[i] == 0xFF) continue;
      const unsigned w = weight();
      if (w == 0) continue;
      per_band[band[i]].add(w, z[i], t[i], y[i], s[i]);
    }
    return per_band;
  };

  // Point estimates.
  const auto full = accumulate_rows([] { return 1u; });
  std::vector<RuleEstimates> out;
  out.reserve(rules.size());
  for (const auto& r : rules) {
    const std::size_t kept = rows_for(r);
    if (kept < kMinRetained)
      throw DegenerateEstimandError("only " + std::to_string(kept) + " retained rows under rule " +
                                    r.label());
    const auto e = finish(group(r, full), r.kind() == SelectionRule::Kind::adjustment);
    if (!(std::abs(e.first_stage) >= kMinSampleFirstStage))
      throw DegenerateEstimandError("sample first stage below 1e-6 under rule " + r.label());
    RuleEstimates re;
    re.iv = {e.iv, 0.0, kept, r, Method::iv};
    re.ols = {e.ols, 0.0, kept, r, Method::ols};
    out.push_back(re);
  }

  // Bootstrap replicates; replicate b has its own stream, so results do not
  // depend on how replicates are scheduled.
  const PoissonOne poisson;
  std::vector<std::vector<Estimates>> reps(kBootstrapResamples);
  parallel_for(kBootstrapResamples, threads, [&](std::size_t b) {
    Xoshiro256ss rng(data.seed, kBootstrapStream + b);
    const auto per_band = accumulate_rows([&] { return poisson(rng()); });
    reps[b].reserve(rules.size());
    for (const auto& r : rules)
      reps[b].push_back(finish(group(r, per_band), r.kind() == SelectionRule::Kind::adjustment));
  });

  std::vector<double> iv(kBootstrapResamples), ols(kBootstrapResamples);
  for (std::size_t k = 0; k < rules.size(); ++k) {
    for (std::size_t b = 0; b < reps.size(); ++b) {
      iv[b] = reps[b][k].iv;
      ols[b] = reps[b][k].ols;
    }
    out[k].iv.std_error = sample_sd(iv);
    out[k].ols.std_error = sample_sd(ols);
  }
  return out;
}

McReport estimate(const Dataset& data, Method method, const SelectionRule& rule,
                  unsigned threads) {
  const std::array<SelectionRule, 1> one{rule};
  const auto r = estimate_rules(data, one, threads).front();
  return method == Method::iv ? r.iv : r.ols;
}

StratifiedEstimate stratified_adjustment_iv(const Dataset& data, std::size_t strata,
                                            std::size_t min_rows) {
  if (strata == 0) throw std::domain_error("stratified_adjustment_iv: need at least one stratum");
  const auto& z = data.columns[data.instrument];
  const auto& t = data.columns[data.treatment];
  const auto& y = data.columns[data.outcome];
  const auto& s = data.columns[data.selection];

  std::vector<std::size_t> rows;
  rows.reserve(data.n);
  for (std::size_t i = 0; i < data.n; ++i)
    if (data.retained.empty() || data.retained[i]) rows.push_back(i);
  std::sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });

  StratifiedEstimate out;
  double weighted = 0.0;
  std::size_t used_rows = 0;
  for (std::size_t k = 0; k < strata; ++k) {
    const std::size_t lo = rows.size() * k / strata;
    const std::size_t hi = rows.size() * (k + 1) / strata;
    if (hi - lo < min_rows) continue;
    Sums m;
    for (std::size_t j = lo; j < hi; ++j) {
      const auto i = rows[j];
      m.add(1.0, z[i], t[i], y[i], s[i]);
    }
    const auto e = finish(m, false);
    if (!(std::abs(e.first_stage) >= kMinSampleFirstStage)) continue;
    weighted += e.iv * static_cast<double>(hi - lo);
    used_rows += hi - lo;
    ++out.strata_used;
  }
  if (out.strata_used == 0)
    throw DegenerateEstimandError("no stratum has enough rows for a stratified estimate");
  out.estimate = weighted / static_cast<double>(used_rows);
  return out;
}

std::vector<ConvergenceRow> convergence_report(const PathModel& model, const SelectionRule& rule,
                                               Method method, std::span<const std::size_t> n_grid,
                                               std::uint64_t seed, unsigned threads) {
  if (!std::is_sorted(n_grid.begin(), n_grid.end()) ||
      std::adjacent_find(n_grid.begin(), n_grid.end()) != n_grid.end())
    throw std::domain_error("convergence_report: n_grid must be strictly increasing");
  const auto analytic = plim_matrix(model, rule);
  const double plim = method == Method::iv ? analytic.iv_plim : analytic.ols_plim;
  std::vector<ConvergenceRow> rows;
  for (const auto n : n_grid) {
    const auto data = simulate(model, n, seed);
    const auto mc = estimate(data, method, rule, threads);
    rows.push_back({n, mc.estimate, mc.std_error, plim, std::abs(mc.estimate - plim)});
  }
  return rows;
}

void write_csv(const Dataset& data, std::ostream& out, bool observed_only) {
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < data.names.size(); ++c)
    if (!(observed_only && data.latent[c])) cols.push_back(c);
  for (const auto c : cols) out << data.names[c] << ',';
  out << "R\n";
  char buf[32];
  for (std::size_t i = 0; i < data.n; ++i) {
    const bool kept = data.retained.empty() || data.retained[i];
    if (observed_only && !kept) continue;
    for (const auto c : cols) {
      std::snprintf(buf, sizeof buf, "%.10g", data.columns[c][i]);
      out << buf << ',';
    }
    out << (kept ? 1 : 0) << '\n';
  }
}

}  // namespace ivsel
