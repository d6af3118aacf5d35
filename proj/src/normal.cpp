#include "ivsel/normal.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <boost/math/special_functions/erf.hpp>
#include <boost/math/tools/roots.hpp>

namespace ivsel {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779399460599343818684758586311649;

// 1 / (x + 1/(x + 2/(x + 3/(x + ...)))) is the Mills ratio R(x) = (1-Phi)/phi.
// Returns the tail x + 2/(x + 3/(...)) so that hazard = x + 1/tail.
double mills_tail(double x) {
  constexpr int kTerms = 120;
  double t = x;
  for (int k = kTerms; k >= 2; --k) t = x + k / t;
  return t;
}

}  // namespace

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

double normal_inv_cdf(double q) {
  if (!(q > 0.0 && q < 1.0))
    throw std::domain_error("normal_inv_cdf: probability " + std::to_string(q) +
                            " outside (0, 1)");
  double x = -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * q);
  // One Newton step on whichever tail is better conditioned.
  if (x < 0.0)
    x -= (normal_cdf(x) - q) / normal_pdf(x);
  else
    x += (normal_sf(x) - (1.0 - q)) / normal_pdf(x);
  return x;
}

double hazard(double x) {
  if (x > kHazardTailSwitch) return x + 1.0 / mills_tail(x);
  return normal_pdf(x) / normal_sf(x);
}

double hazard_excess(double x) {
  if (x > kHazardTailSwitch) return 1.0 / mills_tail(x);
  return hazard(x) - x;
}

double psi(double s0) { return hazard(s0) * hazard_excess(s0); }

double severity_to_threshold(double q) {
  if (!(q > 0.0 && q < 1.0))
    throw std::domain_error("severity " + std::to_string(q) + " outside (0, 1)");
  return normal_inv_cdf(q);
}

double threshold_to_severity(double s0) { return normal_cdf(s0); }

double psi_to_threshold(double target) {
  if (!(target > 0.0 && target < 1.0))
    throw std::domain_error("psi " + std::to_string(target) + " outside (0, 1)");
  double lo = -40.0;
  double hi = 1.0;
  while (psi(hi) < target) hi *= 2.0;
  auto f = [&](double s) { return psi(s) - target; };
  boost::math::tools::eps_tolerance<double> tol(50);
  std::uintmax_t iters = 200;
  const auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, tol, iters);
  return 0.5 * (a + b);
}

}  // namespace ivsel
