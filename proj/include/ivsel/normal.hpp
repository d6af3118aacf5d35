#pragma once

namespace ivsel {

double normal_pdf(double x);
double normal_cdf(double x);
/// Upper tail 1 - Phi(x), accurate where normal_cdf saturates.
double normal_sf(double x);
/// Throws std::domain_error unless 0 < q < 1.
double normal_inv_cdf(double q);

/// Standard normal hazard phi(x) / (1 - Phi(x)). Above kHazardTailSwitch the
/// inverse Mills ratio comes from its continued fraction.
double hazard(double x);
inline constexpr double kHazardTailSwitch = 6.0;

/// hazard(x) - x, computed without cancellation in the upper tail.
double hazard_excess(double x);

/// Variance deflation of one-sided truncation at s0:
/// psi = hazard(s0) * (hazard(s0) - s0), the derivative of the hazard. In (0, 1).
double psi(double s0);

/// Severity q = Pr(S < s0) = Phi(s0) for a standardized selection variable.
double severity_to_threshold(double q);  // throws std::domain_error outside (0, 1)
double threshold_to_severity(double s0);

/// Threshold s0 with psi(s0) == target, target in (0, 1).
double psi_to_threshold(double target);

}  // namespace ivsel
