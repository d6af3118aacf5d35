#pragma once

#include <cstddef>
#include <optional>

#include <Eigen/Dense>

namespace ivsel {

/// One-sided truncation {v : c'v >= p} with |c| = 1.
///
/// Either the threshold p or the severity q = Pr(c'V < p) may be supplied;
/// the other is derived on access. Severity is only meaningful when c'Sigma c = 1,
/// which holds for a coordinate direction over a standardized covariance.
class TruncationSpec {
 public:
  /// Normalizes `direction`; throws std::domain_error on a zero vector.
  static TruncationSpec at_threshold(Eigen::VectorXd direction, double threshold);
  static TruncationSpec at_severity(Eigen::VectorXd direction, double severity);

  static TruncationSpec on_coordinate(std::size_t dim, std::size_t index, double threshold);
  static TruncationSpec on_coordinate_severity(std::size_t dim, std::size_t index, double severity);

  const Eigen::VectorXd& direction() const noexcept { return direction_; }
  double threshold() const;
  double severity() const;

 private:
  TruncationSpec(Eigen::VectorXd direction, std::optional<double> threshold,
                 std::optional<double> severity);

  Eigen::VectorXd direction_;
  std::optional<double> threshold_;
  std::optional<double> severity_;
};

struct TruncatedMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd variance;
  double psi = 0.0;
};

/// Mean and covariance of V ~ N(0, sigma) restricted to c'V >= p:
///   kappa = sqrt(c' sigma c),  a = p / kappa,
///   E = sigma c lambda(a) / kappa,
///   Var = sigma - sigma c c' sigma psi(a) / kappa^2.
/// Throws std::domain_error when c' sigma c <= 0 or dimensions disagree.
TruncatedMoments tallis_truncated_moments(const Eigen::MatrixXd& sigma, const TruncationSpec& trunc);

}  // namespace ivsel
