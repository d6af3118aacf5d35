#include "ivsel/truncation.hpp"

#include <cmath>
#include <stdexcept>

#include "ivsel/normal.hpp"

namespace ivsel {

TruncationSpec::TruncationSpec(Eigen::VectorXd direction, std::optional<double> threshold,
                               std::optional<double> severity)
    : direction_(std::move(direction)), threshold_(threshold), severity_(severity) {
  const double norm = direction_.norm();
  if (!(norm > 0.0) || !std::isfinite(norm))
    throw std::domain_error("truncation direction must be a nonzero finite vector");
  direction_ /= norm;
  if (threshold_ && (std::isnan(*threshold_) || *threshold_ == HUGE_VAL))
    throw std::domain_error("truncation threshold must be finite or -inf");
  if (severity_ && !(*severity_ > 0.0 && *severity_ < 1.0))
    throw std::domain_error("truncation severity must lie in (0, 1)");
}

TruncationSpec TruncationSpec::at_threshold(Eigen::VectorXd direction, double threshold) {
  return TruncationSpec(std::move(direction), threshold, std::nullopt);
}

TruncationSpec TruncationSpec::at_severity(Eigen::VectorXd direction, double severity) {
  return TruncationSpec(std::move(direction), std::nullopt, severity);
}

TruncationSpec TruncationSpec::on_coordinate(std::size_t dim, std::size_t index, double threshold) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  c(static_cast<Eigen::Index>(index)) = 1.0;
  return at_threshold(std::move(c), threshold);
}

TruncationSpec TruncationSpec::on_coordinate_severity(std::size_t dim, std::size_t index,
                                                      double severity) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  c(static_cast<Eigen::Index>(index)) = 1.0;
  return at_severity(std::move(c), severity);
}

double TruncationSpec::threshold() const {
  return threshold_ ? *threshold_ : severity_to_threshold(*severity_);
}

double TruncationSpec::severity() const {
  return severity_ ? *severity_ : threshold_to_severity(*threshold_);
}

TruncatedMoments tallis_truncated_moments(const Eigen::MatrixXd& sigma, const TruncationSpec& trunc) {
  const auto& c = trunc.direction();
  if (sigma.rows() != sigma.cols() || sigma.rows() != c.size())
    throw std::domain_error("truncation direction does not match covariance dimension");
  const Eigen::VectorXd sc = sigma * c;
  const double var_c = c.dot(sc);
  if (!(var_c > 0.0)) throw std::domain_error("c' sigma c must be positive");

  const double kappa = std::sqrt(var_c);
  const double a = trunc.threshold() / kappa;
  TruncatedMoments m;
  if (std::isinf(a) && a < 0) {
    m.psi = 0.0;
    m.mean = Eigen::VectorXd::Zero(c.size());
  } else {
    m.psi = psi(a);
    m.mean = sc * (hazard(a) / kappa);
  }
  m.variance = sigma - sc * sc.transpose() * (m.psi / var_c);
  m.variance = 0.5 * (m.variance + m.variance.transpose()).eval();
  return m;
}

}  // namespace ivsel
