#pragma once

#include <stdexcept>
#include <string>

namespace ivsel {

/// Malformed model specification, unknown preset/parameter, or bad node reference.
class SpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Standardization forces a non-positive shock variance at `node`.
class InfeasibleModelError : public std::runtime_error {
 public:
  InfeasibleModelError(std::string node, double shock_variance)
      : std::runtime_error("infeasible standardization at node '" + node +
                           "': shock variance " + std::to_string(shock_variance)),
        node_(std::move(node)),
        shock_variance_(shock_variance) {}

  const std::string& node() const noexcept { return node_; }
  double shock_variance() const noexcept { return shock_variance_; }

 private:
  std::string node_;
  double shock_variance_;
};

/// An estimand's denominator (first stage, treatment variance, conditioning
/// variance) vanishes, so the estimator is not defined.
class DegenerateEstimandError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ivsel
