#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ivsel/scenario.hpp"

namespace ivsel {

enum class Role { instrument, treatment, outcome, selection, confounder, other };

std::string_view to_string(Role r);
std::optional<Role> role_from_string(std::string_view name);

struct Node {
  std::string name;
  Role role = Role::other;
  bool latent = false;
};

struct Edge {
  std::string from;
  std::string to;
  double coef = 0.0;
};

/// Set on models built from a preset so downstream code can attribute bias by path.
struct PresetTag {
  Scenario scenario;
  ScenarioParams params;
};

/// Linear homogeneous Gaussian SEM over standardized variables.
///
/// Construction validates the graph: unique node names, resolvable edges,
/// coefficients in [-1, 1], acyclicity, exactly one instrument / treatment /
/// outcome / selection node, and selection a descendant of treatment.
/// Violations throw SpecError. Instances are immutable.
class PathModel {
 public:
  PathModel(std::vector<Node> nodes, std::vector<Edge> edges,
            std::optional<PresetTag> preset = std::nullopt);

  std::span<const Node> nodes() const noexcept { return nodes_; }
  std::span<const Edge> edges() const noexcept { return edges_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  std::size_t index_of(std::string_view name) const;  // throws SpecError
  std::optional<std::size_t> find(std::string_view name) const;
  const std::string& name(std::size_t i) const { return nodes_[i].name; }

  std::size_t instrument() const noexcept { return instrument_; }
  std::size_t treatment() const noexcept { return treatment_; }
  std::size_t outcome() const noexcept { return outcome_; }
  std::size_t selection() const noexcept { return selection_; }

  /// Node indices, parents before children; ties broken by declaration order.
  std::span<const std::size_t> topological_order() const noexcept { return topo_; }

  /// (parent index, coefficient) pairs of node i.
  std::span<const std::pair<std::size_t, double>> parents(std::size_t i) const {
    return parents_[i];
  }

  /// Coefficient on from->to, 0 when the edge is absent.
  double coefficient(std::size_t from, std::size_t to) const;

  /// True causal effect of interest: the treatment->outcome path coefficient.
  double beta() const { return coefficient(treatment_, outcome_); }

  const std::optional<PresetTag>& preset() const noexcept { return preset_; }

 private:
  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::optional<PresetTag> preset_;
  std::vector<std::vector<std::pair<std::size_t, double>>> parents_;
  std::vector<std::size_t> topo_;
  std::size_t instrument_ = 0;
  std::size_t treatment_ = 0;
  std::size_t outcome_ = 0;
  std::size_t selection_ = 0;
};

/// Variance of each idiosyncratic shock, aligned with the model's node order.
struct ShockVariances {
  std::vector<std::string> order;
  std::vector<double> var;

  double at(std::string_view node) const;
};

struct CovarianceStructure {
  std::vector<std::string> order;
  Eigen::MatrixXd sigma;

  std::size_t index_of(std::string_view node) const;  // throws SpecError
  double at(std::string_view a, std::string_view b) const {
    return sigma(static_cast<Eigen::Index>(index_of(a)), static_cast<Eigen::Index>(index_of(b)));
  }
};

/// Smallest shock variance accepted as feasible.
inline constexpr double kMinShockVariance = 1e-9;

/// Shock variances that give every variable unit variance. Walks nodes in
/// topological order; throws InfeasibleModelError naming the first node whose
/// parents already explain (almost) all of its unit variance.
ShockVariances solve_shock_variances(const PathModel& model);

/// Total-effects matrix Gamma = (I - B)^-1 in model node order, so V = Gamma * eps.
Eigen::MatrixXd reduced_form(const PathModel& model);

/// Gamma * Sigma_eps * Gamma' in model node order.
CovarianceStructure implied_covariance(const PathModel& model);

/// Upper bound on (partial) simple paths visited by wright_marginal_cov.
inline constexpr std::size_t kMaxEnumeratedPaths = 1'000'000;

/// Marginal covariance by path tracing: sum of coefficient products over
/// every simple path between a and b that has no collider. Independent of
/// the matrix route in implied_covariance.
double wright_marginal_cov(const PathModel& model, std::string_view a, std::string_view b);

/// Cov(A, B | C) = Cov(A,B) - Cov(A,C) Cov(B,C) / Var(C).
double conditional_cov(const CovarianceStructure& sigma, std::string_view a, std::string_view b,
                       std::string_view c);

/// Gaussian conditional covariance of all variables given `given` (Schur
/// complement). Rows and columns of conditioned variables come out as zero.
CovarianceStructure conditional_covariance(const CovarianceStructure& sigma,
                                           std::span<const std::string> given);

}  // namespace ivsel
