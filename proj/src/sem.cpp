#include "ivsel/sem.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <queue>

#include "ivsel/error.hpp"

namespace ivsel {

namespace {

constexpr std::array<std::pair<Role, std::string_view>, 6> kRoleNames{{
    {Role::instrument, "instrument"},
    {Role::treatment, "treatment"},
    {Role::outcome, "outcome"},
    {Role::selection, "selection"},
    {Role::confounder, "confounder"},
    {Role::other, "other"},
}};

}  // namespace

std::string_view to_string(Role r) {
  for (const auto& [role, name] : kRoleNames)
    if (role == r) return name;
  return "other";
}

std::optional<Role> role_from_string(std::string_view name) {
  for (const auto& [role, n] : kRoleNames)
    if (n == name) return role;
  return std::nullopt;
}

PathModel::PathModel(std::vector<Node> nodes, std::vector<Edge> edges,
                     std::optional<PresetTag> preset)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), preset_(std::move(preset)) {
  const std::size_t n = nodes_.size();
  if (n == 0) throw SpecError("model has no nodes");

  for (std::size_t i = 0; i < n; ++i) {
    if (nodes_[i].name.empty()) throw SpecError("node with empty name");
    for (std::size_t j = 0; j < i; ++j)
      if (nodes_[j].name == nodes_[i].name)
        throw SpecError("duplicate node name '" + nodes_[i].name + "'");
  }

  parents_.assign(n, {});
  std::vector<std::vector<std::size_t>> children(n);
  for (const auto& e : edges_) {
    const auto from = find(e.from);
    const auto to = find(e.to);
    if (!from) throw SpecError("edge references unknown node '" + e.from + "'");
    if (!to) throw SpecError("edge references unknown node '" + e.to + "'");
    if (!std::isfinite(e.coef) || e.coef < -1.0 || e.coef > 1.0)
      throw SpecError("coefficient on " + e.from + "->" + e.to + " outside [-1, 1]");
    if (*from == *to) throw SpecError("cycle detected: self-loop on '" + e.from + "'");
    for (const auto& [p, c] : parents_[*to])
      if (p == *from) throw SpecError("duplicate edge " + e.from + "->" + e.to);
    parents_[*to].emplace_back(*from, e.coef);
    children[*from].push_back(*to);
  }

  // Kahn's algorithm, smallest declared index first.
  std::vector<std::size_t> indegree(n);
  for (std::size_t i = 0; i < n; ++i) indegree[i] = parents_[i].size();
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (indegree[i] == 0) ready.push(i);
  while (!ready.empty()) {
    const auto v = ready.top();
    ready.pop();
    topo_.push_back(v);
    for (const auto c : children[v])
      if (--indegree[c] == 0) ready.push(c);
  }
  if (topo_.size() != n) throw SpecError("cycle detected in edge set");

  auto unique_role = [&](Role role) {
    std::optional<std::size_t> found;
    for (std::size_t i = 0; i < n; ++i) {
      if (nodes_[i].role != role) continue;
      if (found)
        throw SpecError("duplicate role '" + std::string(to_string(role)) + "' on '" +
                        nodes_[*found].name + "' and '" + nodes_[i].name + "'");
      found = i;
    }
    if (!found) throw SpecError("missing node with role '" + std::string(to_string(role)) + "'");
    return *found;
  };
  instrument_ = unique_role(Role::instrument);
  treatment_ = unique_role(Role::treatment);
  outcome_ = unique_role(Role::outcome);
  selection_ = unique_role(Role::selection);

  // Selection must be reachable from treatment along directed edges.
  std::vector<bool> seen(n, false);
  std::vector<std::size_t> stack{treatment_};
  while (!stack.empty()) {
    const auto v = stack.back();
    stack.pop_back();
    for (const auto c : children[v])
      if (!seen[c]) {
        seen[c] = true;
        stack.push_back(c);
      }
  }
  if (!seen[selection_])
    throw SpecError("selection node '" + nodes_[selection_].name +
                    "' is not a descendant of treatment '" + nodes_[treatment_].name + "'");
}

std::optional<std::size_t> PathModel::find(std::string_view name) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].name == name) return i;
  return std::nullopt;
}

std::size_t PathModel::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw SpecError("unknown node '" + std::string(name) + "'");
}

double PathModel::coefficient(std::size_t from, std::size_t to) const {
  for (const auto& [p, c] : parents_[to])
    if (p == from) return c;
  return 0.0;
}

double ShockVariances::at(std::string_view node) const {
  for (std::size_t i = 0; i < order.size(); ++i)
    if (order[i] == node) return var[i];
  throw SpecError("unknown node '" + std::string(node) + "'");
}

std::size_t CovarianceStructure::index_of(std::string_view node) const {
  for (std::size_t i = 0; i < order.size(); ++i)
    if (order[i] == node) return i;
  throw SpecError("unknown node '" + std::string(node) + "'");
}

ShockVariances solve_shock_variances(const PathModel& model) {
  const std::size_t n = model.size();
  // Covariances among already-processed nodes, filled row by row.
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                              static_cast<Eigen::Index>(n));
  std::vector<bool> done(n, false);
  ShockVariances out;
  out.var.assign(n, 0.0);
  for (const auto& node : model.nodes()) out.order.push_back(node.name);

  for (const auto v : model.topological_order()) {
    const auto parents = model.parents(v);
    double explained = 0.0;
    for (const auto& [p, bp] : parents)
      for (const auto& [q, bq] : parents)
        explained += bp * bq * cov(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q));
    const double shock = 1.0 - explained;
    if (shock < kMinShockVariance) throw InfeasibleModelError(model.name(v), shock);
    out.var[v] = shock;

    const auto vi = static_cast<Eigen::Index>(v);
    for (std::size_t k = 0; k < n; ++k) {
      if (!done[k]) continue;
      double c = 0.0;
      for (const auto& [p, bp] : parents) c += bp * cov(static_cast<Eigen::Index>(p),
                                                        static_cast<Eigen::Index>(k));
      cov(vi, static_cast<Eigen::Index>(k)) = c;
      cov(static_cast<Eigen::Index>(k), vi) = c;
    }
    cov(vi, vi) = 1.0;
    done[v] = true;
  }
  return out;
}

Eigen::MatrixXd reduced_form(const PathModel& model) {
  const auto n = static_cast<Eigen::Index>(model.size());
  const auto topo = model.topological_order();
  std::vector<Eigen::Index> pos(model.size());
  for (std::size_t k = 0; k < topo.size(); ++k) pos[topo[k]] = static_cast<Eigen::Index>(k);

  // In topological order B is strictly lower triangular, so (I - B) is unit
  // lower triangular and its inverse comes from forward substitution.
  Eigen::MatrixXd i_minus_b = Eigen::MatrixXd::Identity(n, n);
  for (std::size_t v = 0; v < model.size(); ++v)
    for (const auto& [p, c] : model.parents(v)) i_minus_b(pos[v], pos[p]) = -c;
  const Eigen::MatrixXd gamma_topo =
      i_minus_b.triangularView<Eigen::UnitLower>().solve(Eigen::MatrixXd::Identity(n, n));

  Eigen::MatrixXd gamma(n, n);
  for (std::size_t i = 0; i < model.size(); ++i)
    for (std::size_t j = 0; j < model.size(); ++j)
      gamma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = gamma_topo(pos[i], pos[j]);
  return gamma;
}

CovarianceStructure implied_covariance(const PathModel& model) {
  const auto shocks = solve_shock_variances(model);
  const Eigen::MatrixXd gamma = reduced_form(model);
  const Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(shocks.var.data(),
                                                              static_cast<Eigen::Index>(shocks.var.size()));
  Eigen::MatrixXd sigma = gamma * d.asDiagonal() * gamma.transpose();
  sigma = 0.5 * (sigma + sigma.transpose()).eval();
  return CovarianceStructure{shocks.order, std::move(sigma)};
}

double wright_marginal_cov(const PathModel& model, std::string_view a, std::string_view b) {
  const auto from = model.index_of(a);
  const auto to = model.index_of(b);
  if (from == to) throw SpecError("wright_marginal_cov needs two distinct nodes");

  // Undirected skeleton; `into_neighbor` is true when the edge points at the neighbor.
  struct Step {
    std::size_t neighbor;
    double coef;
    bool into_neighbor;
  };
  std::vector<std::vector<Step>> adj(model.size());
  for (std::size_t v = 0; v < model.size(); ++v)
    for (const auto& [p, c] : model.parents(v)) {
      adj[p].push_back({v, c, true});
      adj[v].push_back({p, c, false});
    }

  std::vector<bool> on_path(model.size(), false);
  std::size_t paths = 0;
  double total = 0.0;

  // arrived_into: the edge used to reach `v` points at `v`.
  std::function<void(std::size_t, bool, double, bool)> walk =
      [&](std::size_t v, bool arrived_into, double product, bool open) {
        // Counts partial paths too, so dead-end branches cannot run unbounded.
        if (++paths > kMaxEnumeratedPaths)
          throw SpecError("path enumeration exceeded " + std::to_string(kMaxEnumeratedPaths) +
                          " paths");
        if (v == to) {
          if (open) total += product;
          return;
        }
        on_path[v] = true;
        for (const auto& step : adj[v]) {
          if (on_path[step.neighbor]) continue;
          // v is a collider when both the incoming and outgoing edges point at it.
          const bool collider = v != from && arrived_into && !step.into_neighbor;
          walk(step.neighbor, step.into_neighbor, product * step.coef, open && !collider);
        }
        on_path[v] = false;
      };
  walk(from, false, 1.0, true);
  return total;
}

double conditional_cov(const CovarianceStructure& sigma, std::string_view a, std::string_view b,
                       std::string_view c) {
  const double var_c = sigma.at(c, c);
  if (var_c <= 1e-12)
    throw DegenerateEstimandError("conditioning variable '" + std::string(c) +
                                  "' has zero residual variance");
  return sigma.at(a, b) - sigma.at(a, c) * sigma.at(b, c) / var_c;
}

CovarianceStructure conditional_covariance(const CovarianceStructure& sigma,
                                           std::span<const std::string> given) {
  const auto n = sigma.sigma.rows();
  const auto k = static_cast<Eigen::Index>(given.size());
  if (k == 0) return sigma;

  std::vector<Eigen::Index> idx;
  for (const auto& g : given) idx.push_back(static_cast<Eigen::Index>(sigma.index_of(g)));

  Eigen::MatrixXd s_gg(k, k);
  Eigen::MatrixXd s_ag(n, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) s_gg(i, j) = sigma.sigma(idx[i], idx[j]);
    s_ag.col(i) = sigma.sigma.col(idx[i]);
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(s_gg);
  if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 1e-12)
    throw DegenerateEstimandError("conditioning set has zero residual variance");

  CovarianceStructure out{sigma.order, sigma.sigma - s_ag * ldlt.solve(s_ag.transpose())};
  out.sigma = 0.5 * (out.sigma + out.sigma.transpose()).eval();
  for (const auto i : idx) {
    out.sigma.row(i).setZero();
    out.sigma.col(i).setZero();
  }
  return out;
}

}  // namespace ivsel
