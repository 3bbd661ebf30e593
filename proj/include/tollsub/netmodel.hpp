#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tollsub/errors.hpp"
#include "tollsub/polynomial.hpp"

namespace tollsub {

/// Absolute tolerance on demand conservation and mass bounds.
inline constexpr double kFeasibilityTolerance = 1e-9;
/// Relative variational-inequality gap accepted as an equilibrium certificate.
inline constexpr double kEquilibriumTolerance = 1e-8;
/// Instances enumerating more simple paths than this are rejected.
inline constexpr std::size_t kMaxPaths = 10000;

// ---------------------------------------------------------------------------
// LatencyFunction

/// Polynomial edge delay with non-negative coefficients, hence non-negative
/// and non-decreasing on [0, inf). Keeps the coefficient list exactly as
/// given (trailing zeros included) so serialization round-trips.
class LatencyFunction {
 public:
  LatencyFunction() : LatencyFunction(std::vector<double>{0.0}) {}

  explicit LatencyFunction(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) {
    if (coeffs_.empty()) throw InvariantError("latency function needs at least one coefficient");
    for (std::size_t i = 0; i < coeffs_.size(); ++i) {
      if (!std::isfinite(coeffs_[i]))
        throw InvariantError("non-finite latency coefficient at index " + std::to_string(i));
      if (coeffs_[i] < 0.0)
        throw InvariantError("negative latency coefficient at index " + std::to_string(i));
    }
    poly_ = Polynomial(coeffs_);
  }

  static LatencyFunction affine(double a, double b) { return LatencyFunction({b, a}); }
  static LatencyFunction constant(double b) { return LatencyFunction({b}); }
  static LatencyFunction monomial(std::size_t p, double coeff = 1.0) {
    std::vector<double> c(p + 1, 0.0);
    c[p] = coeff;
    return LatencyFunction(std::move(c));
  }

  const std::vector<double>& coefficients() const noexcept { return coeffs_; }
  const Polynomial& polynomial() const noexcept { return poly_; }

  /// Declared degree p (length of the coefficient list minus one).
  std::size_t degree() const noexcept { return coeffs_.size() - 1; }
  bool is_affine() const noexcept { return poly_.degree() <= 1; }
  /// For affine latencies a f + b.
  double slope() const noexcept { return poly_.coefficient(1); }
  double intercept() const noexcept { return poly_.coefficient(0); }

  double operator()(double f) const noexcept { return poly_(f); }

  friend bool operator==(const LatencyFunction& a, const LatencyFunction& b) {
    return a.coeffs_ == b.coeffs_;
  }

 private:
  std::vector<double> coeffs_;
  Polynomial poly_;
};

// ---------------------------------------------------------------------------
// RoutingProblem

struct Edge {
  std::string id;
  std::size_t tail = 0;
  std::size_t head = 0;
  LatencyFunction latency;
};

struct Commodity {
  std::size_t origin = 0;
  std::size_t destination = 0;
  double demand = 0.0;
};

struct Path {
  std::size_t commodity = 0;
  std::vector<std::size_t> edges;
};

/// Directed graph with polynomial latencies and origin/destination demands.
/// Simple paths are enumerated once at construction. Commodities with zero
/// demand are dropped and reported through warnings().
///
/// Demand normalization (total mass 1) is not enforced here; parse_instance and
/// the solvers check it through require_normalized().
class RoutingProblem {
 public:
  RoutingProblem() = default;

  RoutingProblem(std::vector<std::string> nodes, std::vector<Edge> edges,
                 std::vector<Commodity> commodities)
      : nodes_(std::move(nodes)), edges_(std::move(edges)) {
    for (std::size_t v = 0; v < nodes_.size(); ++v) {
      if (!node_index_.emplace(nodes_[v], v).second)
        throw InvariantError("duplicate node '" + nodes_[v] + "'");
    }
    std::unordered_map<std::string, std::size_t> seen_edges;
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      const Edge& edge = edges_[e];
      if (!seen_edges.emplace(edge.id, e).second)
        throw InvariantError("duplicate edge id '" + edge.id + "'");
      if (edge.tail >= nodes_.size() || edge.head >= nodes_.size())
        throw InvariantError("edge '" + edge.id + "' references a missing node");
      if (edge.tail == edge.head) throw InvariantError("edge '" + edge.id + "' is a self-loop");
    }
    for (std::size_t i = 0; i < commodities.size(); ++i) {
      const Commodity& c = commodities[i];
      const std::string where = "commodity " + std::to_string(i);
      if (c.origin >= nodes_.size() || c.destination >= nodes_.size())
        throw InvariantError(where + " references a missing node");
      if (c.origin == c.destination) throw InvariantError(where + " has origin == destination");
      if (!std::isfinite(c.demand) || c.demand < 0.0)
        throw InvariantError(where + " has negative or non-finite demand");
      if (c.demand == 0.0) {
        warnings_.push_back(where + " has zero demand and was dropped");
        continue;
      }
      commodities_.push_back(c);
    }
    enumerate_paths();
  }

  std::span<const std::string> nodes() const noexcept { return nodes_; }
  std::span<const Edge> edges() const noexcept { return edges_; }
  std::span<const Commodity> commodities() const noexcept { return commodities_; }
  std::span<const Path> paths() const noexcept { return paths_; }
  std::span<const std::size_t> commodity_paths(std::size_t i) const { return commodity_paths_.at(i); }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  std::size_t num_edges() const noexcept { return edges_.size(); }
  std::size_t num_paths() const noexcept { return paths_.size(); }

  std::size_t node_index(const std::string& name) const {
    auto it = node_index_.find(name);
    if (it == node_index_.end()) throw LookupError("unknown node '" + name + "'");
    return it->second;
  }

  const Path& path(std::size_t id) const {
    if (id >= paths_.size()) throw LookupError("unknown path id " + std::to_string(id));
    return paths_[id];
  }

  /// "e1" for one-edge paths, "e1>e3>e4" otherwise.
  std::string path_label(std::size_t id) const {
    std::string out;
    for (std::size_t e : path(id).edges) {
      if (!out.empty()) out += '>';
      out += edges_[e].id;
    }
    return out;
  }

  double total_demand() const noexcept {
    double r = 0.0;
    for (const auto& c : commodities_) r += c.demand;
    return r;
  }

  void require_normalized() const {
    const double r = total_demand();
    if (std::abs(r - 1.0) > kFeasibilityTolerance) {
      std::ostringstream os;
      os.precision(17);
      os << "demand mismatch: commodity demands sum to " << r << ", expected 1";
      throw InvariantError(os.str());
    }
  }

  /// Single commodity whose paths are exactly the edges, each running origin -> destination.
  bool is_parallel() const noexcept {
    if (commodities_.size() != 1) return false;
    const auto& c = commodities_.front();
    for (const Edge& e : edges_)
      if (e.tail != c.origin || e.head != c.destination) return false;
    return true;
  }

  bool all_affine() const noexcept {
    return std::all_of(edges_.begin(), edges_.end(),
                       [](const Edge& e) { return e.latency.is_affine(); });
  }

 private:
  void enumerate_paths() {
    std::vector<std::vector<std::size_t>> out_edges(nodes_.size());
    for (std::size_t e = 0; e < edges_.size(); ++e) out_edges[edges_[e].tail].push_back(e);

    commodity_paths_.assign(commodities_.size(), {});
    for (std::size_t i = 0; i < commodities_.size(); ++i) {
      const Commodity& c = commodities_[i];
      std::vector<char> on_path(nodes_.size(), 0);
      std::vector<std::size_t> stack;
      dfs(c.origin, c.destination, i, out_edges, on_path, stack);
      if (commodity_paths_[i].empty())
        throw InvariantError("commodity " + std::to_string(i) + " (" + nodes_[c.origin] + " -> " +
                             nodes_[c.destination] + ") has no connecting path");
    }
  }

  void dfs(std::size_t v, std::size_t target, std::size_t commodity,
           const std::vector<std::vector<std::size_t>>& out_edges, std::vector<char>& on_path,
           std::vector<std::size_t>& stack) {
    if (v == target) {
      if (paths_.size() >= kMaxPaths)
        throw InvariantError("instance enumerates more than " + std::to_string(kMaxPaths) +
                             " simple paths");
      commodity_paths_[commodity].push_back(paths_.size());
      paths_.push_back(Path{commodity, stack});
      return;
    }
    on_path[v] = 1;
    for (std::size_t e : out_edges[v]) {
      const std::size_t w = edges_[e].head;
      if (on_path[w]) continue;
      stack.push_back(e);
      dfs(w, target, commodity, out_edges, on_path, stack);
      stack.pop_back();
    }
    on_path[v] = 0;
  }

  std::vector<std::string> nodes_;
  std::vector<Edge> edges_;
  std::vector<Commodity> commodities_;
  std::vector<Path> paths_;
  std::vector<std::vector<std::size_t>> commodity_paths_;
  std::unordered_map<std::string, std::size_t> node_index_;
  std::vector<std::string> warnings_;
};

/// Two nodes "o" -> "d" joined by one edge per latency, unit demand.
inline RoutingProblem parallel_network(std::vector<LatencyFunction> latencies) {
  std::vector<Edge> edges;
  for (std::size_t e = 0; e < latencies.size(); ++e)
    edges.push_back(Edge{"e" + std::to_string(e + 1), 0, 1, std::move(latencies[e])});
  return RoutingProblem({"o", "d"}, std::move(edges), {Commodity{0, 1, 1.0}});
}

// ---------------------------------------------------------------------------
// Flow

/// Path masses plus the edge masses they induce. Edge flows are derived on
/// construction and the object is immutable afterwards.
class Flow {
 public:
  Flow() = default;

  Flow(const RoutingProblem& problem, std::vector<double> path_flows)
      : path_flows_(std::move(path_flows)), edge_flows_(problem.num_edges(), 0.0) {
    if (path_flows_.size() != problem.num_paths())
      throw InvariantError("flow has " + std::to_string(path_flows_.size()) +
                           " path entries, problem has " + std::to_string(problem.num_paths()) +
                           " paths");
    for (std::size_t p = 0; p < path_flows_.size(); ++p)
      for (std::size_t e : problem.paths()[p].edges) edge_flows_[e] += path_flows_[p];
  }

  std::span<const double> path_flows() const noexcept { return path_flows_; }
  std::span<const double> edge_flows() const noexcept { return edge_flows_; }
  double path_flow(std::size_t p) const { return path_flows_.at(p); }
  double edge_flow(std::size_t e) const { return edge_flows_.at(e); }

 private:
  std::vector<double> path_flows_;
  std::vector<double> edge_flows_;
};

/// Throws FeasibilityError naming the first violated commodity or edge.
inline void check_feasible(const RoutingProblem& problem, const Flow& flow,
                           double tol = kFeasibilityTolerance) {
  if (flow.path_flows().size() != problem.num_paths())
    throw FeasibilityError("flow does not match the problem's path set");
  for (std::size_t p = 0; p < problem.num_paths(); ++p) {
    const double v = flow.path_flow(p);
    if (!std::isfinite(v) || v < -tol || v > 1.0 + tol)
      throw FeasibilityError("path " + problem.path_label(p) + " carries mass outside [0,1]");
  }
  for (std::size_t i = 0; i < problem.commodities().size(); ++i) {
    double sum = 0.0;
    for (std::size_t p : problem.commodity_paths(i)) sum += flow.path_flow(p);
    if (std::abs(sum - problem.commodities()[i].demand) > tol) {
      std::ostringstream os;
      os.precision(17);
      os << "commodity " << i << " routes " << sum << " but demands "
         << problem.commodities()[i].demand;
      throw FeasibilityError(os.str());
    }
  }
  for (std::size_t e = 0; e < problem.num_edges(); ++e) {
    const double v = flow.edge_flow(e);
    if (v < -tol || v > 1.0 + tol)
      throw FeasibilityError("edge " + problem.edges()[e].id + " carries mass outside [0,1]");
  }
}

/// Sum over edges of f_e * l_e(f_e).
inline double total_latency(const RoutingProblem& problem, const Flow& flow) {
  check_feasible(problem, flow);
  double total = 0.0;
  for (std::size_t e = 0; e < problem.num_edges(); ++e) {
    const double f = flow.edge_flow(e);
    total += f * problem.edges()[e].latency(f);
  }
  return total;
}

// ---------------------------------------------------------------------------
// SensitivityModel

struct SensitivityClass {
  double mass = 1.0;
  double s = 1.0;
  friend bool operator==(const SensitivityClass&, const SensitivityClass&) = default;
};

/// Finite-class population: each class is a fraction of users sharing one
/// sensitivity s in [s_low, s_high].
class SensitivityModel {
 public:
  SensitivityModel() : SensitivityModel({{1.0, 1.0}}, 1.0, 1.0) {}

  SensitivityModel(std::vector<SensitivityClass> classes, double s_low, double s_high)
      : classes_(std::move(classes)), s_low_(s_low), s_high_(s_high) {
    if (!(s_low_ > 0.0) || !(s_high_ >= s_low_) || !std::isfinite(s_high_))
      throw InvariantError("sensitivity bounds must satisfy 0 < s_L <= s_U");
    if (classes_.empty()) throw InvariantError("sensitivity model needs at least one class");
    double total = 0.0;
    for (std::size_t c = 0; c < classes_.size(); ++c) {
      const auto& k = classes_[c];
      if (!std::isfinite(k.mass) || k.mass < 0.0)
        throw InvariantError("sensitivity class " + std::to_string(c) + " has negative mass");
      const double slack = 1e-12 * s_high_;
      if (!(k.s >= s_low_ - slack && k.s <= s_high_ + slack))
        throw InvariantError("sensitivity class " + std::to_string(c) + " lies outside [s_L, s_U]");
      total += k.mass;
    }
    if (std::abs(total - 1.0) > kFeasibilityTolerance)
      throw InvariantError("sensitivity masses sum \xE2\x89\xA0 1");
  }

  static SensitivityModel homogeneous() { return {}; }

  /// Mass `low_mass` at s_low, the rest at s_high. Empty classes are kept.
  static SensitivityModel two_class(double low_mass, double s_low, double s_high) {
    return SensitivityModel({{low_mass, s_low}, {1.0 - low_mass, s_high}}, s_low, s_high);
  }

  std::span<const SensitivityClass> classes() const noexcept { return classes_; }
  double s_low() const noexcept { return s_low_; }
  double s_high() const noexcept { return s_high_; }
  double q() const noexcept { return s_low_ / s_high_; }

  bool is_homogeneous() const noexcept { return classes_.size() == 1 && classes_[0].s == 1.0; }

  /// Classes with positive mass, masses untouched.
  std::vector<SensitivityClass> populated_classes() const {
    std::vector<SensitivityClass> out;
    for (const auto& c : classes_)
      if (c.mass > 0.0) out.push_back(c);
    return out;
  }

 private:
  std::vector<SensitivityClass> classes_;
  double s_low_;
  double s_high_;
};

// ---------------------------------------------------------------------------
// GameInstance

/// Routing problem, population and one realized incentive function per edge.
/// The problem is shared so sweeps can attach many mechanisms to one network.
class GameInstance {
 public:
  GameInstance(std::shared_ptr<const RoutingProblem> problem, SensitivityModel sensitivity,
               std::vector<Polynomial> incentives)
      : problem_(std::move(problem)),
        sensitivity_(std::move(sensitivity)),
        incentives_(std::move(incentives)) {
    if (!problem_) throw InvariantError("game instance without a routing problem");
    if (incentives_.size() != problem_->num_edges())
      throw InvariantError("game instance needs exactly one incentive function per edge");
  }

  GameInstance(std::shared_ptr<const RoutingProblem> problem, SensitivityModel sensitivity)
      : GameInstance(problem, std::move(sensitivity),
                     std::vector<Polynomial>(problem ? problem->num_edges() : 0)) {}

  explicit GameInstance(RoutingProblem problem, SensitivityModel sensitivity = {})
      : GameInstance(std::make_shared<const RoutingProblem>(std::move(problem)),
                     std::move(sensitivity)) {}

  const RoutingProblem& problem() const noexcept { return *problem_; }
  const std::shared_ptr<const RoutingProblem>& shared_problem() const noexcept { return problem_; }
  const SensitivityModel& sensitivity() const noexcept { return sensitivity_; }
  std::span<const Polynomial> incentives() const noexcept { return incentives_; }
  const Polynomial& incentive(std::size_t e) const { return incentives_.at(e); }

  GameInstance with_incentives(std::vector<Polynomial> incentives) const {
    return {problem_, sensitivity_, std::move(incentives)};
  }
  GameInstance with_sensitivity(SensitivityModel sensitivity) const {
    return {problem_, std::move(sensitivity), incentives_};
  }

  /// l_e + s * tau_e as a polynomial.
  Polynomial effective_cost(std::size_t e, double s) const {
    return problem_->edges()[e].latency.polynomial() + s * incentives_.at(e);
  }

 private:
  std::shared_ptr<const RoutingProblem> problem_;
  SensitivityModel sensitivity_;
  std::vector<Polynomial> incentives_;
};

/// Cost observed on `path` by a user of sensitivity s: sum of l_e(f_e) + s tau_e(f_e).
inline double player_path_cost(const GameInstance& instance, std::size_t path, const Flow& flow,
                               double sensitivity) {
  if (!(sensitivity >= 0.0)) throw DomainError("sensitivity must be non-negative");
  const RoutingProblem& problem = instance.problem();
  const Path& p = problem.path(path);
  if (flow.edge_flows().size() != problem.num_edges())
    throw InvariantError("flow does not belong to this instance");
  double cost = 0.0;
  for (std::size_t e : p.edges) {
    const double f = flow.edge_flow(e);
    cost += problem.edges()[e].latency(f) + sensitivity * instance.incentive(e)(f);
  }
  return cost;
}

}  // namespace tollsub
