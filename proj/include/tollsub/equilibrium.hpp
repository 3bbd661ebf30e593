#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tollsub/errors.hpp"
#include "tollsub/netmodel.hpp"
#include "tollsub/polynomial.hpp"

namespace tollsub {

struct SolverOptions {
  /// Relative VI gap accepted as an equilibrium.
  double tolerance = kEquilibriumTolerance;
  std::size_t max_iters = 100000;
  /// Initial damping of the heterogeneous best-response iteration.
  double damping = 0.5;
  /// Keep the potential (homogeneous) or gap (heterogeneous) after every iteration.
  bool record_trace = false;
};

struct EquilibriumResult {
  /// Aggregate flow.
  Flow flow;
  /// One flow per populated class, each routing that class's mass; they sum to `flow`.
  std::vector<Flow> class_flows;
  std::vector<SensitivityClass> classes;
  /// Certificate: largest relative VI gap over the classes.
  double vi_gap = 0.0;
  double total_latency = 0.0;
  std::size_t iterations = 0;
  std::vector<double> trace;
  /// Some used path has negative observed cost.
  bool negative_cost = false;
  /// Every edge carries more than 1e-9.
  bool fully_utilized = false;
};

inline constexpr double kUtilizationThreshold = 1e-9;

namespace detail {

/// Edge cost c(offset + x) where x is the flow being routed and offset a
/// fixed background flow.
struct EdgeCost {
  Polynomial cost;
  Polynomial slope;
  Polynomial antiderivative;
  double offset = 0.0;

  EdgeCost() = default;
  EdgeCost(Polynomial c, double off = 0.0)
      : cost(std::move(c)), slope(cost.derivative()), antiderivative(cost.integral()), offset(off) {}

  double value(double x) const { return cost(offset + x); }
  double deriv(double x) const { return slope(offset + x); }
  double potential(double x) const { return antiderivative(offset + x) - antiderivative(offset); }
};

/// Throws NonMonotoneCostError if `cost` decreases anywhere on [0, 1].
inline void require_monotone(const Polynomial& cost, const std::string& what) {
  const Polynomial d = cost.derivative();
  const auto c = d.coefficients();
  if (std::all_of(c.begin(), c.end(), [](double v) { return v >= 0.0; })) return;
  constexpr int kSamples = 1001;
  double prev = cost(0.0);
  for (int k = 1; k < kSamples; ++k) {
    const double f = static_cast<double>(k) / (kSamples - 1);
    const double v = cost(f);
    if (v < prev - 1e-12 * (1.0 + std::abs(prev)))
      throw NonMonotoneCostError("non-monotone cost on " + what);
    prev = v;
  }
}

inline std::vector<double> edge_flows_of(const RoutingProblem& problem, std::span<const double> x) {
  std::vector<double> y(problem.num_edges(), 0.0);
  for (std::size_t p = 0; p < x.size(); ++p)
    for (std::size_t e : problem.paths()[p].edges) y[e] += x[p];
  return y;
}

inline std::vector<double> path_costs_of(const RoutingProblem& problem,
                                         const std::vector<EdgeCost>& costs,
                                         std::span<const double> edge_flows) {
  std::vector<double> ec(costs.size());
  for (std::size_t e = 0; e < costs.size(); ++e) ec[e] = costs[e].value(edge_flows[e]);
  std::vector<double> pc(problem.num_paths(), 0.0);
  for (std::size_t p = 0; p < pc.size(); ++p)
    for (std::size_t e : problem.paths()[p].edges) pc[p] += ec[e];
  return pc;
}

/// sum_P x_P l_P(y): the latency borne by path flows x at edge flows y.
inline double latency_floor(const RoutingProblem& problem, std::span<const Polynomial> latencies,
                            std::span<const double> x, std::span<const double> y) {
  if (latencies.empty()) return 0.0;
  double v = 0.0;
  for (std::size_t p = 0; p < x.size(); ++p)
    if (x[p] > 0.0)
      for (std::size_t e : problem.paths()[p].edges) v += x[p] * latencies[e](y[e]);
  return v;
}

inline std::vector<Polynomial> latencies_of(const RoutingProblem& problem) {
  std::vector<Polynomial> out;
  for (const Edge& e : problem.edges()) out.push_back(e.latency.polynomial());
  return out;
}

/// Mass-weighted excess of used-path cost over the cheapest path, divided by
/// max(sum f_P |c_P| + sum r_i |min c|, floor). Zero when both vanish. The
/// floor (the flow's own latency) keeps the ratio meaningful when subsidies
/// drive observed costs to zero.
inline double relative_gap(const RoutingProblem& problem, std::span<const double> demands,
                           std::span<const double> x, std::span<const double> path_costs,
                           double floor = 0.0) {
  double excess = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < problem.commodities().size(); ++i) {
    const auto ps = problem.commodity_paths(i);
    double cmin = std::numeric_limits<double>::infinity();
    for (std::size_t p : ps) cmin = std::min(cmin, path_costs[p]);
    for (std::size_t p : ps) {
      excess += x[p] * (path_costs[p] - cmin);
      scale += x[p] * std::abs(path_costs[p]);
    }
    scale += demands[i] * std::abs(cmin);
  }
  scale = std::max(scale, floor);
  if (excess <= 0.0) return 0.0;
  return scale > 0.0 ? excess / scale : std::numeric_limits<double>::infinity();
}

struct Equilibrated {
  std::vector<double> x;
  double gap = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> trace;
};

/// Pairwise path equilibration. Each iteration moves mass, per commodity, from
/// the costliest used path to the cheapest path with an exact line search on
/// the potential sum_e int c_e, so the potential never increases.
inline Equilibrated equilibrate(const RoutingProblem& problem, std::span<const double> demands,
                                const std::vector<EdgeCost>& costs, std::vector<double> x,
                                double tolerance, std::size_t max_iters, bool record_trace,
                                std::span<const Polynomial> latencies = {}) {
  Equilibrated out;
  std::vector<double> y = edge_flows_of(problem, x);
  auto potential = [&] {
    double v = 0.0;
    for (std::size_t e = 0; e < costs.size(); ++e) v += costs[e].potential(y[e]);
    return v;
  };
  std::vector<std::size_t> plus, minus;
  for (std::size_t it = 0;; ++it) {
    const std::vector<double> pc = path_costs_of(problem, costs, y);
    out.gap = relative_gap(problem, demands, x, pc, latency_floor(problem, latencies, x, y));
    if (record_trace) out.trace.push_back(potential());
    out.iterations = it;
    if (out.gap <= tolerance) {
      out.converged = true;
      break;
    }
    if (it >= max_iters) break;

    bool moved = false;
    for (std::size_t i = 0; i < problem.commodities().size(); ++i) {
      const auto ps = problem.commodity_paths(i);
      // recompute on the current edge flows; earlier commodities may have moved
      const std::vector<double> c = i == 0 ? pc : path_costs_of(problem, costs, y);
      std::size_t worst = ps.size(), best = ps.size();
      for (std::size_t k = 0; k < ps.size(); ++k) {
        const std::size_t p = ps[k];
        if (best == ps.size() || c[p] < c[ps[best]]) best = k;
        if (x[p] > 0.0 && (worst == ps.size() || c[p] > c[ps[worst]])) worst = k;
      }
      if (worst == ps.size() || worst == best) continue;
      const Path& P = problem.paths()[ps[worst]];
      const Path& Q = problem.paths()[ps[best]];
      if (!(c[ps[worst]] > c[ps[best]])) continue;
      minus.clear();
      plus.clear();
      for (std::size_t e : P.edges)
        if (std::find(Q.edges.begin(), Q.edges.end(), e) == Q.edges.end()) minus.push_back(e);
      for (std::size_t e : Q.edges)
        if (std::find(P.edges.begin(), P.edges.end(), e) == P.edges.end()) plus.push_back(e);

      auto phi = [&](double d) {
        double v = 0.0;
        for (std::size_t e : plus) v += costs[e].value(y[e] + d);
        for (std::size_t e : minus) v -= costs[e].value(y[e] - d);
        return v;
      };
      auto dphi = [&](double d) {
        double v = 0.0;
        for (std::size_t e : plus) v += costs[e].deriv(y[e] + d);
        for (std::size_t e : minus) v += costs[e].deriv(y[e] - d);
        return v;
      };
      const double cap = x[ps[worst]];
      double step = cap;
      if (phi(cap) > 0.0) {
        double lo = 0.0, hi = cap;
        double d = 0.0;
        double v = phi(0.0);
        for (int k = 0; k < 200; ++k) {
          const double g = dphi(d);
          double next = g > 0.0 ? d - v / g : 0.5 * (lo + hi);
          if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
          if (next == d) break;
          d = next;
          v = phi(d);
          if (v == 0.0) break;
          if (v < 0.0) lo = d; else hi = d;
          if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(hi, 1e-300)) break;
        }
        step = d;
      }
      if (step <= 0.0) continue;
      x[ps[worst]] = step == cap ? 0.0 : x[ps[worst]] - step;
      x[ps[best]] += step;
      for (std::size_t e : minus) y[e] = std::max(0.0, y[e] - step);
      for (std::size_t e : plus) y[e] += step;
      moved = true;
    }
    if (!moved) {
      // no improving exchange left; float resolution is exhausted
      y = edge_flows_of(problem, x);
      const std::vector<double> c = path_costs_of(problem, costs, y);
      out.gap = relative_gap(problem, demands, x, c, latency_floor(problem, latencies, x, y));
      out.converged = out.gap <= tolerance;
      out.iterations = it + 1;
      break;
    }
    if ((it & 63) == 63) y = edge_flows_of(problem, x);  // limit drift
  }
  out.x = std::move(x);
  return out;
}

inline std::vector<double> uniform_split(const RoutingProblem& problem, double scale = 1.0) {
  std::vector<double> x(problem.num_paths(), 0.0);
  for (std::size_t i = 0; i < problem.commodities().size(); ++i) {
    const auto ps = problem.commodity_paths(i);
    for (std::size_t p : ps)
      x[p] = scale * problem.commodities()[i].demand / static_cast<double>(ps.size());
  }
  return x;
}

inline std::vector<double> demands_of(const RoutingProblem& problem, double scale = 1.0) {
  std::vector<double> d;
  for (const auto& c : problem.commodities()) d.push_back(scale * c.demand);
  return d;
}

inline void validate_start(const RoutingProblem& problem, std::span<const double> x, double scale) {
  if (x.size() != problem.num_paths()) throw InvariantError("initial flow has the wrong size");
  for (std::size_t i = 0; i < problem.commodities().size(); ++i) {
    double sum = 0.0;
    for (std::size_t p : problem.commodity_paths(i)) {
      if (!(x[p] >= 0.0)) throw InvariantError("initial flow has a negative entry");
      sum += x[p];
    }
    if (std::abs(sum - scale * problem.commodities()[i].demand) > kFeasibilityTolerance)
      throw InvariantError("initial flow is infeasible");
  }
}

inline void finish(const RoutingProblem& problem, EquilibriumResult& r) {
  r.total_latency = total_latency(problem, r.flow);
  r.fully_utilized = std::all_of(r.flow.edge_flows().begin(), r.flow.edge_flows().end(),
                                 [](double f) { return f > kUtilizationThreshold; });
}

}  // namespace detail

/// System-optimal flow: an equilibrium for the marginal costs (f l)'.
inline EquilibriumResult optimal_flow(const RoutingProblem& problem, const SolverOptions& options = {}) {
  problem.require_normalized();
  std::vector<detail::EdgeCost> costs;
  for (const Edge& e : problem.edges()) costs.emplace_back(e.latency.polynomial().times_x().derivative());
  const auto demands = detail::demands_of(problem);
  auto eq = detail::equilibrate(problem, demands, costs, detail::uniform_split(problem),
                                options.tolerance, options.max_iters, options.record_trace);
  if (!eq.converged)
    throw ConvergenceError("optimal flow did not converge", eq.x, eq.gap, eq.trace);
  EquilibriumResult r;
  r.flow = Flow(problem, eq.x);
  r.class_flows = {r.flow};
  r.classes = {{1.0, 1.0}};
  r.vi_gap = eq.gap;
  r.iterations = eq.iterations;
  r.trace = std::move(eq.trace);
  detail::finish(problem, r);
  return r;
}

namespace detail {

inline double common_sensitivity(const SensitivityModel& model) {
  const auto classes = model.populated_classes();
  for (const auto& c : classes)
    if (c.s != classes.front().s)
      throw DomainError("population is heterogeneous; use nash_flow_heterogeneous");
  return classes.front().s;
}

inline EquilibriumResult homogeneous_from(const GameInstance& instance, std::vector<double> start,
                                          const SolverOptions& options) {
  const RoutingProblem& problem = instance.problem();
  problem.require_normalized();
  const double s = common_sensitivity(instance.sensitivity());
  std::vector<EdgeCost> costs;
  for (std::size_t e = 0; e < problem.num_edges(); ++e) {
    Polynomial j = instance.effective_cost(e, s);
    require_monotone(j, "edge " + problem.edges()[e].id);
    costs.emplace_back(std::move(j));
  }
  validate_start(problem, start, 1.0);
  const auto demands = demands_of(problem);
  const auto latencies = latencies_of(problem);
  auto eq = equilibrate(problem, demands, costs, std::move(start), options.tolerance,
                        options.max_iters, options.record_trace, latencies);
  if (!eq.converged) throw ConvergenceError("Nash flow did not converge", eq.x, eq.gap, eq.trace);
  EquilibriumResult r;
  r.flow = Flow(problem, eq.x);
  r.class_flows = {r.flow};
  r.classes = {{1.0, s}};
  r.vi_gap = eq.gap;
  r.iterations = eq.iterations;
  r.trace = std::move(eq.trace);
  const auto pc = path_costs_of(problem, costs, r.flow.edge_flows());
  for (std::size_t p = 0; p < pc.size(); ++p)
    if (eq.x[p] > 0.0 && pc[p] < 0.0) r.negative_cost = true;
  finish(problem, r);
  return r;
}

}  // namespace detail

/// Nash flow of a population sharing one sensitivity (s = 1 in the usual
/// homogeneous game), found by minimizing sum_e int_0^{f_e} (l_e + s tau_e).
inline EquilibriumResult nash_flow_homogeneous(const GameInstance& instance,
                                               const SolverOptions& options = {}) {
  return detail::homogeneous_from(instance, detail::uniform_split(instance.problem()), options);
}

/// Same, started from the given path flows.
inline EquilibriumResult nash_flow_homogeneous(const GameInstance& instance, std::vector<double> start,
                                               const SolverOptions& options = {}) {
  return detail::homogeneous_from(instance, std::move(start), options);
}

// ---------------------------------------------------------------------------
// Certificates

/// Relative VI gap of `flow` for users of sensitivity s.
inline double vi_gap(const GameInstance& instance, const Flow& flow, double s = 1.0) {
  const RoutingProblem& problem = instance.problem();
  std::vector<detail::EdgeCost> costs;
  for (std::size_t e = 0; e < problem.num_edges(); ++e) costs.emplace_back(instance.effective_cost(e, s));
  const auto pc = detail::path_costs_of(problem, costs, flow.edge_flows());
  const auto floor =
      detail::latency_floor(problem, detail::latencies_of(problem), flow.path_flows(), flow.edge_flows());
  return detail::relative_gap(problem, detail::demands_of(problem), flow.path_flows(), pc, floor);
}

/// Relative VI gap of each class flow, all classes sharing the aggregate edge
/// flows. class_flows[c] routes classes[c].mass.
inline std::vector<double> class_vi_gaps(const GameInstance& instance,
                                         std::span<const SensitivityClass> classes,
                                         std::span<const Flow> class_flows) {
  if (classes.size() != class_flows.size()) throw InvariantError("one flow per class expected");
  const RoutingProblem& problem = instance.problem();
  std::vector<double> y(problem.num_edges(), 0.0);
  for (const Flow& f : class_flows)
    for (std::size_t e = 0; e < y.size(); ++e) y[e] += f.edge_flow(e);
  const auto latencies = detail::latencies_of(problem);
  std::vector<double> gaps;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::vector<detail::EdgeCost> costs;
    for (std::size_t e = 0; e < problem.num_edges(); ++e)
      costs.emplace_back(instance.effective_cost(e, classes[c].s));
    const auto pc = detail::path_costs_of(problem, costs, y);
    gaps.push_back(detail::relative_gap(problem, detail::demands_of(problem, classes[c].mass),
                                        class_flows[c].path_flows(), pc,
                                        detail::latency_floor(problem, latencies, class_flows[c].path_flows(), y)));
  }
  return gaps;
}

// ---------------------------------------------------------------------------
// Heterogeneous populations on parallel networks

namespace detail {

/// Class cost c(b + x) on one edge of a parallel network, b the other classes' flow.
struct ShiftedCost {
  const double* coef = nullptr;
  std::size_t n = 0;
  double offset = 0.0;

  double value(double x) const {
    const double f = offset + x;
    double v = 0.0;
    for (std::size_t i = n; i-- > 0;) v = v * f + coef[i];
    return v;
  }
  double deriv(double x) const {
    const double f = offset + x;
    double v = 0.0;
    for (std::size_t i = n; i-- > 1;) v = v * f + static_cast<double>(i) * coef[i];
    return v;
  }
};

/// Relative gap of one class on a parallel network (paths are edges).
inline double parallel_gap(std::span<const ShiftedCost> cost, std::span<const double> x, double mass,
                           double floor = 0.0) {
  double cmin = std::numeric_limits<double>::infinity();
  for (const auto& c : cost) cmin = std::min(cmin, c.value(0.0));
  double excess = 0.0, scale = mass * std::abs(cmin);
  for (std::size_t e = 0; e < x.size(); ++e) {
    const double v = cost[e].value(0.0);
    excess += x[e] * (v - cmin);
    scale += x[e] * std::abs(v);
  }
  scale = std::max(scale, floor);
  if (excess <= 0.0) return 0.0;
  return scale > 0.0 ? excess / scale : std::numeric_limits<double>::infinity();
}

/// Best response of one class on a parallel network: moves the class's own
/// mass x between edges until its shifted costs are equal on used edges.
/// Offsets are the other classes' flows; x is updated in place.
inline void parallel_best_response(std::span<ShiftedCost> cost, std::span<double> x, std::size_t max_moves) {
  const std::size_t E = x.size();
  for (std::size_t move = 0; move < max_moves; ++move) {
    std::size_t worst = E, best = E;
    double cw = 0.0, cb = 0.0;
    for (std::size_t e = 0; e < E; ++e) {
      const double v = cost[e].value(x[e]);
      if (best == E || v < cb) best = e, cb = v;
      if (x[e] > 0.0 && (worst == E || v > cw)) worst = e, cw = v;
    }
    if (worst == E || worst == best || !(cw > cb)) return;
    if (cw - cb <= 1e-15 * (std::abs(cw) + std::abs(cb))) return;
    const ShiftedCost& P = cost[worst];
    const ShiftedCost& Q = cost[best];
    const double xp = x[worst], xq = x[best];
    auto phi = [&](double d) { return Q.value(xq + d) - P.value(xp - d); };
    double step = xp;
    if (phi(xp) > 0.0) {
      double lo = 0.0, hi = xp, d = 0.0, v = cb - cw;
      for (int k = 0; k < 200; ++k) {
        const double g = Q.deriv(xq + d) + P.deriv(xp - d);
        double next = g > 0.0 ? d - v / g : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (next == d) break;
        d = next;
        v = phi(d);
        if (v == 0.0) break;
        if (v < 0.0) lo = d; else hi = d;
        if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) break;
      }
      step = d;
    }
    if (!(step > 0.0)) return;
    x[worst] = step == xp ? 0.0 : xp - step;
    x[best] = xq + step;
  }
}

inline EquilibriumResult heterogeneous_from(const GameInstance& instance,
                                            std::vector<std::vector<double>> x,
                                            const SolverOptions& options) {
  const RoutingProblem& problem = instance.problem();
  const std::vector<SensitivityClass> classes = instance.sensitivity().populated_classes();
  const std::size_t C = classes.size();
  const std::size_t E = problem.num_edges();
  if (x.size() != C) throw InvariantError("one initial flow per populated class expected");
  for (std::size_t c = 0; c < C; ++c) validate_start(problem, x[c], classes[c].mass);

  std::vector<std::vector<Polynomial>> cost(C);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t e = 0; e < E; ++e) {
      cost[c].push_back(instance.effective_cost(e, classes[c].s));
      require_monotone(cost[c].back(), "edge " + problem.edges()[e].id + " for s = " +
                                           std::to_string(classes[c].s));
    }
  std::vector<std::vector<ShiftedCost>> shifted(C, std::vector<ShiftedCost>(E));
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t e = 0; e < E; ++e) {
      const auto k = cost[c][e].coefficients();
      shifted[c][e] = ShiftedCost{k.data(), k.size(), 0.0};
    }

  // paths and edges coincide on a parallel network
  std::vector<double> y(E, 0.0);
  auto aggregate = [&] {
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t e = 0; e < E; ++e) y[e] += x[c][e];
  };
  const auto latencies = latencies_of(problem);
  auto class_gap = [&](std::size_t c) {
    double floor = 0.0;
    for (std::size_t e = 0; e < E; ++e) {
      shifted[c][e].offset = y[e];
      if (x[c][e] > 0.0) floor += x[c][e] * latencies[e](y[e]);
    }
    return parallel_gap(shifted[c], x[c], classes[c].mass, floor);
  };

  double damping = options.damping;
  double best_gap = std::numeric_limits<double>::infinity();
  std::vector<double> best_flat;
  std::vector<double> trace;
  std::vector<double> br(E);
  // previous step, to detect oscillation (successive steps pointing against each other)
  std::vector<double> prev_step(C * E, 0.0);
  std::size_t it = 0;
  double gap = 0.0;
  const std::size_t max_moves = 64 * E;
  for (;; ++it) {
    aggregate();
    gap = 0.0;
    for (std::size_t c = 0; c < C; ++c) gap = std::max(gap, class_gap(c));
    if (options.record_trace) trace.push_back(gap);
    if (gap < best_gap) {
      best_gap = gap;
      best_flat = y;
    }
    if (gap <= options.tolerance) break;
    if (it >= options.max_iters)
      throw ConvergenceError("heterogeneous Nash flow did not converge", best_flat, best_gap, trace);
    double dot = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t e = 0; e < E; ++e) shifted[c][e].offset = y[e] - x[c][e];
      std::copy(x[c].begin(), x[c].end(), br.begin());
      parallel_best_response(shifted[c], br, max_moves);
      for (std::size_t e = 0; e < E; ++e) {
        const double step = damping * (br[e] - x[c][e]);
        dot += step * prev_step[c * E + e];
        prev_step[c * E + e] = step;
        y[e] += step;
        x[c][e] += step;
      }
    }
    if (dot < 0.0) damping = std::max(damping * 0.5, 1.0 / 1024.0);
  }

  EquilibriumResult r;
  r.classes = classes;
  std::vector<double> total(E, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    r.class_flows.emplace_back(problem, x[c]);
    for (std::size_t e = 0; e < E; ++e) total[e] += x[c][e];
  }
  r.flow = Flow(problem, std::move(total));
  r.vi_gap = gap;
  r.iterations = it;
  r.trace = std::move(trace);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t e = 0; e < E; ++e)
      if (x[c][e] > 0.0 && cost[c][e](y[e]) < 0.0) r.negative_cost = true;
  finish(problem, r);
  return r;
}

inline void require_parallel(const RoutingProblem& problem) {
  if (!problem.is_parallel())
    throw TopologyError("heterogeneous equilibria are supported on parallel networks only");
}

inline std::vector<std::vector<double>> uniform_class_split(const RoutingProblem& problem,
                                                            std::span<const SensitivityClass> classes) {
  std::vector<std::vector<double>> x;
  for (const auto& c : classes) x.push_back(uniform_split(problem, c.mass));
  return x;
}

}  // namespace detail

/// Multi-class Nash flow on a parallel network: every class uses only edges
/// minimizing l_e + s_c tau_e. Damped Gauss-Seidel best response, each best
/// response solved exactly by equalizing the class's shifted costs.
inline EquilibriumResult nash_flow_heterogeneous(const GameInstance& instance,
                                                 const SolverOptions& options = {}) {
  const RoutingProblem& problem = instance.problem();
  problem.require_normalized();
  detail::require_parallel(problem);
  const auto classes = instance.sensitivity().populated_classes();
  return detail::heterogeneous_from(instance, detail::uniform_class_split(problem, classes), options);
}

/// Same, started from per-class path flows (one vector per populated class).
inline EquilibriumResult nash_flow_heterogeneous(const GameInstance& instance,
                                                 std::vector<std::vector<double>> start,
                                                 const SolverOptions& options = {}) {
  instance.problem().require_normalized();
  detail::require_parallel(instance.problem());
  return detail::heterogeneous_from(instance, std::move(start), options);
}

/// Dispatches on the population: one sensitivity value, or several classes.
inline EquilibriumResult nash_flow(const GameInstance& instance, const SolverOptions& options = {}) {
  const auto classes = instance.sensitivity().populated_classes();
  const bool single = std::all_of(classes.begin(), classes.end(),
                                  [&](const SensitivityClass& c) { return c.s == classes.front().s; });
  return single ? nash_flow_homogeneous(instance, options) : nash_flow_heterogeneous(instance, options);
}

// ---------------------------------------------------------------------------
// Worst-case equilibrium search

struct WorstCaseOptions {
  std::size_t restarts = 0;
  std::uint64_t seed = 0;
  /// Skip equilibria with an edge at or below kUtilizationThreshold.
  bool require_fully_utilized = false;
  SolverOptions solver{};
};

inline constexpr std::size_t kEnumerationMaxEdges = 4;
inline constexpr std::size_t kEnumerationMaxClasses = 3;

namespace detail {

/// Uniform double in [0, 1) from the top 53 bits, identical on every platform.
inline double unit_draw(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Random split of `mass` over n entries (normalized exponentials).
inline std::vector<double> random_split(std::mt19937_64& rng, std::size_t n, double mass) {
  std::vector<double> w(n);
  double sum = 0.0;
  for (auto& v : w) {
    v = -std::log(1.0 - unit_draw(rng));
    sum += v;
  }
  for (auto& v : w) v = sum > 0.0 ? mass * v / sum : mass / static_cast<double>(n);
  return w;
}

}  // namespace detail

/// Equilibrium with the highest total latency among those reached from the
/// default start, `restarts` random starts and, on parallel networks with at
/// most 4 edges and 3 classes, every assignment of whole classes to edges.
/// The value is a lower bound on the worst Nash latency. Throws
/// ConvergenceError if no start yields an acceptable equilibrium.
inline EquilibriumResult worst_case_nash(const GameInstance& instance, const WorstCaseOptions& options = {}) {
  const RoutingProblem& problem = instance.problem();
  problem.require_normalized();
  const auto classes = instance.sensitivity().populated_classes();
  const bool homogeneous = std::all_of(classes.begin(), classes.end(),
                                       [&](const SensitivityClass& c) { return c.s == classes.front().s; });
  if (!homogeneous) detail::require_parallel(problem);
  const std::size_t C = homogeneous ? 1 : classes.size();
  std::vector<double> mass;
  for (std::size_t c = 0; c < C; ++c) mass.push_back(homogeneous ? 1.0 : classes[c].mass);

  // per-class path flows for each start
  std::vector<std::vector<std::vector<double>>> starts;
  std::vector<std::vector<double>> first;
  for (std::size_t c = 0; c < C; ++c) first.push_back(detail::uniform_split(problem, mass[c]));
  starts.push_back(std::move(first));
  std::mt19937_64 rng(options.seed);
  for (std::size_t k = 0; k < options.restarts; ++k) {
    std::vector<std::vector<double>> s;
    for (std::size_t c = 0; c < C; ++c) {
      std::vector<double> x(problem.num_paths(), 0.0);
      for (std::size_t i = 0; i < problem.commodities().size(); ++i) {
        const auto ps = problem.commodity_paths(i);
        const auto w = detail::random_split(rng, ps.size(), mass[c] * problem.commodities()[i].demand);
        for (std::size_t j = 0; j < ps.size(); ++j) x[ps[j]] = w[j];
      }
      s.push_back(std::move(x));
    }
    starts.push_back(std::move(s));
  }
  const std::size_t E = problem.num_edges();
  if (problem.is_parallel() && E <= kEnumerationMaxEdges && C <= kEnumerationMaxClasses) {
    std::size_t combos = 1;
    for (std::size_t c = 0; c < C; ++c) combos *= E;
    for (std::size_t code = 0; code < combos; ++code) {
      std::vector<std::vector<double>> s;
      std::size_t rest = code;
      for (std::size_t c = 0; c < C; ++c) {
        std::vector<double> x(E, 0.0);
        x[rest % E] = mass[c];
        rest /= E;
        s.push_back(std::move(x));
      }
      starts.push_back(std::move(s));
    }
  }

  EquilibriumResult worst;
  bool found = false;
  double last_gap = std::numeric_limits<double>::infinity();
  for (auto& s : starts) {
    EquilibriumResult r;
    try {
      r = homogeneous ? nash_flow_homogeneous(instance, std::move(s[0]), options.solver)
                      : nash_flow_heterogeneous(instance, std::move(s), options.solver);
    } catch (const ConvergenceError& e) {
      last_gap = e.best_gap();
      continue;
    }
    if (options.require_fully_utilized && !r.fully_utilized) continue;
    if (!found || r.total_latency > worst.total_latency) {
      worst = std::move(r);
      found = true;
    }
  }
  if (!found) {
    if (options.require_fully_utilized && std::isinf(last_gap))
      throw DegenerateInstanceError("no fully-utilized equilibrium found");
    throw ConvergenceError("no start converged to an equilibrium", {}, last_gap, {});
  }
  return worst;
}

}  // namespace tollsub
