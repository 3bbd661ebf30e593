#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <mutex>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "tollsub/equilibrium.hpp"
#include "tollsub/errors.hpp"
#include "tollsub/incentives.hpp"
#include "tollsub/netmodel.hpp"

namespace tollsub {

// ---------------------------------------------------------------------------
// Closed-form bounds

/// 4 / (3 + 2 beta - beta^2) for beta in [0, 1), 1 for beta >= 1.
inline double affine_toll_poa_formula(double beta) {
  if (!(beta >= 0.0)) throw DomainError("beta must be >= 0");
  if (beta >= 1.0) return 1.0;
  return 4.0 / (3.0 + 2.0 * beta - beta * beta);
}

/// Toll formula at beta_hat = 1/(1 - beta) - 1 for beta in [0, 1/2), 1 on [1/2, 1).
inline double affine_subsidy_poa_formula(double beta) {
  if (!(beta >= 0.0)) throw DomainError("beta must be >= 0");
  if (beta >= 1.0) throw DomainError("subsidy bound beta must be < 1");
  if (beta >= 0.5) return 1.0;
  return affine_toll_poa_formula(1.0 / (1.0 - beta) - 1.0);
}

/// (4/3) (1 - sqrt(q) / (1 + sqrt(q))^2) for q in (0, 1].
inline double smc_poa_formula(double q) {
  if (!(q > 0.0 && q <= 1.0)) throw DomainError("q must lie in (0, 1]");
  const double r = std::sqrt(q);
  return 4.0 / 3.0 * (1.0 - r / ((1.0 + r) * (1.0 + r)));
}

/// Heterogeneity ratio seen by the nominally equivalent subsidy:
/// lambda q / (1 - q + lambda q) with lambda = sqrt(sL sU) / (1 + sqrt(sL sU)).
inline double nes_effective_q(double s_low, double s_high) {
  if (!(s_low > 0.0) || !(s_high >= s_low) || !std::isfinite(s_high))
    throw DomainError("sensitivity bounds must satisfy 0 < s_L <= s_U");
  const double q = s_low / s_high;
  const double k = std::sqrt(s_low * s_high);
  const double lambda = k / (1.0 + k);
  return lambda * q / (1.0 - q + lambda * q);
}

inline double nes_poa_formula(double q, double s_low, double s_high) {
  if (!(q > 0.0 && q <= 1.0)) throw DomainError("q must lie in (0, 1]");
  if (!(s_low > 0.0) || !(s_high >= s_low)) throw DomainError("sensitivity bounds must satisfy 0 < s_L <= s_U");
  if (std::abs(q - s_low / s_high) > 1e-12 * q) throw DomainError("q must equal s_L / s_U");
  const double q_hat = nes_effective_q(s_low, s_high);
  if (q_hat > q * (1.0 + 1e-15)) throw InvariantError("effective heterogeneity exceeds q");
  return smc_poa_formula(q_hat);
}

// ---------------------------------------------------------------------------
// Instance families

/// l1 = f^p, l2 = 1, unit demand.
inline RoutingProblem pigou_generator(int p) {
  if (p < 1) throw DomainError("Pigou degree p must be >= 1");
  return parallel_network({LatencyFunction::monomial(static_cast<std::size_t>(p)), LatencyFunction::constant(1.0)});
}

/// l1 = a1 f + b1, l2 = a2 f + b2, unit demand.
inline RoutingProblem two_link_affine(double a1, double b1, double a2, double b2) {
  return parallel_network({LatencyFunction::affine(a1, b1), LatencyFunction::affine(a2, b2)});
}

// ---------------------------------------------------------------------------
// Reports

struct PoAReport {
  std::string instance_id;
  std::string mechanism;
  double nash_latency = 0.0;
  double opt_latency = 0.0;
  double poa = 1.0;
  double s_low = 1.0;
  double s_high = 1.0;
  double nash_gap = 0.0;
  double opt_gap = 0.0;
  bool fully_utilized = false;
  bool negative_cost = false;
  std::size_t restarts = 0;
  std::uint64_t seed = 0;
  /// Family searches: instances evaluated, and instances left out because the
  /// optimum is 0 or (when filtering) no fully-utilized equilibrium exists.
  std::size_t evaluated = 1;
  std::size_t excluded = 0;
  std::size_t filtered = 0;

  double vi_gap() const noexcept { return std::max(nash_gap, opt_gap); }
  bool certified(double tolerance = kEquilibriumTolerance) const noexcept { return vi_gap() <= tolerance; }
};

namespace detail {

inline PoAReport make_report(const GameInstance& instance, const EquilibriumResult& nash,
                             const EquilibriumResult& opt, const WorstCaseOptions& options) {
  if (!(opt.total_latency > 0.0)) throw DegenerateInstanceError("optimal latency is 0; PoA undefined");
  PoAReport r;
  r.nash_latency = nash.total_latency;
  r.opt_latency = opt.total_latency;
  r.poa = nash.total_latency / opt.total_latency;
  r.s_low = instance.sensitivity().s_low();
  r.s_high = instance.sensitivity().s_high();
  r.nash_gap = nash.vi_gap;
  r.opt_gap = opt.vi_gap;
  r.fully_utilized = nash.fully_utilized;
  r.negative_cost = nash.negative_cost;
  r.restarts = options.restarts;
  r.seed = options.seed;
  if (r.poa < 1.0 - 10.0 * kEquilibriumTolerance)
    throw InvariantError("Nash latency below the optimum: PoA " + std::to_string(r.poa));
  return r;
}

}  // namespace detail

/// Worst Nash latency found over the optimal latency, for an instance whose
/// incentives are already attached.
inline PoAReport poa_instance(const GameInstance& instance, const WorstCaseOptions& options = {},
                              std::string instance_id = {}) {
  const EquilibriumResult opt = optimal_flow(instance.problem(), options.solver);
  if (!(opt.total_latency > 0.0)) throw DegenerateInstanceError("optimal latency is 0; PoA undefined");
  const EquilibriumResult nash = worst_case_nash(instance, options);
  PoAReport r = detail::make_report(instance, nash, opt, options);
  r.instance_id = std::move(instance_id);
  return r;
}

/// Same, with `mechanism` applied to every edge first.
inline PoAReport poa_instance(const GameInstance& instance, const IncentiveMechanism& mechanism,
                              const WorstCaseOptions& options = {}, std::string instance_id = {}) {
  PoAReport r = poa_instance(apply_mechanism(mechanism, instance), options, std::move(instance_id));
  r.mechanism = mechanism.to_string();
  return r;
}

/// Largest PoA over `instances` under `mechanism`. Instances with zero optimal
/// latency are skipped and counted; ties keep the first instance.
inline PoAReport poa_family(std::span<const GameInstance> instances, const IncentiveMechanism& mechanism,
                            const WorstCaseOptions& options = {}, std::span<const std::string> ids = {}) {
  if (instances.empty()) throw DomainError("instance family is empty");
  PoAReport best;
  bool found = false;
  std::size_t excluded = 0;
  for (std::size_t k = 0; k < instances.size(); ++k) {
    PoAReport r;
    try {
      r = poa_instance(instances[k], mechanism, options,
                       k < ids.size() ? ids[k] : "instance " + std::to_string(k));
    } catch (const DegenerateInstanceError&) {
      ++excluded;
      continue;
    }
    if (!found || r.poa > best.poa) {
      best = std::move(r);
      found = true;
    }
  }
  if (!found) throw DegenerateInstanceError("every instance in the family has zero optimal latency");
  best.evaluated = instances.size() - excluded;
  best.excluded = excluded;
  return best;
}

// ---------------------------------------------------------------------------
// Two-link affine grid search

/// Values taken by each of a1, b1, a2, b2, and the fractions of users placed
/// at s_L (the rest at s_U). Mirror images (edges swapped) are skipped.
struct GridSpec {
  std::vector<double> coefficients;
  std::vector<double> mass_splits;
  bool skip_mirrors = true;

  /// 21 points per coefficient on [0, 2] and 11 mass splits on [0, 1].
  static GridSpec standard() {
    GridSpec g;
    for (int k = 0; k <= 20; ++k) g.coefficients.push_back(k / 10.0);
    for (int k = 0; k <= 10; ++k) g.mass_splits.push_back(k / 10.0);
    return g;
  }
};

struct SearchOptions {
  WorstCaseOptions worst_case{};
  /// Keep only instances whose worst equilibrium found uses every edge.
  bool require_fully_utilized = false;
  std::size_t threads = 1;
};

namespace detail {

inline std::string grid_label(double a1, double b1, double a2, double b2, double m, bool two_class) {
  std::ostringstream os;
  os << "a1=" << a1 << " b1=" << b1 << " a2=" << a2 << " b2=" << b2;
  if (two_class) os << " m=" << m;
  return os.str();
}

struct Candidate {
  PoAReport report;
  std::size_t index = 0;
  bool found = false;
  std::size_t evaluated = 0;
  std::size_t excluded = 0;
  std::size_t filtered = 0;

  void offer(PoAReport r, std::size_t idx) {
    if (!found || r.poa > report.poa || (r.poa == report.poa && idx < index)) {
      report = std::move(r);
      index = idx;
      found = true;
    }
  }
  void merge(Candidate&& other) {
    evaluated += other.evaluated;
    excluded += other.excluded;
    filtered += other.filtered;
    if (other.found) offer(std::move(other.report), other.index);
  }
};

/// Runs body(k) for k in [0, n) on `threads` workers; exceptions are rethrown
/// in the caller (the first one by index wins).
template <typename Body>
void parallel_for(std::size_t n, std::size_t threads, Body&& body) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t k = 0; k < n; ++k) body(k, 0);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr error;
  std::size_t error_index = n;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (;;) {
        const std::size_t k = next.fetch_add(1);
        if (k >= n) return;
        try {
          body(k, t);
        } catch (...) {
          std::lock_guard lock(mu);
          if (k < error_index) {
            error = std::current_exception();
            error_index = k;
          }
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

/// Largest empirical PoA, per mechanism, over two-link affine instances on the
/// grid with a two-point population {s_L, s_U}. When s_L == s_U the population
/// is a single class at s_L and the mass splits are ignored. The optimum of
/// each network is computed once and shared by all mechanisms and splits.
/// The result is a lower bound on the supremum over the continuous family.
inline std::vector<PoAReport> affine_worstcase_search(std::span<const IncentiveMechanism> mechanisms,
                                                      double s_low, double s_high, const GridSpec& grid,
                                                      const SearchOptions& options = {}) {
  if (mechanisms.empty()) throw DomainError("no mechanism to search");
  if (grid.coefficients.empty()) throw DomainError("empty coefficient grid");
  if (!(s_low > 0.0) || !(s_high >= s_low)) throw DomainError("sensitivity bounds must satisfy 0 < s_L <= s_U");
  const bool two_class = s_low != s_high;
  std::vector<double> splits = two_class ? grid.mass_splits : std::vector<double>{1.0};
  if (splits.empty()) throw DomainError("empty mass-split grid");
  for (double m : splits)
    if (!(m >= 0.0 && m <= 1.0)) throw DomainError("mass split outside [0, 1]");

  const std::size_t n = grid.coefficients.size();
  std::vector<std::size_t> cells;  // encoded (i1, j1, i2, j2)
  for (std::size_t i1 = 0; i1 < n; ++i1)
    for (std::size_t j1 = 0; j1 < n; ++j1)
      for (std::size_t i2 = 0; i2 < n; ++i2)
        for (std::size_t j2 = 0; j2 < n; ++j2) {
          if (grid.skip_mirrors && std::make_pair(i1, j1) > std::make_pair(i2, j2)) continue;
          cells.push_back(((i1 * n + j1) * n + i2) * n + j2);
        }

  const std::size_t M = mechanisms.size();
  const std::size_t threads = std::max<std::size_t>(1, options.threads);
  std::vector<std::vector<detail::Candidate>> local(threads, std::vector<detail::Candidate>(M));
  WorstCaseOptions wc = options.worst_case;
  wc.require_fully_utilized = options.require_fully_utilized;

  detail::parallel_for(cells.size(), threads, [&](std::size_t k, std::size_t t) {
    std::size_t code = cells[k];
    const double b2 = grid.coefficients[code % n];
    code /= n;
    const double a2 = grid.coefficients[code % n];
    code /= n;
    const double b1 = grid.coefficients[code % n];
    code /= n;
    const double a1 = grid.coefficients[code];
    auto problem = std::make_shared<const RoutingProblem>(two_link_affine(a1, b1, a2, b2));
    const EquilibriumResult opt = optimal_flow(*problem, wc.solver);
    const bool degenerate = !(opt.total_latency > 0.0);
    for (std::size_t s = 0; s < splits.size(); ++s) {
      const std::size_t idx = k * splits.size() + s;
      SensitivityModel population = two_class ? SensitivityModel::two_class(splits[s], s_low, s_high)
                                              : SensitivityModel({{1.0, s_low}}, s_low, s_high);
      const GameInstance base(problem, std::move(population));
      for (std::size_t mi = 0; mi < M; ++mi) {
        auto& cand = local[t][mi];
        if (degenerate) {
          ++cand.excluded;
          continue;
        }
        const GameInstance instance = apply_mechanism(mechanisms[mi], base);
        EquilibriumResult nash;
        try {
          nash = worst_case_nash(instance, wc);
        } catch (const DegenerateInstanceError&) {
          ++cand.filtered;
          continue;
        }
        PoAReport r = detail::make_report(instance, nash, opt, wc);
        r.instance_id = detail::grid_label(a1, b1, a2, b2, splits[s], two_class);
        r.mechanism = mechanisms[mi].to_string();
        ++cand.evaluated;
        cand.offer(std::move(r), idx);
      }
    }
  });

  std::vector<PoAReport> out;
  for (std::size_t mi = 0; mi < M; ++mi) {
    detail::Candidate total;
    for (std::size_t t = 0; t < threads; ++t) total.merge(std::move(local[t][mi]));
    if (!total.found) throw DegenerateInstanceError("no admissible instance on the grid");
    total.report.evaluated = total.evaluated;
    total.report.excluded = total.excluded;
    total.report.filtered = total.filtered;
    out.push_back(std::move(total.report));
  }
  return out;
}

inline PoAReport affine_worstcase_search(const IncentiveMechanism& mechanism, double s_low, double s_high,
                                         const GridSpec& grid, const SearchOptions& options = {}) {
  return affine_worstcase_search(std::span<const IncentiveMechanism>(&mechanism, 1), s_low, s_high, grid,
                                 options)
      .front();
}

}  // namespace tollsub
