#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "tollsub/errors.hpp"
#include "tollsub/incentives.hpp"
#include "tollsub/poa.hpp"

namespace tollsub {

// ---------------------------------------------------------------------------
// Grids and configuration

/// Inclusive arithmetic grid start, start + step, ..., <= stop.
struct Range {
  double start = 0.0;
  double stop = 0.0;
  double step = 1.0;

  void validate(const std::string& name) const {
    if (!std::isfinite(start) || !std::isfinite(stop) || !std::isfinite(step))
      throw DomainError(name + ": grid bounds must be finite");
    if (!(step > 0.0)) throw DomainError(name + ": grid step must be > 0");
    if (stop < start) throw DomainError(name + ": grid range is empty");
  }

  std::vector<double> values() const {
    validate("grid");
    const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
    std::vector<double> v;
    for (std::size_t k = 0; k < n; ++k) {
      double x = start + static_cast<double>(k) * step;
      if (std::abs(x - stop) <= 1e-9 * step) x = stop;
      // snap to a short decimal so 0.1 * 3 prints as 0.3
      const double r = std::round(x * 1e12) / 1e12;
      v.push_back(std::abs(r - x) <= 1e-12 * std::max(1.0, std::abs(x)) ? r : x);
    }
    return v;
  }
};

/// Parses "a:b:step".
inline Range parse_range(std::string_view text) {
  Range r;
  double* fields[3] = {&r.start, &r.stop, &r.step};
  std::size_t pos = 0;
  for (int k = 0; k < 3; ++k) {
    const std::size_t end = k < 2 ? text.find(':', pos) : text.size();
    if (end == std::string_view::npos)
      throw ParseError(std::string(text), "expected a:b:step");
    const std::string_view part = text.substr(pos, end - pos);
    const char* first = part.data();
    const char* last = part.data() + part.size();
    if (first != last && *first == '+') ++first;
    auto res = std::from_chars(first, last, *fields[k]);
    if (res.ec != std::errc() || res.ptr != last || part.empty())
      throw ParseError(std::string(text), "bad number '" + std::string(part) + "' in a:b:step");
    pos = end + 1;
  }
  return r;
}

enum class ExperimentKind { solve, poa, fig1, fig2a, fig2b, theorem_check };

inline constexpr int kMaxPigouDegree = 6;

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::solve;
  Range beta_grid{0.0, 1.0, 0.05};
  Range q_grid{0.1, 1.0, 0.15};
  int p_max = 4;
  double s_low = 1.0;
  double s_high = 4.0;
  std::size_t restarts = 0;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  /// Points per coefficient of the two-link grid on [0, 2], and mass splits on [0, 1].
  std::size_t grid_points = 21;
  std::size_t mass_splits = 11;
  bool fully_utilized_only = true;
  int theorem = 1;
  double min_margin = 0.0;

  void validate() const {
    beta_grid.validate("beta grid");
    q_grid.validate("q grid");
    if (beta_grid.start < 0.0) throw DomainError("beta grid must be non-negative");
    if (q_grid.start <= 0.0 || q_grid.stop > 1.0) throw DomainError("q grid must lie in (0, 1]");
    if (p_max < 1 || p_max > kMaxPigouDegree)
      throw DomainError("p max must lie in [1, " + std::to_string(kMaxPigouDegree) + "]");
    if (!(s_low > 0.0) || !(s_high >= s_low)) throw DomainError("sensitivity bounds must satisfy 0 < s_L <= s_U");
    if (grid_points < 2) throw DomainError("grid points must be >= 2");
    if (mass_splits < 2) throw DomainError("mass splits must be >= 2");
    if (theorem != 1 && theorem != 2) throw DomainError("theorem must be 1 or 2");
  }

  GridSpec grid() const {
    GridSpec g;
    for (std::size_t k = 0; k < grid_points; ++k)
      g.coefficients.push_back(std::round(2.0 * static_cast<double>(k) / static_cast<double>(grid_points - 1) * 1e12) / 1e12);
    for (std::size_t k = 0; k < mass_splits; ++k)
      g.mass_splits.push_back(std::round(static_cast<double>(k) / static_cast<double>(mass_splits - 1) * 1e12) / 1e12);
    return g;
  }

  WorstCaseOptions worst_case() const {
    WorstCaseOptions w;
    w.restarts = restarts;
    w.seed = seed;
    return w;
  }

  SearchOptions search(bool fully_utilized) const {
    SearchOptions s;
    s.worst_case = worst_case();
    s.require_fully_utilized = fully_utilized;
    s.threads = threads;
    return s;
  }
};

// ---------------------------------------------------------------------------
// CSV tables

struct Table {
  std::vector<std::string> comments;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline std::string fmt(double v) { return detail::format_number(v); }
inline std::string fmt(bool v) { return v ? "1" : "0"; }
inline std::string fmt(std::size_t v) { return std::to_string(v); }
inline std::string fmt(std::uint64_t v, int) { return std::to_string(v); }

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline void write_csv(std::ostream& os, const Table& t) {
  for (const auto& c : t.comments) os << "# " << c << "\n";
  for (std::size_t k = 0; k < t.header.size(); ++k) os << (k ? "," : "") << csv_field(t.header[k]);
  os << "\n";
  for (const auto& row : t.rows) {
    for (std::size_t k = 0; k < row.size(); ++k) os << (k ? "," : "") << csv_field(row[k]);
    os << "\n";
  }
}

inline std::string lower_bound_note(const ExperimentConfig& cfg) {
  return "empirical PoA values are lower bounds on suprema over infinite game families: worst Nash flow over " +
         std::to_string(cfg.restarts) + " random restarts plus class-to-edge starts; two-link affine grid with " +
         std::to_string(cfg.grid_points) + " points per coefficient on [0,2] and " +
         std::to_string(cfg.mass_splits) + " mass splits";
}

inline std::vector<std::string> report_header() {
  return {"instance", "mechanism", "s_L", "s_U", "nash_latency", "opt_latency", "poa",
          "vi_gap", "fully_utilized", "restarts", "seed", "uncertified"};
}

inline std::vector<std::string> report_row(const PoAReport& r) {
  return {r.instance_id, r.mechanism, fmt(r.s_low), fmt(r.s_high), fmt(r.nash_latency), fmt(r.opt_latency),
          fmt(r.poa), fmt(r.vi_gap()), fmt(r.fully_utilized), fmt(r.restarts), fmt(r.seed, 0),
          fmt(!r.certified())};
}

// ---------------------------------------------------------------------------
// Figure sweeps

/// Pigou networks of degree 1..p_max under the tightly bounded toll and
/// subsidy families; each row holds the family supremum and per-degree values.
inline Table fig1_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  Table t;
  t.comments.push_back(lower_bound_note(cfg));
  t.comments.push_back("family: Pigou networks l1 = f^p, l2 = 1 for p = 1.." + std::to_string(cfg.p_max) +
                       "; toll min(1, beta/p) f l', subsidy min(1, beta (p+1)/p) times the lambda = 1/(p+1) transform of f l'");
  t.header = {"beta", "poa_toll_tight", "poa_subsidy_tight"};
  for (int p = 1; p <= cfg.p_max; ++p) t.header.push_back("toll_p" + std::to_string(p));
  for (int p = 1; p <= cfg.p_max; ++p) t.header.push_back("subsidy_p" + std::to_string(p));
  t.header.insert(t.header.end(), {"vi_gap", "restarts", "seed", "uncertified"});

  std::vector<GameInstance> pigou;
  for (int p = 1; p <= cfg.p_max; ++p) pigou.emplace_back(pigou_generator(p));
  const WorstCaseOptions wc = cfg.worst_case();
  for (double beta : cfg.beta_grid.values()) {
    std::vector<double> toll, sub;
    double gap = 0.0;
    for (int p = 1; p <= cfg.p_max; ++p) {
      const auto deg = static_cast<std::size_t>(p);
      const PoAReport a = poa_instance(pigou[deg - 1], IncentiveMechanism::tight_poly_toll(beta, deg), wc);
      const PoAReport b = poa_instance(pigou[deg - 1], IncentiveMechanism::tight_poly_subsidy(beta, deg), wc);
      toll.push_back(a.poa);
      sub.push_back(b.poa);
      gap = std::max({gap, a.vi_gap(), b.vi_gap()});
    }
    std::vector<std::string> row = {fmt(beta), fmt(*std::max_element(toll.begin(), toll.end())),
                                    fmt(*std::max_element(sub.begin(), sub.end()))};
    for (double v : toll) row.push_back(fmt(v));
    for (double v : sub) row.push_back(fmt(v));
    row.insert(row.end(), {fmt(gap), fmt(cfg.restarts), fmt(cfg.seed, 0), fmt(gap > kEquilibriumTolerance)});
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// Affine toll and subsidy formulas next to the two-link grid suprema.
inline Table fig2a_sweep(const ExperimentConfig& cfg, bool empirical = true) {
  cfg.validate();
  Table t;
  t.comments.push_back(lower_bound_note(cfg));
  t.comments.push_back("subsidy_formula is 1 for beta >= 1/2, including beta >= 1");
  t.header = {"beta", "toll_formula", "subsidy_formula"};
  if (empirical)
    t.header.insert(t.header.end(), {"empirical_toll", "empirical_subsidy", "toll_argmax", "subsidy_argmax",
                                     "excluded", "vi_gap", "restarts", "seed", "uncertified"});
  const GridSpec grid = cfg.grid();
  for (double beta : cfg.beta_grid.values()) {
    std::vector<std::string> row = {fmt(beta), fmt(affine_toll_poa_formula(beta)),
                                    fmt(beta >= 0.5 ? 1.0 : affine_subsidy_poa_formula(beta))};
    if (empirical) {
      const std::vector<IncentiveMechanism> mechs = {IncentiveMechanism::opt_bounded_toll(beta),
                                                     IncentiveMechanism::opt_bounded_subsidy(beta)};
      const auto rep = affine_worstcase_search(mechs, 1.0, 1.0, grid, cfg.search(false));
      const double gap = std::max(rep[0].vi_gap(), rep[1].vi_gap());
      row.insert(row.end(), {fmt(rep[0].poa), fmt(rep[1].poa), rep[0].instance_id, rep[1].instance_id,
                             fmt(rep[0].excluded), fmt(gap), fmt(cfg.restarts), fmt(cfg.seed, 0),
                             fmt(gap > kEquilibriumTolerance)});
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// Scaled marginal-cost toll and its nominally equivalent subsidy under a
/// two-point population s in {s_L, s_L / q}.
inline Table fig2b_sweep(const ExperimentConfig& cfg, bool empirical = true) {
  cfg.validate();
  Table t;
  t.comments.push_back(lower_bound_note(cfg));
  t.comments.push_back(std::string("population: mass m at s_L, 1 - m at s_U = s_L / q") +
                       (cfg.fully_utilized_only ? "; only equilibria using both links count" : ""));
  t.header = {"q", "s_L", "s_U", "smc_formula", "nes_formula"};
  if (empirical)
    t.header.insert(t.header.end(), {"empirical_smc", "empirical_nes", "smc_argmax", "nes_argmax", "filtered",
                                     "vi_gap", "restarts", "seed", "uncertified"});
  const GridSpec grid = cfg.grid();
  for (double q : cfg.q_grid.values()) {
    const double sL = cfg.s_low;
    const double sU = q == 1.0 ? sL : sL / q;
    const double qq = sL / sU;
    std::vector<std::string> row = {fmt(q), fmt(sL), fmt(sU), fmt(smc_poa_formula(qq)),
                                    fmt(nes_poa_formula(qq, sL, sU))};
    if (empirical) {
      const std::vector<IncentiveMechanism> mechs = {IncentiveMechanism::scaled_marginal_cost(sL, sU),
                                                     IncentiveMechanism::nominally_equivalent_subsidy(sL, sU)};
      const auto rep = affine_worstcase_search(mechs, sL, sU, grid, cfg.search(cfg.fully_utilized_only));
      const double gap = std::max(rep[0].vi_gap(), rep[1].vi_gap());
      row.insert(row.end(), {fmt(rep[0].poa), fmt(rep[1].poa), rep[0].instance_id, rep[1].instance_id,
                             fmt(rep[0].filtered), fmt(gap), fmt(cfg.restarts), fmt(cfg.seed, 0),
                             fmt(gap > kEquilibriumTolerance)});
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Theorem checks

struct TheoremCheck {
  Table table;
  bool passed = true;
};

/// Tolerance for the non-strict inequalities.
inline constexpr double kTheoremSlack = 10.0 * kEquilibriumTolerance;

/// min_margin when positive (strict check), otherwise -kTheoremSlack.
inline double required_margin(const ExperimentConfig& cfg) {
  return cfg.min_margin > 0.0 ? cfg.min_margin : -kTheoremSlack;
}

/// For each beta: grid supremum under the optimal bounded toll minus that
/// under the optimal bounded subsidy must be >= required_margin(cfg).
inline TheoremCheck theorem1_check(const ExperimentConfig& cfg) {
  cfg.validate();
  TheoremCheck out;
  Table& t = out.table;
  t.comments.push_back(lower_bound_note(cfg));
  t.comments.push_back("check: toll_sup - subsidy_sup >= " + fmt(required_margin(cfg)));
  t.header = {"beta", "toll_sup", "subsidy_sup", "margin", "required", "pass", "toll_argmax", "subsidy_argmax",
              "vi_gap", "restarts", "seed", "uncertified"};
  const GridSpec grid = cfg.grid();
  const double required = required_margin(cfg);
  for (double beta : cfg.beta_grid.values()) {
    const std::vector<IncentiveMechanism> mechs = {IncentiveMechanism::opt_bounded_toll(beta),
                                                   IncentiveMechanism::opt_bounded_subsidy(beta)};
    const auto rep = affine_worstcase_search(mechs, 1.0, 1.0, grid, cfg.search(false));
    const double margin = rep[0].poa - rep[1].poa;
    const bool pass = margin >= required;
    out.passed = out.passed && pass;
    const double gap = std::max(rep[0].vi_gap(), rep[1].vi_gap());
    t.rows.push_back({fmt(beta), fmt(rep[0].poa), fmt(rep[1].poa), fmt(margin), fmt(required), fmt(pass),
                      rep[0].instance_id, rep[1].instance_id, fmt(gap), fmt(cfg.restarts), fmt(cfg.seed, 0),
                      fmt(gap > kEquilibriumTolerance)});
  }
  return out;
}

/// For each (beta+, q): toll bounded by beta+ and subsidy bounded by
/// beta- = beta+/(1 + beta+) share their homogeneous PoA; under the
/// population {s_L, s_L/q} the subsidy's grid supremum minus the toll's must
/// be >= required_margin(cfg).
inline TheoremCheck theorem2_check(const ExperimentConfig& cfg) {
  cfg.validate();
  TheoremCheck out;
  Table& t = out.table;
  t.comments.push_back(lower_bound_note(cfg));
  t.comments.push_back("check: subsidy_sup - toll_sup >= " + fmt(required_margin(cfg)) +
                       " with beta_minus = beta_plus / (1 + beta_plus)");
  t.header = {"beta_plus", "beta_minus", "q", "s_L", "s_U", "toll_sup", "subsidy_sup", "margin", "required",
              "pass", "toll_argmax", "subsidy_argmax", "vi_gap", "restarts", "seed", "uncertified"};
  const GridSpec grid = cfg.grid();
  const double required = required_margin(cfg);
  for (double beta : cfg.beta_grid.values()) {
    const double beta_minus = beta / (1.0 + beta);
    for (double q : cfg.q_grid.values()) {
      const double sL = cfg.s_low;
      const double sU = q == 1.0 ? sL : sL / q;
      const std::vector<IncentiveMechanism> mechs = {IncentiveMechanism::opt_bounded_toll(beta),
                                                     IncentiveMechanism::opt_bounded_subsidy(beta_minus)};
      const auto rep = affine_worstcase_search(mechs, sL, sU, grid, cfg.search(false));
      const double margin = rep[1].poa - rep[0].poa;
      const bool pass = margin >= required;
      out.passed = out.passed && pass;
      const double gap = std::max(rep[0].vi_gap(), rep[1].vi_gap());
      t.rows.push_back({fmt(beta), fmt(beta_minus), fmt(q), fmt(sL), fmt(sU), fmt(rep[0].poa), fmt(rep[1].poa),
                        fmt(margin), fmt(required), fmt(pass), rep[0].instance_id, rep[1].instance_id, fmt(gap),
                        fmt(cfg.restarts), fmt(cfg.seed, 0), fmt(gap > kEquilibriumTolerance)});
    }
  }
  return out;
}

}  // namespace tollsub
