#pragma once

#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tollsub/tollsub.hpp"

namespace tollsub::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kParse = 2,
  kNonConvergence = 3,
  kViolation = 4,
};

struct Options {
  std::vector<std::string> instances;
  std::string mech = "none";
  std::string beta_grid;
  std::string q_grid;
  double s_low = 1.0;
  double s_high = 0.0;
  int p_max = 4;
  std::size_t restarts = 0;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::size_t grid_points = 21;
  std::size_t mass_splits = 11;
  bool all_equilibria = false;
  bool formulas_only = false;
  int theorem = 1;
  double min_margin = 0.0;
  std::string out;
};

inline ExperimentConfig make_config(const Options& o, ExperimentKind kind) {
  ExperimentConfig cfg;
  cfg.kind = kind;
  if (!o.beta_grid.empty()) cfg.beta_grid = parse_range(o.beta_grid);
  if (kind == ExperimentKind::theorem_check && o.theorem == 2 && o.beta_grid.empty())
    cfg.beta_grid = Range{0.5, 0.5, 1.0};
  if (kind == ExperimentKind::theorem_check && o.theorem == 1 && o.beta_grid.empty())
    cfg.beta_grid = Range{0.2, 0.8, 0.2};
  cfg.s_low = o.s_low;
  if (!o.q_grid.empty()) {
    cfg.q_grid = parse_range(o.q_grid);
  } else if (o.s_high > 0.0) {
    const double q = o.s_low / o.s_high;
    cfg.q_grid = Range{q, q, 1.0};
  }
  cfg.s_high = o.s_high > 0.0 ? o.s_high : cfg.s_low / cfg.q_grid.start;
  cfg.p_max = o.p_max;
  cfg.restarts = o.restarts;
  cfg.seed = o.seed;
  cfg.threads = o.threads;
  cfg.grid_points = o.grid_points;
  cfg.mass_splits = o.mass_splits;
  cfg.fully_utilized_only = !o.all_equilibria;
  cfg.theorem = o.theorem;
  cfg.min_margin = o.min_margin;
  cfg.validate();
  return cfg;
}

inline void emit(const Table& t, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    write_csv(out, t);
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParseError(path, "cannot open output file");
  write_csv(f, t);
  if (!f) throw ParseError(path, "write failed");
}

inline void print_flow(std::ostream& out, const RoutingProblem& problem, const EquilibriumResult& r) {
  const bool classes = r.class_flows.size() > 1;
  out << "  path";
  if (classes)
    for (const auto& c : r.classes) out << "  class(s=" << fmt(c.s) << ",mass=" << fmt(c.mass) << ")";
  out << "  total\n";
  for (std::size_t p = 0; p < problem.num_paths(); ++p) {
    out << "  " << problem.path_label(p);
    if (classes)
      for (const auto& f : r.class_flows) out << "  " << fmt(f.path_flow(p));
    out << "  " << fmt(r.flow.path_flow(p)) << "\n";
  }
}

inline int cmd_solve(const Options& o, std::ostream& out) {
  if (o.instances.size() != 1) throw CLI::ValidationError("--instance", "solve takes exactly one instance file");
  const GameInstance base = load_instance(o.instances.front());
  const IncentiveMechanism mech = parse_mechanism(o.mech);
  const GameInstance game = apply_mechanism(mech, base);
  WorstCaseOptions wc;
  wc.restarts = o.restarts;
  wc.seed = o.seed;
  const EquilibriumResult opt = optimal_flow(game.problem());
  const EquilibriumResult nash = worst_case_nash(game, wc);
  const RoutingProblem& problem = game.problem();
  const SensitivityModel& s = game.sensitivity();

  out << "instance " << o.instances.front() << "\n";
  out << "mechanism " << mech.to_string() << "\n";
  out << "population s_L " << fmt(s.s_low()) << " s_U " << fmt(s.s_high()) << " classes "
      << s.populated_classes().size() << "\n";
  for (const auto& w : problem.warnings()) out << "warning " << w << "\n";
  out << "optimal latency " << fmt(opt.total_latency) << " vi_gap " << fmt(opt.vi_gap) << "\n";
  print_flow(out, problem, opt);
  out << "nash latency " << fmt(nash.total_latency) << " vi_gap " << fmt(nash.vi_gap) << " restarts "
      << o.restarts << " seed " << o.seed << (nash.fully_utilized ? " fully_utilized" : "")
      << (nash.negative_cost ? " negative_cost" : "") << "\n";
  print_flow(out, problem, nash);
  if (opt.total_latency > 0.0) {
    std::ostringstream v;
    v << std::fixed << std::setprecision(6) << nash.total_latency / opt.total_latency;
    out << "poa " << v.str() << " (" << fmt(nash.total_latency / opt.total_latency) << ")\n";
  } else {
    out << "poa undefined (optimal latency 0)\n";
  }
  if (!o.out.empty()) {
    Table t;
    t.header = report_header();
    PoAReport r = poa_instance(game, wc, o.instances.front());
    r.mechanism = mech.to_string();
    t.rows.push_back(report_row(r));
    emit(t, o.out, out);
  }
  return kOk;
}

inline int cmd_poa(const Options& o, std::ostream& out) {
  if (o.instances.empty()) throw CLI::ValidationError("--instance", "poa needs at least one instance file");
  const IncentiveMechanism mech = parse_mechanism(o.mech);
  std::vector<GameInstance> family;
  for (const auto& path : o.instances) family.push_back(load_instance(path));
  WorstCaseOptions wc;
  wc.restarts = o.restarts;
  wc.seed = o.seed;
  Table t;
  t.comments.push_back("PoA values are lower bounds: worst Nash flow over " + std::to_string(o.restarts) +
                       " random restarts plus class-to-edge starts");
  t.header = report_header();
  t.header.insert(t.header.end(), {"evaluated", "excluded"});
  for (std::size_t k = 0; k < family.size(); ++k) {
    PoAReport r = poa_instance(family[k], mech, wc, o.instances[k]);
    auto row = report_row(r);
    row.insert(row.end(), {"1", "0"});
    t.rows.push_back(std::move(row));
  }
  if (family.size() > 1) {
    PoAReport sup = poa_family(family, mech, wc, o.instances);
    sup.instance_id = "sup:" + sup.instance_id;
    auto row = report_row(sup);
    row.insert(row.end(), {fmt(sup.evaluated), fmt(sup.excluded)});
    t.rows.push_back(std::move(row));
  }
  emit(t, o.out, out);
  return kOk;
}

/// Runs the command line; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Nash and optimal flows, incentive mechanisms and price-of-anarchy sweeps for non-atomic congestion games",
               "tollsub"};
  app.config_formatter(std::make_shared<CLI::ConfigINI>());
  app.set_config("--config", "", "INI file of key = value settings; command-line flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  Options o;

  app.add_option("--instance", o.instances, "instance file (JSON)");
  app.add_option("--mech", o.mech, "mechanism: none, mc, toll:beta=v, subsidy:beta=v, smc:sL=v,sU=v, "
                                   "nes:sL=v,sU=v, ptoll:beta=v,p=d, psub:beta=v,p=d, xform(<mech>,lambda=v)")
      ->capture_default_str();
  app.add_option("--beta-grid", o.beta_grid, "beta grid a:b:step");
  app.add_option("--q-grid", o.q_grid, "heterogeneity grid a:b:step in (0,1]");
  app.add_option("--sL", o.s_low, "lowest sensitivity")->capture_default_str();
  app.add_option("--sU", o.s_high, "highest sensitivity (default sL / q)");
  app.add_option("--p-max", o.p_max, "largest Pigou degree for fig1")->capture_default_str();
  app.add_option("--restarts", o.restarts, "random restarts of the equilibrium search")->capture_default_str();
  app.add_option("--seed", o.seed, "seed of the random restarts")->capture_default_str();
  app.add_option("--threads", o.threads, "worker threads for grid searches")->capture_default_str();
  app.add_option("--grid-points", o.grid_points, "points per coefficient of the two-link grid on [0,2]")
      ->capture_default_str();
  app.add_option("--mass-splits", o.mass_splits, "population splits on [0,1]")->capture_default_str();
  app.add_flag("--all-equilibria", o.all_equilibria, "fig2b: keep equilibria leaving a link unused");
  app.add_flag("--formulas-only", o.formulas_only, "fig2a/fig2b: skip the empirical grid search");
  app.add_option("--min-margin", o.min_margin, "check: required margin")->capture_default_str();
  app.add_option("--out", o.out, "CSV output path (default: standard output)");

  auto* solve = app.add_subcommand("solve", "optimal and worst Nash flow of one instance")->fallthrough();
  auto* poa = app.add_subcommand("poa", "PoA report for one or more instances")->fallthrough();
  auto* fig1 = app.add_subcommand("fig1", "Pigou family under tightly bounded tolls and subsidies")->fallthrough();
  auto* fig2a = app.add_subcommand("fig2a", "optimal bounded affine toll and subsidy")->fallthrough();
  auto* fig2b = app.add_subcommand("fig2b", "scaled marginal-cost toll and equivalent subsidy vs q")->fallthrough();
  auto* check = app.add_subcommand("check", "empirical theorem check")->fallthrough();
  check->add_option("--theorem", o.theorem, "1 or 2")->required()->check(CLI::IsMember({1, 2}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*solve) return cmd_solve(o, out);
    if (*poa) return cmd_poa(o, out);
    if (*fig1) {
      emit(fig1_sweep(make_config(o, ExperimentKind::fig1)), o.out, out);
      return kOk;
    }
    if (*fig2a) {
      emit(fig2a_sweep(make_config(o, ExperimentKind::fig2a), !o.formulas_only), o.out, out);
      return kOk;
    }
    if (*fig2b) {
      emit(fig2b_sweep(make_config(o, ExperimentKind::fig2b), !o.formulas_only), o.out, out);
      return kOk;
    }
    if (*check) {
      const ExperimentConfig cfg = make_config(o, ExperimentKind::theorem_check);
      const TheoremCheck r = o.theorem == 1 ? theorem1_check(cfg) : theorem2_check(cfg);
      emit(r.table, o.out, out);
      err << "theorem " << o.theorem << (r.passed ? " holds on every grid point" : " VIOLATED on at least one grid point")
          << (r.passed ? "" : " (see margin column)") << "\n";
      return r.passed ? kOk : kViolation;
    }
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kParse;
  } catch (const ConvergenceError& e) {
    err << "solver did not converge: " << e.what() << " (best gap " << e.best_gap() << ")\n";
    return kNonConvergence;
  } catch (const InvariantError& e) {
    err << "invariant violated: " << e.what() << "\n";
    return kViolation;
  } catch (const NonMonotoneCostError& e) {
    err << "invariant violated: " << e.what() << "\n";
    return kViolation;
  } catch (const DegenerateInstanceError& e) {
    err << "degenerate instance: " << e.what() << "\n";
    return kViolation;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

}  // namespace tollsub::cli
