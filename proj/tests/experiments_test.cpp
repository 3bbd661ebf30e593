#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"
#include "tollsub/experiments.hpp"

using namespace tollsub;

namespace {

double pigou_latency_at(int p, double x) { return std::pow(x, p + 1) + 1.0 - x; }

std::size_t column(const Table& t, const std::string& name) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  EXPECT_NE(it, t.header.end()) << name;
  return static_cast<std::size_t>(it - t.header.begin());
}

double cell(const Table& t, std::size_t row, const std::string& name) {
  return std::stod(t.rows.at(row).at(column(t, name)));
}

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.grid_points = 5;
  cfg.mass_splits = 3;
  return cfg;
}

}  // namespace

TEST(Range, ParseAndValues) {
  const Range r = parse_range("0:1:0.25");
  EXPECT_EQ(r.values(), (std::vector<double>{0, 0.25, 0.5, 0.75, 1}));
  EXPECT_EQ(parse_range("0.1:1:0.15").values().size(), 7u);
  EXPECT_EQ(parse_range("0:0.3:0.1").values(), (std::vector<double>{0, 0.1, 0.2, 0.3}));
  EXPECT_EQ(parse_range("2:2:1").values(), std::vector<double>{2});
  EXPECT_EQ(parse_range("+1e-1:2e-1:1e-1").values(), (std::vector<double>{0.1, 0.2}));
}

TEST(Range, Errors) {
  for (const char* bad : {"", "1", "1:2", "a:1:0.1", "0:1:0.1:5", "0::0.1"}) EXPECT_THROW(parse_range(bad), ParseError) << bad;
  EXPECT_THROW(parse_range("0:1:0").values(), DomainError);
  EXPECT_THROW(parse_range("1:0:0.1").values(), DomainError);
}

TEST(ExperimentConfig, Validation) {
  ExperimentConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.q_grid = parse_range("0:1:0.5");
  EXPECT_THROW(cfg.validate(), DomainError);
  cfg = {};
  cfg.p_max = kMaxPigouDegree + 1;
  EXPECT_THROW(cfg.validate(), DomainError);
  cfg = {};
  cfg.s_high = 0.5;
  EXPECT_THROW(cfg.validate(), DomainError);
  cfg = {};
  cfg.theorem = 3;
  EXPECT_THROW(cfg.validate(), DomainError);
}

TEST(ExperimentConfig, GridMatchesStandard) {
  const GridSpec a = ExperimentConfig{}.grid(), b = GridSpec::standard();
  EXPECT_EQ(a.coefficients, b.coefficients);
  EXPECT_EQ(a.mass_splits, b.mass_splits);
}

TEST(Csv, QuotingAndComments) {
  EXPECT_EQ(csv_field("plain"), "plain");
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
  Table t{{"note"}, {"x", "y"}, {{"1", "a,b"}}};
  std::ostringstream os;
  write_csv(os, t);
  EXPECT_EQ(os.str(), "# note\nx,y\n1,\"a,b\"\n");
}

TEST(Csv, NumbersRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 4.0 / 3.0, 1e-300, 12345.678}) EXPECT_EQ(std::stod(fmt(v)), v);
  EXPECT_EQ(fmt(0.5), "0.5");
  EXPECT_EQ(fmt(true), "1");
}

TEST(Fig1, PigouClosedForms) {
  ExperimentConfig cfg;
  cfg.beta_grid = parse_range("0:2:0.5");
  const Table t = fig1_sweep(cfg);
  ASSERT_EQ(t.rows.size(), 5u);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double beta = cell(t, r, "beta");
    double toll_sup = 0.0, sub_sup = 0.0;
    for (int p = 1; p <= cfg.p_max; ++p) {
      const double opt = oracle::pigou_opt_latency(p);
      const double k = std::min(beta, double(p));
      const double toll = pigou_latency_at(p, std::pow(1.0 + k, -1.0 / p)) / opt;
      const double sigma = std::min(beta, p / (p + 1.0));
      const double sub = pigou_latency_at(p, std::pow(1.0 - sigma, 1.0 / p)) / opt;
      EXPECT_NEAR(cell(t, r, "toll_p" + std::to_string(p)), toll, 1e-7) << beta << " p=" << p;
      EXPECT_NEAR(cell(t, r, "subsidy_p" + std::to_string(p)), sub, 1e-7) << beta << " p=" << p;
      toll_sup = std::max(toll_sup, toll);
      sub_sup = std::max(sub_sup, sub);
    }
    EXPECT_NEAR(cell(t, r, "poa_toll_tight"), toll_sup, 1e-7);
    EXPECT_NEAR(cell(t, r, "poa_subsidy_tight"), sub_sup, 1e-7);
    EXPECT_EQ(t.rows[r][column(t, "uncertified")], "0");
  }
  EXPECT_NEAR(cell(t, 0, "toll_p1"), 4.0 / 3.0, 1e-9);
}

TEST(Fig1, NonIncreasingInBeta) {
  ExperimentConfig cfg;
  cfg.beta_grid = parse_range("0:1.5:0.1");
  const Table t = fig1_sweep(cfg);
  for (std::size_t r = 1; r < t.rows.size(); ++r) {
    EXPECT_LE(cell(t, r, "poa_toll_tight"), cell(t, r - 1, "poa_toll_tight") + 10 * kEquilibriumTolerance);
    EXPECT_LE(cell(t, r, "poa_subsidy_tight"), cell(t, r - 1, "poa_subsidy_tight") + 10 * kEquilibriumTolerance);
  }
}

TEST(Fig2a, FormulaColumns) {
  ExperimentConfig cfg;
  cfg.beta_grid = parse_range("0:1.5:0.25");
  const Table t = fig2a_sweep(cfg, false);
  EXPECT_EQ(t.header.size(), 3u);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double beta = cell(t, r, "beta");
    EXPECT_EQ(cell(t, r, "toll_formula"), affine_toll_poa_formula(beta));
    EXPECT_EQ(cell(t, r, "subsidy_formula"), beta >= 0.5 ? 1.0 : affine_subsidy_poa_formula(beta));
  }
  EXPECT_NE(t.comments.front().find("lower bounds"), std::string::npos);
}

TEST(Fig2a, EmpiricalBelowFormula) {
  ExperimentConfig cfg = small_config();
  cfg.beta_grid = parse_range("0:1:0.5");
  const Table t = fig2a_sweep(cfg);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    EXPECT_LE(cell(t, r, "empirical_toll"), cell(t, r, "toll_formula") + 1e-6);
    EXPECT_LE(cell(t, r, "empirical_subsidy"), cell(t, r, "subsidy_formula") + 1e-6);
    EXPECT_GE(cell(t, r, "empirical_subsidy"), 1.0 - 1e-7);
  }
}

TEST(Fig2b, FormulaOrderingAndDeterminism) {
  ExperimentConfig cfg = small_config();
  cfg.q_grid = parse_range("0.25:1:0.25");
  cfg.restarts = 2;
  cfg.seed = 9;
  const Table a = fig2b_sweep(cfg), b = fig2b_sweep(cfg);
  EXPECT_EQ(a.rows, b.rows);
  for (std::size_t r = 0; r < a.rows.size(); ++r) {
    EXPECT_DOUBLE_EQ(cell(a, r, "s_U"), 1.0 / cell(a, r, "q"));
    EXPECT_GE(cell(a, r, "nes_formula"), cell(a, r, "smc_formula"));
  }
  EXPECT_EQ(a.rows.back()[column(a, "smc_formula")], "1");
}

TEST(Theorems, OneHoldsOnCoarseGrid) {
  ExperimentConfig cfg = small_config();
  cfg.beta_grid = parse_range("0.2:0.8:0.3");
  const TheoremCheck c = theorem1_check(cfg);
  EXPECT_TRUE(c.passed);
  EXPECT_EQ(c.table.rows.size(), 3u);
  for (std::size_t r = 0; r < c.table.rows.size(); ++r) EXPECT_GE(cell(c.table, r, "margin"), -kTheoremSlack);
}

TEST(Theorems, TwoHoldsOnCoarseGrid) {
  ExperimentConfig cfg = small_config();
  cfg.beta_grid = parse_range("0.5:0.5:1");
  cfg.q_grid = parse_range("0.25:1:0.75");
  const TheoremCheck c = theorem2_check(cfg);
  EXPECT_TRUE(c.passed);
  EXPECT_EQ(c.table.rows.size(), 2u);
  EXPECT_DOUBLE_EQ(cell(c.table, 0, "beta_minus"), 1.0 / 3.0);
}

TEST(Theorems, ImpossibleMarginFails) {
  ExperimentConfig cfg = small_config();
  cfg.beta_grid = parse_range("0.5:0.5:1");
  cfg.min_margin = 1.0;
  EXPECT_FALSE(theorem1_check(cfg).passed);
}
