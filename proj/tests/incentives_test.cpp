#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "tollsub/incentives.hpp"

using namespace tollsub;

namespace {

void expect_poly_near(const Polynomial& a, const Polynomial& b, double tol = 1e-15) {
  const std::size_t n = std::max(a.coefficients().size(), b.coefficients().size());
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(a.coefficient(i), b.coefficient(i), tol) << "coefficient " << i;
}

LatencyFunction random_latency(std::mt19937_64& rng, int max_degree) {
  std::vector<double> c(oracle::uniform_int(rng, 1, max_degree + 1));
  for (auto& v : c) v = oracle::uniform(rng, 0, 2);
  return LatencyFunction(c);
}

}  // namespace

TEST(MarginalCost, Examples) {
  for (std::size_t p = 1; p <= 5; ++p)
    EXPECT_EQ(marginal_cost(LatencyFunction::monomial(p)), Polynomial::monomial(p, static_cast<double>(p)));
  EXPECT_TRUE(marginal_cost(LatencyFunction::constant(3)).is_zero());
  EXPECT_EQ(marginal_cost(LatencyFunction::affine(2, 5)), (Polynomial{0, 2}));
}

TEST(MarginalCost, MatchesFiniteDifferenceDefinition) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const LatencyFunction l = random_latency(rng, 4);
    const Polynomial tau = marginal_cost(l);
    for (double f : {0.2, 0.5, 0.8})
      EXPECT_NEAR(tau(f), f * oracle::derivative([&](double x) { return l(x); }, f), 1e-6);
  }
}

TEST(OptBoundedToll, Examples) {
  EXPECT_EQ(opt_bounded_toll_affine(LatencyFunction::affine(1, 0), 0.5), (Polynomial{0, 0.5}));
  EXPECT_EQ(opt_bounded_toll_affine(LatencyFunction::affine(1, 0), 2.0), (Polynomial{0, 1}));
  EXPECT_TRUE(opt_bounded_toll_affine(LatencyFunction::affine(3, 1), 0.0).is_zero());
  EXPECT_THROW(opt_bounded_toll_affine(LatencyFunction::monomial(2), 0.5), MechanismClassError);
  EXPECT_THROW(opt_bounded_toll_affine(LatencyFunction::affine(1, 0), -1.0), DomainError);
}

TEST(OptBoundedSubsidy, Examples) {
  EXPECT_EQ(opt_bounded_subsidy_affine(LatencyFunction::affine(1, 1), 0.25), Polynomial{-0.25});
  EXPECT_EQ(opt_bounded_subsidy_affine(LatencyFunction::affine(1, 1), 0.9), Polynomial{-0.5});
  for (double beta : {0.1, 0.5, 3.0}) EXPECT_TRUE(opt_bounded_subsidy_affine(LatencyFunction::affine(1, 0), beta).is_zero());
  EXPECT_THROW(opt_bounded_subsidy_affine(LatencyFunction::monomial(3), 0.5), MechanismClassError);
}

TEST(ScaledMarginalCost, Examples) {
  EXPECT_EQ(scaled_marginal_cost(LatencyFunction::affine(1, 0), 1, 1), (Polynomial{0, 1}));
  EXPECT_EQ(scaled_marginal_cost(LatencyFunction::affine(2, 3), 1, 4), (Polynomial{0, 1}));
  EXPECT_TRUE(scaled_marginal_cost(LatencyFunction::constant(2), 1, 4).is_zero());
  EXPECT_THROW(scaled_marginal_cost(LatencyFunction::affine(1, 0), 0, 4), DomainError);
  EXPECT_THROW(scaled_marginal_cost(LatencyFunction::affine(1, 0), 4, 1), DomainError);
}

TEST(NominallyEquivalentSubsidy, Examples) {
  EXPECT_EQ(nominally_equivalent_subsidy(LatencyFunction::affine(1, 1), 1, 1), Polynomial{-0.5});
  expect_poly_near(nominally_equivalent_subsidy(LatencyFunction::affine(1, 2), 1, 4), Polynomial{-2.0 / 3.0});
  EXPECT_TRUE(nominally_equivalent_subsidy(LatencyFunction::affine(1, 0), 1, 4).is_zero());
  EXPECT_THROW(nominally_equivalent_subsidy(LatencyFunction::affine(1, 1), -1, 4), DomainError);
}

TEST(AffineTransform, IdentityAtOne) {
  std::mt19937_64 rng(4);
  const auto m = affine_transform(IncentiveMechanism::marginal_cost(), 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const LatencyFunction l = random_latency(rng, 4);
    EXPECT_EQ(m.apply(l), marginal_cost(l));
  }
}

TEST(AffineTransform, PigouSubsidyFromMarginalCost) {
  for (std::size_t p = 1; p <= 4; ++p) {
    const auto m = affine_transform(IncentiveMechanism::marginal_cost(), 1.0 / (p + 1.0));
    expect_poly_near(m.apply(LatencyFunction::constant(1)), Polynomial{-double(p) / (p + 1.0)});
    // no toll remains on the congestible link
    EXPECT_NEAR(m.apply(LatencyFunction::monomial(p))(0.7), 0.0, 1e-15);
  }
}

TEST(AffineTransform, ScaledMarginalCostBecomesEquivalentSubsidy) {
  for (auto [sL, sU] : {std::pair{1.0, 4.0}, std::pair{0.5, 2.0}, std::pair{1.0, 1.0}}) {
    const double k = 1.0 / std::sqrt(sL * sU);
    const auto m = affine_transform(IncentiveMechanism::scaled_marginal_cost(sL, sU), 1.0 / (1.0 + k));
    for (auto [a, b] : {std::pair{1.0, 1.0}, std::pair{2.0, 0.5}, std::pair{0.0, 3.0}})
      expect_poly_near(m.apply(LatencyFunction::affine(a, b)), nominally_equivalent_subsidy(LatencyFunction::affine(a, b), sL, sU));
  }
}

TEST(AffineTransform, CompositionLawIsExact) {
  const auto base = IncentiveMechanism::opt_bounded_toll(0.3);
  const auto twice = affine_transform(affine_transform(base, 0.5), 0.25);
  const auto once = affine_transform(base, 0.125);
  EXPECT_EQ(twice.lambda(), 0.125);
  EXPECT_EQ(twice.to_string(), once.to_string());
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const LatencyFunction l = LatencyFunction::affine(oracle::uniform(rng, 0, 2), oracle::uniform(rng, 0, 2));
    EXPECT_EQ(twice.apply(l), once.apply(l));
  }
}

TEST(AffineTransform, RejectsNonPositiveLambda) {
  EXPECT_THROW(affine_transform(IncentiveMechanism::marginal_cost(), 0.0), DomainError);
  EXPECT_THROW(affine_transform(IncentiveMechanism::marginal_cost(), -1.0), DomainError);
}

TEST(SensitivityMap, Examples) {
  for (double lambda : {0.1, 0.5, 0.9, 1.0}) EXPECT_DOUBLE_EQ(sensitivity_map(1.0, lambda), 1.0);
  for (double s : {0.0, 0.5, 3.0}) EXPECT_DOUBLE_EQ(sensitivity_map(s, 1.0), s);
  EXPECT_DOUBLE_EQ(sensitivity_map(4.0, 0.5), 1.6);
  EXPECT_THROW(sensitivity_map(-1.0, 0.5), DomainError);
  EXPECT_THROW(sensitivity_map(1.0, 0.0), DomainError);
  EXPECT_THROW(sensitivity_map(1.0, 1.5), DomainError);
}

TEST(SensitivityMap, TransformsModelsMonotonically) {
  const auto m = transform_sensitivity(SensitivityModel::two_class(0.3, 1.0, 4.0), 0.5);
  EXPECT_DOUBLE_EQ(m.s_low(), 1.0);
  EXPECT_DOUBLE_EQ(m.s_high(), 1.6);
  EXPECT_DOUBLE_EQ(m.classes()[1].s, 1.6);
  EXPECT_DOUBLE_EQ(m.classes()[0].mass, 0.3);
}

TEST(ClassifyBound, Examples) {
  const LatencyFunction f = LatencyFunction::affine(1, 0);
  auto r = classify_bound(IncentiveMechanism::opt_bounded_toll(0.5), std::span(&f, 1));
  EXPECT_TRUE(r.is_toll);
  EXPECT_FALSE(r.is_subsidy);
  EXPECT_NEAR(r.tight_bound, 0.5, 1e-15);
  EXPECT_TRUE(r.tight);

  r = classify_bound(IncentiveMechanism::none(), std::span(&f, 1));
  EXPECT_TRUE(r.is_toll && r.is_subsidy);
  EXPECT_EQ(r.tight_bound, 0.0);
  EXPECT_EQ(r.sign_label(), "zero");

  for (std::size_t p = 1; p <= 4; ++p) {
    const LatencyFunction l = LatencyFunction::monomial(p);
    r = classify_bound(IncentiveMechanism::marginal_cost(), std::span(&l, 1));
    EXPECT_NEAR(r.tight_bound, static_cast<double>(p), 1e-12);
    EXPECT_TRUE(r.tight);
    const auto tau = marginal_cost(l);
    const double oracle_max =
        oracle::grid_max([&](double x) { return tau(x) / l(x); }, 1e-3, 1.0, 1000);
    EXPECT_NEAR(r.tight_bound, oracle_max, 1e-9);
  }
}

TEST(ClassifyBound, MixedSignAndCriticalPoints) {
  const LatencyFunction l = LatencyFunction::affine(1, 1);
  const auto mixed = affine_transform(IncentiveMechanism::marginal_cost(), 0.75);  // 0.5 f - 0.25
  const auto r = classify_bound(mixed, std::span(&l, 1));
  EXPECT_FALSE(r.is_toll);
  EXPECT_FALSE(r.is_subsidy);
  EXPECT_EQ(r.sign_label(), "mixed sign");

  const std::vector<LatencyFunction> family = {LatencyFunction::affine(1, 1), LatencyFunction::affine(2, 0.5),
                                               LatencyFunction::constant(2)};
  const auto sub = classify_bound(IncentiveMechanism::opt_bounded_subsidy(0.3), family);
  EXPECT_TRUE(sub.is_subsidy);
  EXPECT_NEAR(sub.tight_bound, 0.3, 1e-15);
  EXPECT_TRUE(sub.tight);
}

TEST(ClassifyBound, ZeroLatencyPointsAreExcluded) {
  const LatencyFunction zero = LatencyFunction::constant(0);
  const auto r = classify_bound(IncentiveMechanism::marginal_cost(), std::span(&zero, 1));
  EXPECT_FALSE(r.unbounded);
  EXPECT_EQ(r.tight_bound, 0.0);
}

TEST(Mechanisms, SignCorrectOnGrid) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const LatencyFunction l = LatencyFunction::affine(oracle::uniform(rng, 0, 2), oracle::uniform(rng, 0, 2));
    const double beta = oracle::uniform(rng, 0, 2);
    const double sL = oracle::uniform(rng, 0.2, 2), sU = sL * oracle::uniform(rng, 1, 5);
    const std::vector<std::pair<IncentiveMechanism, int>> cases = {
        {IncentiveMechanism::marginal_cost(), 1},
        {IncentiveMechanism::opt_bounded_toll(beta), 1},
        {IncentiveMechanism::scaled_marginal_cost(sL, sU), 1},
        {IncentiveMechanism::opt_bounded_subsidy(beta), -1},
        {IncentiveMechanism::nominally_equivalent_subsidy(sL, sU), -1},
    };
    for (const auto& [m, sign] : cases) {
      const Polynomial tau = m.apply(l);
      for (int k = 0; k <= 1000; ++k) EXPECT_GE(sign * tau(k / 1000.0), 0.0) << m.to_string();
    }
  }
}

TEST(Mechanisms, BoundedByBetaTimesLatency) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const LatencyFunction l = LatencyFunction::affine(oracle::uniform(rng, 0, 2), oracle::uniform(rng, 0, 2));
    const double beta = oracle::uniform(rng, 0, 2);
    const Polynomial toll = opt_bounded_toll_affine(l, beta);
    const Polynomial sub = opt_bounded_subsidy_affine(l, beta);
    for (int k = 0; k <= 1000; ++k) {
      const double f = k / 1000.0;
      EXPECT_LE(std::abs(toll(f)), beta * l(f) + 1e-15);
      EXPECT_LE(std::abs(sub(f)), beta * l(f) + 1e-15);
    }
  }
}

TEST(Mechanisms, TransformKeepsEffectiveCostWithinLatencyBand) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 100; ++trial) {
    // bounded tolls with beta in (0,1): lambda = 1 - beta
    const LatencyFunction l = LatencyFunction::affine(oracle::uniform(rng, 0, 2), oracle::uniform(rng, 0, 2));
    const double beta = oracle::uniform(rng, 0.01, 0.99);
    const auto hat = affine_transform(IncentiveMechanism::opt_bounded_toll(beta), 1.0 - beta);
    // marginal cost on degree-p monomial sums is bounded by p >= 1: lambda = 1/(1+p)
    const int p = oracle::uniform_int(rng, 1, 4);
    std::vector<double> c(p + 1, 0.0);
    c[p] = oracle::uniform(rng, 0.1, 2);
    c[0] = oracle::uniform(rng, 0, 2);
    const LatencyFunction lp(c);
    const auto hat_mc = affine_transform(IncentiveMechanism::marginal_cost(), 1.0 / (1.0 + p));
    for (int k = 0; k <= 1000; ++k) {
      const double f = k / 1000.0;
      const double j = l(f) + hat.apply(l)(f);
      EXPECT_GE(j, (1.0 - beta) * l(f) - 1e-12);
      EXPECT_LE(j, l(f) + 1e-12);
      const double jp = lp(f) + hat_mc.apply(lp)(f);
      EXPECT_GE(jp, lp(f) / (1.0 + p) - 1e-12);
      EXPECT_LE(jp, lp(f) + 1e-12);
    }
  }
}

TEST(TightPolynomialMechanisms, PigouValues) {
  for (std::size_t p = 1; p <= 4; ++p) {
    const LatencyFunction mono = LatencyFunction::monomial(p);
    const LatencyFunction one = LatencyFunction::constant(1);
    // toll: min(beta, p) f^p on the monomial
    expect_poly_near(tight_poly_toll(mono, 0.5, p), Polynomial::monomial(p, 0.5));
    expect_poly_near(tight_poly_toll(mono, 10.0, p), Polynomial::monomial(p, static_cast<double>(p)));
    EXPECT_TRUE(tight_poly_toll(one, 0.5, p).is_zero());
    // subsidy: -min(beta, p/(p+1)) on the constant link, nothing on the monomial
    expect_poly_near(tight_poly_subsidy(one, 0.2, p), Polynomial{-0.2});
    expect_poly_near(tight_poly_subsidy(one, 5.0, p), Polynomial{-double(p) / (p + 1.0)});
    EXPECT_NEAR(tight_poly_subsidy(mono, 0.3, p)(0.9), 0.0, 1e-15);
    const auto r = classify_bound(IncentiveMechanism::tight_poly_subsidy(0.2, p), std::span(&one, 1));
    EXPECT_NEAR(r.tight_bound, 0.2, 1e-15);
    EXPECT_TRUE(r.is_subsidy);
  }
  EXPECT_THROW(tight_poly_toll(LatencyFunction::monomial(3), 0.5, 2), MechanismClassError);
  EXPECT_THROW(IncentiveMechanism::tight_poly_toll(0.5, 0), DomainError);
}

TEST(MechanismStrings, RoundTrip) {
  const std::vector<std::string> texts = {
      "none", "mc", "toll:\xCE\xB2=0.5", "subsidy:\xCE\xB2=0.25", "smc:sL=1,sU=4", "nes:sL=0.5,sU=2",
      "ptoll:\xCE\xB2=1.5,p=3", "psub:\xCE\xB2=0.2,p=2", "xform(mc,\xCE\xBB=0.5)",
      "xform(smc:sL=1,sU=4,\xCE\xBB=0.75)"};
  for (const auto& t : texts) EXPECT_EQ(parse_mechanism(t).to_string(), t);
}

TEST(MechanismStrings, AsciiAliasesAndWhitespace) {
  EXPECT_EQ(parse_mechanism("toll:beta=0.5").to_string(), "toll:\xCE\xB2=0.5");
  EXPECT_EQ(parse_mechanism(" xform( xform(mc, lambda=0.5), lambda = 0.5 ) ").to_string(),
            "xform(mc,\xCE\xBB=0.25)");
  EXPECT_EQ(parse_mechanism("smc:sU=4,sL=1").to_string(), "smc:sL=1,sU=4");
  EXPECT_EQ(parse_mechanism("subsidy:beta=2.5e-1").beta(), 0.25);
}

TEST(MechanismStrings, Errors) {
  for (const char* bad : {"", "foo", "toll", "toll:beta=", "toll:beta=x", "toll:gamma=1", "xform(mc,lambda=0)",
                          "xform(mc,beta=0.5)", "mc extra", "smc:sL=1", "smc:sL=2,sU=1", "ptoll:beta=1,p=1.5",
                          "toll:beta=-1"})
    EXPECT_THROW(parse_mechanism(bad), ParseError) << bad;
}

TEST(ApplyMechanism, RealizesEveryEdge) {
  const GameInstance g(parallel_network({LatencyFunction::affine(1, 0), LatencyFunction::affine(2, 1)}));
  const GameInstance t = apply_mechanism(IncentiveMechanism::marginal_cost(), g);
  EXPECT_EQ(t.incentive(0), (Polynomial{0, 1}));
  EXPECT_EQ(t.incentive(1), (Polynomial{0, 2}));
  EXPECT_THROW(apply_mechanism(IncentiveMechanism::opt_bounded_toll(0.5),
                               GameInstance(parallel_network({LatencyFunction::monomial(2)}))),
               MechanismClassError);
}
