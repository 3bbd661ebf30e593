#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tollsub/errors.hpp"
#include "tollsub/netmodel.hpp"
#include "tollsub/polynomial.hpp"

namespace tollsub {

// ---------------------------------------------------------------------------
// Incentive functions for a single latency.

/// tau(f) = f l'(f); for l = sum a_i f^i this is sum i a_i f^i.
inline Polynomial marginal_cost(const LatencyFunction& latency) {
  return latency.polynomial().derivative().times_x();
}

namespace detail {

inline void require_affine(const LatencyFunction& latency, const char* mechanism) {
  if (!latency.is_affine())
    throw MechanismClassError(std::string(mechanism) + " is defined for affine latencies only");
}

inline void require_beta(double beta) {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw DomainError("bound beta must be a finite value >= 0");
}

inline void require_sensitivity_bounds(double s_low, double s_high) {
  if (!(s_low > 0.0) || !(s_high >= s_low) || !std::isfinite(s_high))
    throw DomainError("sensitivity bounds must satisfy 0 < s_L <= s_U");
}

/// Coefficient-wise test of 0 <= sign*tau <= beta*l, which implies the bound on [0,1].
inline void check_coefficient_bound(const Polynomial& tau, const LatencyFunction& latency,
                                    double beta, double sign) {
  const std::size_t n = std::max(tau.coefficients().size(), latency.coefficients().size());
  for (std::size_t i = 0; i < n; ++i) {
    const double t = sign * tau.coefficient(i);
    const double cap = beta * latency.polynomial().coefficient(i);
    if (t < 0.0 || t > cap * (1.0 + 1e-15))
      throw InvariantError("incentive violates its bound beta * l");
  }
}

}  // namespace detail

/// Best toll with |tau| <= beta l over affine latencies a f + b.
inline Polynomial opt_bounded_toll_affine(const LatencyFunction& latency, double beta) {
  detail::require_affine(latency, "opt_bounded_toll");
  detail::require_beta(beta);
  const double k = beta < 1.0 ? beta : 1.0;
  Polynomial tau = Polynomial::monomial(1, k * latency.slope());
  detail::check_coefficient_bound(tau, latency, beta, 1.0);
  return tau;
}

/// Best subsidy with |tau| <= beta l over affine latencies a f + b.
inline Polynomial opt_bounded_subsidy_affine(const LatencyFunction& latency, double beta) {
  detail::require_affine(latency, "opt_bounded_subsidy");
  detail::require_beta(beta);
  const double k = beta < 0.5 ? beta : 0.5;
  Polynomial tau = Polynomial::constant(-k * latency.intercept());
  detail::check_coefficient_bound(tau, latency, beta, -1.0);
  return tau;
}

/// a f / sqrt(s_L s_U)
inline Polynomial scaled_marginal_cost(const LatencyFunction& latency, double s_low, double s_high) {
  detail::require_affine(latency, "scaled_marginal_cost");
  detail::require_sensitivity_bounds(s_low, s_high);
  return Polynomial::monomial(1, latency.slope() / std::sqrt(s_low * s_high));
}

/// -b / (1 + sqrt(s_L s_U)), the subsidy nominally equivalent to scaled_marginal_cost.
inline Polynomial nominally_equivalent_subsidy(const LatencyFunction& latency, double s_low,
                                               double s_high) {
  detail::require_affine(latency, "nominally_equivalent_subsidy");
  detail::require_sensitivity_bounds(s_low, s_high);
  return Polynomial::constant(-latency.intercept() / (1.0 + std::sqrt(s_low * s_high)));
}

/// Marginal-cost toll clipped to the bound beta for degree-p polynomial
/// families: min(1, beta/p) f l'(f). Tightly bounded on monomials of degree p.
inline Polynomial tight_poly_toll(const LatencyFunction& latency, double beta, std::size_t p) {
  detail::require_beta(beta);
  if (p < 1) throw DomainError("polynomial family degree must be >= 1");
  if (latency.polynomial().degree() > p)
    throw MechanismClassError("latency degree exceeds the family degree p");
  const double scale = std::min(1.0, beta / static_cast<double>(p));
  return scale * marginal_cost(latency);
}

/// Subsidy member of the optimal family, lambda = 1/(p+1), clipped to the
/// bound beta: min(1, beta (p+1)/p) * [(1/(p+1)) f l' + (1/(p+1) - 1) l].
/// On the polynomial Pigou network this subsidises only the constant link.
inline Polynomial tight_poly_subsidy(const LatencyFunction& latency, double beta, std::size_t p) {
  detail::require_beta(beta);
  if (p < 1) throw DomainError("polynomial family degree must be >= 1");
  if (latency.polynomial().degree() > p)
    throw MechanismClassError("latency degree exceeds the family degree p");
  const double pd = static_cast<double>(p);
  const double scale = std::min(1.0, beta * (pd + 1.0) / pd);
  // coefficient i of the optimal subsidy is a_i ((i+1)/(p+1) - 1) <= 0
  std::vector<double> c(latency.polynomial().coefficients().begin(),
                        latency.polynomial().coefficients().end());
  for (std::size_t i = 0; i < c.size(); ++i)
    c[i] *= scale * ((static_cast<double>(i) + 1.0) / (pd + 1.0) - 1.0);
  return Polynomial(std::move(c));
}

// ---------------------------------------------------------------------------
// Mechanisms

enum class MechanismKind {
  none,
  marginal_cost,
  opt_bounded_toll,
  opt_bounded_subsidy,
  scaled_marginal_cost,
  nominally_equivalent_subsidy,
  tight_poly_toll,
  tight_poly_subsidy,
  affine_transform,
};

/// Declared sign of the incentives a mechanism produces on its latency class.
enum class SignClass { zero, toll, subsidy, mixed };

namespace detail {
inline std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}
}  // namespace detail

/// Map from a latency function to an incentive function, applied uniformly to
/// every edge of a game. Immutable value type; nested affine transforms are
/// flattened so composition stays exact.
class IncentiveMechanism {
 public:
  IncentiveMechanism() = default;

  static IncentiveMechanism none() { return {}; }
  static IncentiveMechanism marginal_cost() { return IncentiveMechanism(MechanismKind::marginal_cost); }
  static IncentiveMechanism opt_bounded_toll(double beta) {
    detail::require_beta(beta);
    IncentiveMechanism m(MechanismKind::opt_bounded_toll);
    m.beta_ = beta;
    return m;
  }
  static IncentiveMechanism opt_bounded_subsidy(double beta) {
    detail::require_beta(beta);
    IncentiveMechanism m(MechanismKind::opt_bounded_subsidy);
    m.beta_ = beta;
    return m;
  }
  static IncentiveMechanism scaled_marginal_cost(double s_low, double s_high) {
    detail::require_sensitivity_bounds(s_low, s_high);
    IncentiveMechanism m(MechanismKind::scaled_marginal_cost);
    m.s_low_ = s_low;
    m.s_high_ = s_high;
    return m;
  }
  static IncentiveMechanism nominally_equivalent_subsidy(double s_low, double s_high) {
    detail::require_sensitivity_bounds(s_low, s_high);
    IncentiveMechanism m(MechanismKind::nominally_equivalent_subsidy);
    m.s_low_ = s_low;
    m.s_high_ = s_high;
    return m;
  }
  static IncentiveMechanism tight_poly_toll(double beta, std::size_t p) {
    detail::require_beta(beta);
    if (p < 1) throw DomainError("polynomial family degree must be >= 1");
    IncentiveMechanism m(MechanismKind::tight_poly_toll);
    m.beta_ = beta;
    m.degree_ = p;
    return m;
  }
  static IncentiveMechanism tight_poly_subsidy(double beta, std::size_t p) {
    detail::require_beta(beta);
    if (p < 1) throw DomainError("polynomial family degree must be >= 1");
    IncentiveMechanism m(MechanismKind::tight_poly_subsidy);
    m.beta_ = beta;
    m.degree_ = p;
    return m;
  }

  /// l -> lambda T(l) + (lambda - 1) l.
  static IncentiveMechanism affine_transform(const IncentiveMechanism& base, double lambda) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DomainError("lambda must be > 0");
    IncentiveMechanism m(MechanismKind::affine_transform);
    if (base.kind_ == MechanismKind::affine_transform) {
      m.base_ = base.base_;
      m.lambda_ = base.lambda_ * lambda;
    } else {
      m.base_ = std::make_shared<const IncentiveMechanism>(base);
      m.lambda_ = lambda;
    }
    return m;
  }

  MechanismKind kind() const noexcept { return kind_; }
  double beta() const noexcept { return beta_; }
  double s_low() const noexcept { return s_low_; }
  double s_high() const noexcept { return s_high_; }
  double lambda() const noexcept { return lambda_; }
  std::size_t family_degree() const noexcept { return degree_; }
  const IncentiveMechanism* base() const noexcept { return base_.get(); }

  Polynomial apply(const LatencyFunction& latency) const {
    switch (kind_) {
      case MechanismKind::none: return {};
      case MechanismKind::marginal_cost: return tollsub::marginal_cost(latency);
      case MechanismKind::opt_bounded_toll: return opt_bounded_toll_affine(latency, beta_);
      case MechanismKind::opt_bounded_subsidy: return opt_bounded_subsidy_affine(latency, beta_);
      case MechanismKind::scaled_marginal_cost:
        return tollsub::scaled_marginal_cost(latency, s_low_, s_high_);
      case MechanismKind::nominally_equivalent_subsidy:
        return tollsub::nominally_equivalent_subsidy(latency, s_low_, s_high_);
      case MechanismKind::tight_poly_toll: return tollsub::tight_poly_toll(latency, beta_, degree_);
      case MechanismKind::tight_poly_subsidy:
        return tollsub::tight_poly_subsidy(latency, beta_, degree_);
      case MechanismKind::affine_transform:
        return lambda_ * base_->apply(latency) + (lambda_ - 1.0) * latency.polynomial();
    }
    return {};
  }

  Polynomial operator()(const LatencyFunction& latency) const { return apply(latency); }

  SignClass declared_sign() const noexcept {
    switch (kind_) {
      case MechanismKind::none: return SignClass::zero;
      case MechanismKind::marginal_cost:
      case MechanismKind::opt_bounded_toll:
      case MechanismKind::scaled_marginal_cost:
      case MechanismKind::tight_poly_toll: return SignClass::toll;
      case MechanismKind::opt_bounded_subsidy:
      case MechanismKind::nominally_equivalent_subsidy:
      case MechanismKind::tight_poly_subsidy: return SignClass::subsidy;
      case MechanismKind::affine_transform: return SignClass::mixed;
    }
    return SignClass::mixed;
  }

  /// Canonical mechanism string, accepted by parse_mechanism.
  std::string to_string() const {
    using detail::format_number;
    switch (kind_) {
      case MechanismKind::none: return "none";
      case MechanismKind::marginal_cost: return "mc";
      case MechanismKind::opt_bounded_toll: return "toll:\xCE\xB2=" + format_number(beta_);
      case MechanismKind::opt_bounded_subsidy: return "subsidy:\xCE\xB2=" + format_number(beta_);
      case MechanismKind::scaled_marginal_cost:
        return "smc:sL=" + format_number(s_low_) + ",sU=" + format_number(s_high_);
      case MechanismKind::nominally_equivalent_subsidy:
        return "nes:sL=" + format_number(s_low_) + ",sU=" + format_number(s_high_);
      case MechanismKind::tight_poly_toll:
        return "ptoll:\xCE\xB2=" + format_number(beta_) + ",p=" + std::to_string(degree_);
      case MechanismKind::tight_poly_subsidy:
        return "psub:\xCE\xB2=" + format_number(beta_) + ",p=" + std::to_string(degree_);
      case MechanismKind::affine_transform:
        return "xform(" + base_->to_string() + ",\xCE\xBB=" + format_number(lambda_) + ")";
    }
    return {};
  }

 private:
  explicit IncentiveMechanism(MechanismKind kind) : kind_(kind) {}

  MechanismKind kind_ = MechanismKind::none;
  double beta_ = 0.0;
  double s_low_ = 1.0;
  double s_high_ = 1.0;
  double lambda_ = 1.0;
  std::size_t degree_ = 0;
  std::shared_ptr<const IncentiveMechanism> base_;
};

inline IncentiveMechanism affine_transform(const IncentiveMechanism& base, double lambda) {
  return IncentiveMechanism::affine_transform(base, lambda);
}

/// Realizes the mechanism on every edge of `instance`.
inline GameInstance apply_mechanism(const IncentiveMechanism& mechanism, const GameInstance& instance) {
  std::vector<Polynomial> taus;
  taus.reserve(instance.problem().num_edges());
  for (const Edge& e : instance.problem().edges()) taus.push_back(mechanism.apply(e.latency));
  return instance.with_incentives(std::move(taus));
}

// ---------------------------------------------------------------------------
// Sensitivity transfer

/// g(s, lambda) = s / (lambda + s - s lambda). Users of sensitivity g(s, lambda)
/// facing affine_transform(T, lambda) rank paths exactly like users of
/// sensitivity s facing T.
inline double sensitivity_map(double s, double lambda) {
  if (!(s >= 0.0)) throw DomainError("sensitivity must be >= 0");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw DomainError("lambda must lie in (0, 1]");
  const double denom = lambda + s - s * lambda;
  if (!(denom > 0.0)) throw DomainError("sensitivity map denominator is not positive");
  return s / denom;
}

/// Applies sensitivity_map to every class and to the bounds (g is increasing in s).
inline SensitivityModel transform_sensitivity(const SensitivityModel& model, double lambda) {
  std::vector<SensitivityClass> classes;
  for (const auto& c : model.classes()) classes.push_back({c.mass, sensitivity_map(c.s, lambda)});
  return SensitivityModel(std::move(classes), sensitivity_map(model.s_low(), lambda),
                          sensitivity_map(model.s_high(), lambda));
}

// ---------------------------------------------------------------------------
// Bound classification

struct BoundReport {
  bool is_toll = true;
  bool is_subsidy = true;
  /// Smallest beta with |tau| <= beta l on the samples; +inf when tau != 0 where l = 0.
  double tight_bound = 0.0;
  /// The bound is attained at some sampled f in (0, 1].
  bool tight = false;
  bool unbounded = false;

  std::string sign_label() const {
    if (is_toll && is_subsidy) return "zero";
    if (is_toll) return "toll";
    if (is_subsidy) return "subsidy";
    return "mixed sign";
  }
};

inline constexpr std::size_t kBoundGridPoints = 1001;

/// Sign class and tight bound of `mechanism` over a sample of latencies, on a
/// uniform grid of [0, 1] plus, for affine latencies, the interior critical
/// points of tau/l.
inline BoundReport classify_bound(const IncentiveMechanism& mechanism,
                                  std::span<const LatencyFunction> latencies,
                                  std::size_t grid_points = kBoundGridPoints) {
  constexpr double kSignTol = 1e-12;
  constexpr double kTightTol = 1e-9;
  BoundReport report;
  // (ratio, f) pairs, kept to decide tightness once the maximum is known
  std::vector<std::pair<double, double>> ratios;
  for (const LatencyFunction& latency : latencies) {
    const Polynomial tau = mechanism.apply(latency);
    const Polynomial& ell = latency.polynomial();
    std::vector<double> fs;
    for (std::size_t k = 0; k < grid_points; ++k)
      fs.push_back(grid_points == 1 ? 1.0 : static_cast<double>(k) / static_cast<double>(grid_points - 1));
    if (ell.degree() <= 1 && tau.degree() <= 2) {
      const Polynomial numerator = tau.derivative() * ell - tau * ell.derivative();
      for (double r : low_degree_roots(numerator, 0.0, 1.0)) fs.push_back(r);
    }
    for (double f : fs) {
      const double t = tau(f);
      const double l = ell(f);
      const double scale = 1.0 + std::abs(l);
      if (t < -kSignTol * scale) report.is_toll = false;
      if (t > kSignTol * scale) report.is_subsidy = false;
      if (l <= 0.0) {
        if (std::abs(t) > kSignTol) report.unbounded = true;
        continue;
      }
      ratios.emplace_back(std::abs(t) / l, f);
    }
  }
  if (report.unbounded) {
    report.tight_bound = std::numeric_limits<double>::infinity();
    return report;
  }
  for (const auto& [r, f] : ratios) report.tight_bound = std::max(report.tight_bound, r);
  for (const auto& [r, f] : ratios)
    if (f > 0.0 && r >= report.tight_bound - kTightTol) report.tight = true;
  return report;
}

// ---------------------------------------------------------------------------
// Mechanism strings

namespace detail {

class MechanismParser {
 public:
  explicit MechanismParser(std::string_view text) : s_(text) {}

  IncentiveMechanism parse() {
    IncentiveMechanism m = mechanism();
    skip_ws();
    if (pos_ != s_.size()) fail("trailing characters");
    return m;
  }

 private:
  IncentiveMechanism mechanism() {
    skip_ws();
    const std::string name = identifier();
    if (name == "none") return IncentiveMechanism::none();
    if (name == "mc") return IncentiveMechanism::marginal_cost();
    if (name == "xform") {
      expect('(');
      IncentiveMechanism base = mechanism();
      expect(',');
      const auto [key, value] = param();
      if (key != "lambda") fail("xform expects lambda=<v>");
      expect(')');
      return guarded([&] { return IncentiveMechanism::affine_transform(base, value); });
    }
    expect(':');
    std::vector<std::pair<std::string, double>> params;
    params.push_back(param());
    while (peek(',') && !lambda_follows()) {
      expect(',');
      params.push_back(param());
    }
    auto get = [&](const char* key) {
      for (auto& [k, v] : params)
        if (k == key) return v;
      fail(std::string("missing parameter ") + key);
      return 0.0;
    };
    auto expect_count = [&](std::size_t n) {
      if (params.size() != n) fail("unexpected parameter count for '" + name + "'");
    };
    if (name == "toll") {
      expect_count(1);
      return guarded([&] { return IncentiveMechanism::opt_bounded_toll(get("beta")); });
    }
    if (name == "subsidy") {
      expect_count(1);
      return guarded([&] { return IncentiveMechanism::opt_bounded_subsidy(get("beta")); });
    }
    if (name == "smc") {
      expect_count(2);
      return guarded([&] { return IncentiveMechanism::scaled_marginal_cost(get("sL"), get("sU")); });
    }
    if (name == "nes") {
      expect_count(2);
      return guarded(
          [&] { return IncentiveMechanism::nominally_equivalent_subsidy(get("sL"), get("sU")); });
    }
    if (name == "ptoll" || name == "psub") {
      expect_count(2);
      const double p = get("p");
      if (p < 1 || p != std::floor(p)) fail("p must be a positive integer");
      const auto deg = static_cast<std::size_t>(p);
      return guarded([&] {
        return name == "ptoll" ? IncentiveMechanism::tight_poly_toll(get("beta"), deg)
                               : IncentiveMechanism::tight_poly_subsidy(get("beta"), deg);
      });
    }
    fail("unknown mechanism '" + name + "'");
    return {};
  }

  template <typename F>
  IncentiveMechanism guarded(F&& make) {
    try {
      return make();
    } catch (const DomainError& e) {
      fail(e.what());
    }
    return {};
  }

  // a trailing ",lambda=" belongs to an enclosing xform
  bool lambda_follows() {
    std::size_t p = pos_ + 1;
    while (p < s_.size() && std::isspace(static_cast<unsigned char>(s_[p]))) ++p;
    const std::string_view rest = s_.substr(p);
    return rest.starts_with("\xCE\xBB") || rest.starts_with("lambda");
  }

  std::pair<std::string, double> param() {
    skip_ws();
    std::string key;
    if (s_.substr(pos_).starts_with("\xCE\xB2")) {  // β
      key = "beta";
      pos_ += 2;
    } else if (s_.substr(pos_).starts_with("\xCE\xBB")) {  // λ
      key = "lambda";
      pos_ += 2;
    } else {
      key = identifier();
      if (key == "b") key = "beta";
    }
    expect('=');
    skip_ws();
    double value = 0.0;
    const char* first = s_.data() + pos_;
    const char* last = s_.data() + s_.size();
    if (first != last && *first == '+') ++first;
    auto res = std::from_chars(first, last, value);
    if (res.ec != std::errc()) fail("expected a number");
    pos_ = static_cast<std::size_t>(res.ptr - s_.data());
    return {key, value};
  }

  std::string identifier() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
      ++pos_;
    if (start == pos_) fail("expected a name");
    return std::string(s_.substr(start, pos_ - start));
  }

  bool peek(char c) {
    skip_ws();
    return pos_ < s_.size() && s_[pos_] == c;
  }

  void expect(char c) {
    if (!peek(c)) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("mechanism '" + std::string(s_) + "' at column " + std::to_string(pos_ + 1), what);
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses `none`, `mc`, `toll:β=<v>`, `subsidy:β=<v>`, `smc:sL=<v>,sU=<v>`,
/// `nes:sL=<v>,sU=<v>`, `ptoll:β=<v>,p=<d>`, `psub:β=<v>,p=<d>` and
/// `xform(<mech>,λ=<v>)`. ASCII `beta`/`lambda` work in place of β/λ.
inline IncentiveMechanism parse_mechanism(std::string_view text) {
  return detail::MechanismParser(text).parse();
}

}  // namespace tollsub
