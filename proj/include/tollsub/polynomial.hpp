#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace tollsub {

/// Real polynomial c0 + c1 f + ... + cn f^n. Coefficients may have any sign;
/// latency functions add the non-negativity constraint on top of this.
class Polynomial {
 public:
  Polynomial() = default;
  Polynomial(std::initializer_list<double> coeffs) : c_(coeffs) { trim(); }
  explicit Polynomial(std::vector<double> coeffs) : c_(std::move(coeffs)) { trim(); }

  static Polynomial constant(double v) { return Polynomial({v}); }
  static Polynomial monomial(std::size_t degree, double coeff = 1.0) {
    std::vector<double> c(degree + 1, 0.0);
    c[degree] = coeff;
    return Polynomial(std::move(c));
  }

  std::span<const double> coefficients() const noexcept { return c_; }
  double coefficient(std::size_t i) const noexcept { return i < c_.size() ? c_[i] : 0.0; }

  /// Index of the highest non-zero coefficient; 0 for constants and the zero polynomial.
  std::size_t degree() const noexcept { return c_.empty() ? 0 : c_.size() - 1; }
  bool is_zero() const noexcept { return c_.empty(); }

  double operator()(double x) const noexcept {
    double acc = 0.0;
    for (auto it = c_.rbegin(); it != c_.rend(); ++it) acc = acc * x + *it;
    return acc;
  }

  Polynomial derivative() const {
    if (c_.size() <= 1) return {};
    std::vector<double> d(c_.size() - 1);
    for (std::size_t i = 1; i < c_.size(); ++i) d[i - 1] = static_cast<double>(i) * c_[i];
    return Polynomial(std::move(d));
  }

  /// Antiderivative vanishing at 0.
  Polynomial integral() const {
    if (c_.empty()) return {};
    std::vector<double> p(c_.size() + 1, 0.0);
    for (std::size_t i = 0; i < c_.size(); ++i) p[i + 1] = c_[i] / static_cast<double>(i + 1);
    return Polynomial(std::move(p));
  }

  /// f * p(f)
  Polynomial times_x() const {
    if (c_.empty()) return {};
    std::vector<double> p(c_.size() + 1, 0.0);
    std::copy(c_.begin(), c_.end(), p.begin() + 1);
    return Polynomial(std::move(p));
  }

  Polynomial& operator+=(const Polynomial& o) {
    if (o.c_.size() > c_.size()) c_.resize(o.c_.size(), 0.0);
    for (std::size_t i = 0; i < o.c_.size(); ++i) c_[i] += o.c_[i];
    trim();
    return *this;
  }
  Polynomial& operator-=(const Polynomial& o) { return *this += o * -1.0; }
  Polynomial& operator*=(double k) {
    for (double& v : c_) v *= k;
    trim();
    return *this;
  }

  friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
  friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }
  friend Polynomial operator*(Polynomial a, double k) { return a *= k; }
  friend Polynomial operator*(double k, Polynomial a) { return a *= k; }

  friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
    if (a.is_zero() || b.is_zero()) return {};
    std::vector<double> p(a.c_.size() + b.c_.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.c_.size(); ++i)
      for (std::size_t j = 0; j < b.c_.size(); ++j) p[i + j] += a.c_[i] * b.c_[j];
    return Polynomial(std::move(p));
  }

  friend bool operator==(const Polynomial&, const Polynomial&) = default;

 private:
  void trim() {
    while (!c_.empty() && c_.back() == 0.0) c_.pop_back();
  }

  std::vector<double> c_;
};

/// Real roots of p inside the open interval (lo, hi), for degree <= 2.
/// Higher degrees return an empty list; callers fall back to sampling.
inline std::vector<double> low_degree_roots(const Polynomial& p, double lo, double hi) {
  std::vector<double> roots;
  const double c0 = p.coefficient(0), c1 = p.coefficient(1), c2 = p.coefficient(2);
  if (p.degree() == 1) {
    roots.push_back(-c0 / c1);
  } else if (p.degree() == 2) {
    const double disc = c1 * c1 - 4.0 * c2 * c0;
    if (disc >= 0.0) {
      // numerically stable pair
      const double q = -0.5 * (c1 + std::copysign(std::sqrt(disc), c1));
      if (q != 0.0) roots.push_back(c0 / q);
      roots.push_back(q / c2);
    }
  }
  std::erase_if(roots, [&](double r) { return !(r > lo && r < hi); });
  std::sort(roots.begin(), roots.end());
  return roots;
}

}  // namespace tollsub
