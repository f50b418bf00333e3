#pragma once

// Truncated multivariate Taylor jets.  A Jet over `vars` variables and total
// order `order` stores c_alpha = (d^alpha f)(a0) / alpha! for every monomial
// of degree <= order.  Monomials are ordered by degree, then lexicographically
// with the first exponent largest first, so that in one variable the
// coefficient of a^i sits at position i, and in k variables position 1 + i is
// the monomial a_i.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace parablend {

struct MultiIndex {
  std::vector<int> exponents;

  [[nodiscard]] int order() const noexcept;
  [[nodiscard]] double factorial() const noexcept;  // alpha! = prod alpha_i!
  bool operator==(const MultiIndex&) const = default;
};

class JetSpace {
 public:
  struct ProductTerm {
    std::uint32_t lhs;
    std::uint32_t rhs;
    std::uint32_t target;
  };

  // Shared, immutable layouts: one instance per (vars, order).
  static std::shared_ptr<const JetSpace> get(int vars, int order);

  JetSpace(int vars, int order);

  [[nodiscard]] int vars() const noexcept { return vars_; }
  [[nodiscard]] int order() const noexcept { return order_; }
  [[nodiscard]] std::size_t size() const noexcept { return indices_.size(); }

  [[nodiscard]] const MultiIndex& index(std::size_t pos) const { return indices_.at(pos); }
  // Throws DimensionError for a multi-index outside the space.
  [[nodiscard]] std::size_t position(const MultiIndex& m) const;
  [[nodiscard]] std::size_t position(std::span<const int> exponents) const;
  [[nodiscard]] std::size_t degree_begin(int degree) const;
  [[nodiscard]] int degree(std::size_t pos) const { return degree_[pos]; }
  [[nodiscard]] double factorial(std::size_t pos) const { return factorial_[pos]; }

  // For pos > 0: the position of alpha - e_var together with var, where var is
  // the first variable with a positive exponent.  Used to build monomials.
  [[nodiscard]] std::pair<std::size_t, int> predecessor(std::size_t pos) const {
    return predecessor_[pos];
  }

  // Unordered pairs (lhs <= rhs) whose degrees sum to at most order().
  [[nodiscard]] std::span<const ProductTerm> product_terms() const noexcept {
    return products_;
  }

 private:
  int vars_;
  int order_;
  std::vector<MultiIndex> indices_;
  std::vector<int> degree_;
  std::vector<double> factorial_;
  std::vector<std::size_t> degree_offsets_;
  std::vector<std::pair<std::size_t, int>> predecessor_;
  std::vector<ProductTerm> products_;
};

using JetSpacePtr = std::shared_ptr<const JetSpace>;

class Jet {
 public:
  Jet() = default;
  explicit Jet(JetSpacePtr space);
  Jet(JetSpacePtr space, std::vector<double> coeffs);

  static Jet constant(JetSpacePtr space, double c);
  // The jet of a -> a_var expanded at a_var = base.
  static Jet variable(JetSpacePtr space, int var, double base);

  [[nodiscard]] bool empty() const noexcept { return space_ == nullptr; }
  [[nodiscard]] const JetSpacePtr& space() const noexcept { return space_; }
  [[nodiscard]] int vars() const noexcept { return space_->vars(); }
  [[nodiscard]] int order() const noexcept { return space_->order(); }
  [[nodiscard]] std::size_t size() const noexcept { return c_.size(); }

  [[nodiscard]] double value() const noexcept { return c_[0]; }
  [[nodiscard]] double coeff(std::size_t pos) const { return c_.at(pos); }
  [[nodiscard]] double coeff(const MultiIndex& m) const;
  // d^alpha at the base point, i.e. coeff * alpha!.
  [[nodiscard]] double derivative(const MultiIndex& m) const;
  [[nodiscard]] double derivative_at(std::size_t pos) const;

  [[nodiscard]] std::span<const double> coeffs() const noexcept { return c_; }
  [[nodiscard]] std::span<double> mutable_coeffs() noexcept { return c_; }
  void set_coeff(std::size_t pos, double v) { c_.at(pos) = v; }

  [[nodiscard]] bool is_finite() const noexcept;
  [[nodiscard]] double max_abs() const noexcept;

  Jet& operator+=(const Jet& o);
  Jet& operator-=(const Jet& o);
  Jet& operator*=(const Jet& o);
  Jet& operator+=(double s) noexcept;
  Jet& operator-=(double s) noexcept;
  Jet& operator*=(double s) noexcept;
  Jet& operator/=(double s) noexcept;
  [[nodiscard]] Jet operator-() const;

 private:
  void require_same(const Jet& o, const char* op) const;

  JetSpacePtr space_;
  std::vector<double> c_;
};

Jet operator+(Jet x, const Jet& y);
Jet operator-(Jet x, const Jet& y);
Jet operator*(const Jet& x, const Jet& y);
Jet operator/(const Jet& x, const Jet& y);
Jet operator+(Jet x, double s);
Jet operator+(double s, Jet x);
Jet operator-(Jet x, double s);
Jet operator-(double s, const Jet& x);
Jet operator*(Jet x, double s);
Jet operator*(double s, Jet x);
Jet operator/(Jet x, double s);
Jet operator/(double s, const Jet& x);

Jet jet_add(const Jet& x, const Jet& y);
Jet jet_mul(const Jet& x, const Jet& y);
// f_derivs = f(x0), f'(x0), ..., f^(n)(x0) at x0 = x.value(); n must be at
// least x.order().
Jet jet_compose_scalar(std::span<const double> f_derivs, const Jet& x);

Jet reciprocal(const Jet& x);
Jet sqrt(const Jet& x);
Jet exp(const Jet& x);
Jet log(const Jet& x);
Jet sin(const Jet& x);
Jet cos(const Jet& x);
Jet atan(const Jet& x);
Jet pow(const Jet& x, int n);
Jet pow(const Jet& x, double p);

// Sum of c_alpha * offset^alpha.
double evaluate(const Jet& j, std::span<const double> offset);

// Same with a generic ring scalar.  Works for any S that supports +, * with S
// and with double; `unit` supplies S's "one" (needed for Jet-valued S).
template <class S>
S taylor_polynomial(const Jet& j, std::span<const S> offset, const S& unit) {
  const JetSpace& sp = *j.space();
  std::vector<S> mono;
  mono.reserve(sp.size());
  mono.push_back(unit);
  S acc = unit * j.coeff(0);
  for (std::size_t pos = 1; pos < sp.size(); ++pos) {
    auto [prev, var] = sp.predecessor(pos);
    mono.push_back(mono[prev] * offset[static_cast<std::size_t>(var)]);
    const double c = j.coeff(pos);
    if (c != 0.0) acc = acc + mono.back() * c;
  }
  return acc;
}

// Copies coefficients into another space.  Variables are matched by prefix:
// extra target variables receive zero exponents, dropped source variables
// must carry zero exponent for a coefficient to be kept.  Orders beyond the
// target order are truncated.
Jet resize(const Jet& j, const JetSpacePtr& target);

// Treats the last trailing.size() variables of j as "inner" variables and
// returns the Taylor coefficient of inner^trailing as a jet over the leading
// variables (in `target`, whose vars must equal j.vars() - trailing.size()).
Jet slice(const Jet& j, std::span<const int> trailing, const JetSpacePtr& target);

// Jet of sum over basis monomials: polynomial with Taylor coefficients given in
// `coeffs` (indexed like `space`), composed with the vector of jets `at`.
Jet compose_polynomial(const Jet& poly, std::span<const Jet> at);

}  // namespace parablend
