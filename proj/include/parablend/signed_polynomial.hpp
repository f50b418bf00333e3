#pragma once

// Sign letters and the signed polynomials attached to them.  A letter holds
// dprime + 1 signs, dprime = C(k + d, d) - 1.  Sign 0 shifts the height of a
// branch, sign i >= 1 weights the i-th monomial of degree 1..d (graded
// lexicographic, same order as the jet coefficients).

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "parablend/jets.hpp"
#include "parablend/scalar.hpp"

namespace parablend {

int dprime_for(int k, int d);

class Letter {
 public:
  Letter() = default;
  Letter(std::uint32_t plus_mask, int length);
  static Letter from_signs(std::span<const int> signs);
  static Letter uniform(int length, int sign);

  [[nodiscard]] int length() const noexcept { return length_; }
  [[nodiscard]] int sign(int i) const noexcept { return ((plus_mask_ >> i) & 1u) ? 1 : -1; }
  [[nodiscard]] std::uint32_t plus_mask() const noexcept { return plus_mask_; }
  [[nodiscard]] Letter with_sign(int i, int s) const;
  [[nodiscard]] std::string to_string() const;  // e.g. "+-+"
  static Letter parse(const std::string& text);

  bool operator==(const Letter&) const = default;
  // Lexicographic on the sign vector with -1 < +1.
  std::strong_ordering operator<=>(const Letter& o) const;

 private:
  std::uint32_t plus_mask_ = 1;
  int length_ = 1;
};

class SignedPolynomial {
 public:
  SignedPolynomial(int k, int d, Letter delta);

  [[nodiscard]] int k() const noexcept { return k_; }
  [[nodiscard]] int d() const noexcept { return d_; }
  [[nodiscard]] int dprime() const noexcept { return delta_.length() - 1; }
  [[nodiscard]] const Letter& delta() const noexcept { return delta_; }
  // Monomials of degree 1..d in graded lexicographic order.
  [[nodiscard]] std::span<const MultiIndex> basis() const noexcept { return basis_; }
  // Taylor coefficients of the polynomial around a = 0, as a (k, d) jet.
  [[nodiscard]] const Jet& coefficients() const noexcept { return coeffs_; }

  // P(a) for a generic scalar; `a` holds the k parameter values.
  template <class S>
  S evaluate(std::span<const S> a) const {
    return taylor_polynomial<S>(coeffs_, a, unit_like(a[0]));
  }

  // sup of |P| over the cube |a_i| <= radius (coarse: sum of |coeff| r^|alpha|).
  [[nodiscard]] double sup_bound(double radius) const;

 private:
  int k_;
  int d_;
  Letter delta_;
  std::vector<MultiIndex> basis_;
  Jet coeffs_;
};

// Jet of P_delta(a) where a is given as k jets (one per parameter).
Jet eval_P_delta(const SignedPolynomial& p, std::span<const Jet> at);

}  // namespace parablend
