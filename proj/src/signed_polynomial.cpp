#include "parablend/signed_polynomial.hpp"

#include <cmath>

#include "parablend/errors.hpp"

namespace parablend {

int dprime_for(int k, int d) {
  if (k < 1 || d < 0) throw DimensionError("need k >= 1 and d >= 0");
  // C(k + d, d) - 1, computed exactly in integers.
  long long c = 1;
  for (int i = 1; i <= d; ++i) c = c * (k + i) / i;
  if (c - 1 > 30) throw DimensionError("alphabet too large (dprime > 30)");
  return static_cast<int>(c - 1);
}

Letter::Letter(std::uint32_t plus_mask, int length) : plus_mask_(plus_mask), length_(length) {
  if (length < 1 || length > 31) throw DimensionError("letter length must lie in [1, 31]");
  plus_mask_ &= (length == 32 ? ~0u : ((1u << length) - 1u));
}

Letter Letter::from_signs(std::span<const int> signs) {
  std::uint32_t mask = 0;
  for (std::size_t i = 0; i < signs.size(); ++i) {
    if (signs[i] != 1 && signs[i] != -1) throw DimensionError("letter entries must be +1 or -1");
    if (signs[i] == 1) mask |= (1u << i);
  }
  return Letter(mask, static_cast<int>(signs.size()));
}

Letter Letter::uniform(int length, int sign) {
  return Letter(sign > 0 ? ~0u : 0u, length);
}

Letter Letter::with_sign(int i, int s) const {
  if (i < 0 || i >= length_) throw DimensionError("letter index out of range");
  std::uint32_t m = plus_mask_;
  if (s > 0)
    m |= (1u << i);
  else
    m &= ~(1u << i);
  return Letter(m, length_);
}

std::string Letter::to_string() const {
  std::string s;
  for (int i = 0; i < length_; ++i) s.push_back(sign(i) > 0 ? '+' : '-');
  return s;
}

Letter Letter::parse(const std::string& text) {
  std::vector<int> signs;
  for (char c : text) {
    if (c == '+')
      signs.push_back(1);
    else if (c == '-')
      signs.push_back(-1);
    else
      throw DimensionError("letter text may only contain '+' and '-'");
  }
  return from_signs(signs);
}

std::strong_ordering Letter::operator<=>(const Letter& o) const {
  const int n = std::min(length_, o.length_);
  for (int i = 0; i < n; ++i) {
    if (sign(i) != o.sign(i)) return sign(i) < o.sign(i) ? std::strong_ordering::less : std::strong_ordering::greater;
  }
  return length_ <=> o.length_;
}

SignedPolynomial::SignedPolynomial(int k, int d, Letter delta)
    : k_(k), d_(d), delta_(delta), coeffs_(JetSpace::get(k, d)) {
  if (delta.length() != dprime_for(k, d) + 1)
    throw DimensionError("letter length must be dprime + 1 = C(k+d,d)");
  const auto& space = *coeffs_.space();
  for (std::size_t pos = 1; pos < space.size(); ++pos) {
    basis_.push_back(space.index(pos));
    coeffs_.set_coeff(pos, delta.sign(static_cast<int>(pos)) / space.factorial(pos));
  }
}

double SignedPolynomial::sup_bound(double radius) const {
  double s = 0.0;
  const auto& space = *coeffs_.space();
  for (std::size_t pos = 1; pos < space.size(); ++pos)
    s += std::abs(coeffs_.coeff(pos)) * std::pow(radius, space.degree(pos));
  return s;
}

Jet eval_P_delta(const SignedPolynomial& p, std::span<const Jet> at) {
  if (static_cast<int>(at.size()) != p.k()) throw DimensionError("eval_P_delta: need k parameter jets");
  return compose_polynomial(p.coefficients(), at);
}

}  // namespace parablend
