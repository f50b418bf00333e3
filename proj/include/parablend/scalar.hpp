#pragma once

// Scalar types the maps are written against.  Map code is templated over a
// ring-like scalar S and only needs +, -, * (with S and with double) plus
// `value_of` for branch decisions.  Instantiated for double, quad (orbits
// that need ~30 digits near the sink construction), Jet (parameter and
// spatial derivatives) and Dual (cheap first spatial derivatives).

#include <array>
#include <cmath>
#include <quadmath.h>

#include "parablend/jets.hpp"

namespace parablend {

using quad = __float128;

inline double value_of(double x) noexcept { return x; }
inline double value_of(quad x) noexcept { return static_cast<double>(x); }
inline double value_of(const Jet& x) noexcept { return x.value(); }

inline double unit_like(double) noexcept { return 1.0; }
inline quad unit_like(quad) noexcept { return 1; }
inline Jet unit_like(const Jet& x) { return Jet::constant(x.space(), 1.0); }

// A scalar equal to the double c, living in the same space as `like`.
template <class S>
S constant_like(const S& like, double c) {
  return unit_like(like) * c;
}

inline quad qabs(quad x) noexcept { return fabsq(x); }

// Number of whole periods of R/6Z to remove so that x lands in [-3, 3).
inline double circle_turns(double x) noexcept { return std::floor((x + 3.0) / 6.0); }
inline double circle_turns(quad x) noexcept { return static_cast<double>(floorq((x + 3) / 6)); }
inline double circle_turns(const Jet& x) noexcept { return circle_turns(x.value()); }

// Forward-mode first derivatives in N directions over a base scalar T.
template <class T, int N>
struct Dual {
  T v{};
  std::array<T, N> d{};

  Dual() = default;
  Dual(T value) : v(value) { d.fill(T(0)); }  // NOLINT: implicit promotion is the point

  static Dual variable(T value, int dir) {
    Dual r(value);
    r.d[static_cast<std::size_t>(dir)] = T(1);
    return r;
  }

  Dual& operator+=(const Dual& o) {
    v += o.v;
    for (int i = 0; i < N; ++i) d[i] += o.d[i];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    for (int i = 0; i < N; ++i) d[i] -= o.d[i];
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    for (int i = 0; i < N; ++i) d[i] = d[i] * o.v + v * o.d[i];
    v *= o.v;
    return *this;
  }
  Dual operator-() const {
    Dual r = *this;
    r.v = -r.v;
    for (auto& x : r.d) x = -x;
    return r;
  }
};

template <class T, int N>
Dual<T, N> operator+(Dual<T, N> a, const Dual<T, N>& b) { return a += b; }
template <class T, int N>
Dual<T, N> operator-(Dual<T, N> a, const Dual<T, N>& b) { return a -= b; }
template <class T, int N>
Dual<T, N> operator*(Dual<T, N> a, const Dual<T, N>& b) { return a *= b; }
template <class T, int N>
Dual<T, N> operator+(Dual<T, N> a, double s) { a.v += s; return a; }
template <class T, int N>
Dual<T, N> operator+(double s, Dual<T, N> a) { a.v += s; return a; }
template <class T, int N>
Dual<T, N> operator-(Dual<T, N> a, double s) { a.v -= s; return a; }
template <class T, int N>
Dual<T, N> operator-(double s, const Dual<T, N>& a) { return (-a) + s; }
template <class T, int N>
Dual<T, N> operator*(Dual<T, N> a, double s) {
  a.v *= s;
  for (auto& x : a.d) x *= s;
  return a;
}
template <class T, int N>
Dual<T, N> operator*(double s, Dual<T, N> a) { return a * s; }

template <class T, int N>
double value_of(const Dual<T, N>& x) noexcept { return value_of(x.v); }
template <class T, int N>
Dual<T, N> unit_like(const Dual<T, N>&) { return Dual<T, N>(T(1)); }
template <class T, int N>
double circle_turns(const Dual<T, N>& x) noexcept { return circle_turns(x.v); }

}  // namespace parablend
