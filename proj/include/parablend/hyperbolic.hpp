#pragma once

// Hyperbolic toolbox: continuation of fixed and periodic points with
// parameter jets, local invariant manifolds by graph transform, invariant
// line fields, inclination measurements and straightening charts.

#include <array>
#include <span>
#include <type_traits>
#include <vector>

#include "parablend/dynamics.hpp"
#include "parablend/symbol_word.hpp"

namespace parablend {

// A Jet coefficient seen as a scalar of type S (S = Jet keeps everything).
template <class S>
S lift(const Jet& j, const S& like) {
  if constexpr (std::is_same_v<S, Jet>) {
    (void)like;
    return j;
  } else {
    (void)like;
    return S(j.value());
  }
}

struct HyperbolicPointData {
  Point<Jet> location;
  Jet stable_multiplier;
  Jet unstable_multiplier;
  std::array<Jet, 2> stable_direction;
  std::array<Jet, 2> unstable_direction;  // positive x component
  double chart_size = 0.2;
  std::vector<double> parameter;  // a0
};

// Fixed point near `guess` continued as a jet of the given order at a0.
HyperbolicPointData continue_fixed_point(const FamilyHandle& h, const PlanePoint& guess,
                                         std::span<const double> a0, int order);

// Periodic orbit z_0 -> z_1 -> ... -> z_{p-1} -> z_0 near `guess`.
std::vector<Point<Jet>> continue_periodic_orbit(const FamilyHandle& h,
                                                std::span<const PlanePoint> guess,
                                                std::span<const double> a0, int order);

// Starting orbit for a periodic word: z_j lies in the strip of letters[p-1-j],
// so the past of z_0 reads letters[0], letters[1], ...
std::vector<PlanePoint> coded_orbit_guess(const Construction& c, const SymbolWord& word);

std::vector<Point<Jet>> coded_orbit(const FamilyHandle& h, const SymbolWord& word,
                                    std::span<const double> a0, int order);

// z_0 of coded_orbit: the point whose past is the periodic word.
Point<Jet> continue_coded_orbit(const FamilyHandle& h, const SymbolWord& word,
                                std::span<const double> a0, int order);

enum class ManifoldSide { stable, unstable };

// Graph through (a neighbourhood of) `center`.  Unstable side: the curve
// y = center.y + g(t), x = center.x + t.  Stable side: x = center.x + g(t),
// y = center.y + t.  |t| <= half_width, g(t) = sum coeffs[i] t^i.
struct GraphPiece {
  Point<Jet> center;
  std::vector<Jet> coeffs;
  double half_width = 0.2;

  template <class S>
  S offset(const S& t) const {
    S acc = lift(coeffs.back(), t);
    for (std::size_t i = coeffs.size() - 1; i-- > 0;) acc = acc * t + lift(coeffs[i], t);
    return acc;
  }
  template <class S>
  S slope(const S& t) const {
    S acc = lift(coeffs.back(), t) * static_cast<double>(coeffs.size() - 1);
    for (std::size_t i = coeffs.size() - 1; i-- > 1;)
      acc = acc * t + lift(coeffs[i], t) * static_cast<double>(i);
    return acc;
  }
};

struct LocalManifold {
  ManifoldSide side = ManifoldSide::unstable;
  // One piece per orbit point (a single piece for a fixed point).
  std::vector<GraphPiece> pieces;
  std::vector<double> parameter;
  int iterations = 0;

  [[nodiscard]] const GraphPiece& base() const { return pieces.front(); }
  // Unstable side: height of the piece through the base point.
  [[nodiscard]] Jet height() const { return pieces.front().center.y + pieces.front().coeffs[0]; }
};

struct GraphTransformOptions {
  int degree = 5;
  double half_width = 0.2;
  double tolerance = 1e-12;
  int max_iterations = 500;
  double residual_tolerance = 1e-9;
};

LocalManifold graph_transform_manifold(const FamilyHandle& h, const HyperbolicPointData& base,
                                       ManifoldSide side, const GraphTransformOptions& opts = {});

LocalManifold graph_transform_manifold(const FamilyHandle& h, const SymbolWord& word,
                                       ManifoldSide side, std::span<const double> a0, int order,
                                       const GraphTransformOptions& opts = {});

// Image of an unstable-type piece, re-expanded around dst_center.
GraphPiece push_unstable_piece(const FamilyHandle& h, std::span<const double> a0,
                               const GraphPiece& src, const Point<Jet>& dst_center, int degree,
                               double half_width);

// Preimage near src_center of a stable-type piece given at the image.
GraphPiece pull_stable_piece(const FamilyHandle& h, std::span<const double> a0,
                             const GraphPiece& dst, const Point<Jet>& src_center, int degree,
                             double half_width);

// Largest jet discrepancy between f(piece j) and piece j+1, sampled.
double conjugation_residual(const FamilyHandle& h, const LocalManifold& m, int samples = 21);

// 1 - |lambda| |sigma|^(d-1), positive when the dissipation condition holds.
double dissipation_margin(const HyperbolicPointData& p, int d);

struct ChartBox {
  PlanePoint lo;
  PlanePoint hi;
  int nx = 5;
  int ny = 5;
};

struct LineSample {
  PlanePoint z;
  Jet slope;  // dx/dy of the line; 0 is vertical
  int steps = 0;
};

struct LineField {
  std::vector<LineSample> samples;
};

// Stable line at z from pulling back a vertical vector along the forward orbit.
LineSample stable_line(const FamilyHandle& h, const PlanePoint& z, std::span<const double> a0,
                       int order, int max_steps = 10000, double tolerance = 1e-10);

LineField invariant_line_field(const FamilyHandle& h, const HyperbolicPointData& saddle,
                               const ChartBox& box, int order);

// Angle between D_z f e(z) and e(f z), maximised over the field's samples.
double line_field_residual(const FamilyHandle& h, const LineField& field,
                           std::span<const double> a0);

struct InclinationReport {
  std::vector<double> c0;
  std::vector<double> c1;
  std::vector<double> jet;  // largest coefficient gap in value and slope jets
};

// Pushes `seed` (unstable type, centred in the strip of the word's z_0) n
// times along the periodic word's orbit and measures the distance to the
// word's unstable pieces.
InclinationReport inclination_test(const FamilyHandle& h, const GraphPiece& seed,
                                   const SymbolWord& word, int n, std::span<const double> a0,
                                   int order, const GraphTransformOptions& opts = {});

// (u, v) -> (u - hs(v), v - gu(u)) in offsets from the base point, where hs
// is the stable graph and gu the unstable graph.
class AdaptedChart {
 public:
  AdaptedChart(const LocalManifold& stable, const LocalManifold& unstable);

  [[nodiscard]] double half_width() const noexcept { return half_width_; }
  [[nodiscard]] const Point<Jet>& base() const noexcept { return base_; }

  template <class S>
  Point<S> to_chart(const Point<S>& z) const {
    const S u = reduce_circle(z.x - lift(base_.x, z.x));
    const S v = z.y - lift(base_.y, z.y);
    return {u - stable_.offset(v), v - unstable_.offset(u)};
  }

  template <class S>
  Point<S> from_chart(const Point<S>& w) const {
    S u = w.x;
    S v = w.y;
    for (int it = 0; it < 200; ++it) {
      const S nu = w.x + stable_.offset(v);
      const S nv = w.y + unstable_.offset(nu);
      const double change = std::max(max_abs_of(nu - u), max_abs_of(nv - v));
      u = nu;
      v = nv;
      if (change <= 1e-16) break;
    }
    return {reduce_circle(u + lift(base_.x, u)), v + lift(base_.y, v)};
  }

 private:
  template <class S>
  static double max_abs_of(const S& s) {
    if constexpr (std::is_same_v<S, Jet>) return s.max_abs();
    else return std::abs(value_of(s));
  }

  Point<Jet> base_;
  GraphPiece stable_;
  GraphPiece unstable_;
  double half_width_;
};

}  // namespace parablend
