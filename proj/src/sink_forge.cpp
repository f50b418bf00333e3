#include "parablend/sink_forge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>
#include <type_traits>

#include "parablend/paratangency.hpp"

namespace parablend {

namespace {

using QDual = Dual<quad, 2>;
using DDual = Dual<double, 2>;
using QMat = std::array<std::array<quad, 2>, 2>;
using DMat = std::array<std::array<double, 2>, 2>;

template <class S>
S from_quad(quad q, const S& unit) {
  if constexpr (std::is_same_v<S, quad>) {
    (void)unit;
    return q;
  } else if constexpr (std::is_same_v<S, QDual>) {
    (void)unit;
    return S(q);
  } else {
    return unit * static_cast<double>(q);
  }
}

template <class S>
S poly_at(const std::vector<Jet>& c, const S& t, std::span<const S> off, const S& unit) {
  if (c.empty()) return unit * 0.0;
  S acc = taylor_polynomial<S>(c.back(), off, unit);
  for (std::size_t i = c.size() - 1; i-- > 0;) acc = acc * t + taylor_polynomial<S>(c[i], off, unit);
  return acc;
}

template <class S>
std::vector<S> offsets(std::span<const S> a, std::span<const double> a0) {
  std::vector<S> o;
  o.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) o.push_back(a[i] - a0[i]);
  return o;
}

template <class S>
Point<S> to_chart_impl(const GraphChart& ch, const Point<S>& z, std::span<const S> off) {
  const S unit = unit_like(z.x);
  const S dx = reduce_circle(z.x - taylor_polynomial<S>(ch.center.x, off, unit));
  const S dy = z.y - taylor_polynomial<S>(ch.center.y, off, unit);
  return {dx - poly_at(ch.across, dy, off, unit), dy - poly_at(ch.along, dx, off, unit)};
}

template <class S>
Point<S> from_chart_impl(const GraphChart& ch, const Point<S>& w, std::span<const S> off) {
  const S unit = unit_like(w.x);
  S u = w.x;
  S v = w.y + poly_at(ch.along, u, off, unit);
  if (!ch.across.empty()) {
    for (int it = 0; it < 200; ++it) {
      const S nu = w.x + poly_at(ch.across, v, off, unit);
      const S nv = w.y + poly_at(ch.along, nu, off, unit);
      const double change = std::max(std::abs(value_of(nu - u)), std::abs(value_of(nv - v)));
      u = nu;
      v = nv;
      if (change == 0.0) break;
    }
  }
  return {reduce_circle(taylor_polynomial<S>(ch.center.x, off, unit) + u),
          taylor_polynomial<S>(ch.center.y, off, unit) + v};
}

template <class S>
std::vector<S> zeros_like(std::size_t k, const S& unit) {
  return std::vector<S>(k, unit * 0.0);
}

// phi o f o psi^-1 - (0, q0).
template <class S>
Point<S> transition_impl(const FamilyHandle& h, const TangencyData& td, const Point<S>& xy,
                         std::span<const S> a) {
  const S unit = unit_like(xy.x);
  const auto off = offsets(a, td.parameter);
  const std::span<const S> os(off);
  const GraphChart& psi = td.prefold_chart;
  const Point<S> z{reduce_circle(taylor_polynomial<S>(psi.center.x, os, unit) + xy.x),
                   taylor_polynomial<S>(psi.center.y, os, unit) + poly_at(psi.along, xy.x, os, unit) +
                       xy.y};
  const Point<S> img = h.eval<S>(z, a);
  const Point<S> w = to_chart_impl(td.saddle_chart, img, os);
  return {w.x, w.y - from_quad(td.q0, unit)};
}

std::vector<quad> to_quad(std::span<const double> a) { return {a.begin(), a.end()}; }

double circle_distance(const PlanePoint& p, const PlanePoint& q) {
  return std::hypot(reduce_circle(p.x - q.x), p.y - q.y);
}

PlanePoint step(const FamilyHandle& h, const PlanePoint& z, std::span<const double> a) {
  const PlanePoint img = h.eval<double>(z, a);
  return {reduce_circle(img.x), img.y};
}

DMat invert(const DMat& m) {
  const double det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
  if (det == 0.0 || !std::isfinite(det)) throw DomainError("singular chart derivative");
  return {{{m[1][1] / det, -m[0][1] / det}, {-m[1][0] / det, m[0][0] / det}}};
}

// g(t + s) - g(s) as a polynomial in t.
std::vector<Jet> shifted_polynomial(const std::vector<Jet>& c, double s) {
  std::vector<Jet> out;
  for (std::size_t j = 0; j < c.size(); ++j) {
    Jet acc = c[j] * 0.0;
    double binom = 1.0;  // C(i, j) s^(i - j)
    for (std::size_t i = j; i < c.size(); ++i) {
      acc += c[i] * binom;
      binom *= s * static_cast<double>(i + 1) / static_cast<double>(i + 1 - j);
    }
    out.push_back(acc);
  }
  if (!out.empty()) out[0] = out[0] * 0.0;
  return out;
}

Jet poly_value(const std::vector<Jet>& c, double t) {
  Jet acc = c.back();
  for (std::size_t i = c.size() - 1; i-- > 0;) acc = acc * t + c[i];
  return acc;
}

double max_derivative(const Jet& j, int max_degree = 1 << 20) {
  double m = 0.0;
  for (std::size_t pos = 0; pos < j.size(); ++pos)
    if (j.space()->degree(pos) <= max_degree) m = std::max(m, std::abs(j.derivative_at(pos)));
  return m;
}

// Scalar Newton in quad with a central-difference slope.
template <class F>
quad newton_quad(F&& g, quad x, int max_iterations, const char* what) {
  for (int it = 0; it < max_iterations; ++it) {
    const quad h = 1e-10q * (1 + qabs(x));
    const quad slope = (g(x + h) - g(x - h)) / (2 * h);
    if (slope == 0) throw ConvergenceError(std::string(what) + ": zero slope");
    const quad s = g(x) / slope;
    x -= s;
    if (qabs(s) <= 1e-32q * (1 + qabs(x))) return x;
  }
  throw ConvergenceError(std::string(what) + ": Newton did not converge");
}

PlanePoint as_plane(const Point<quad>& z) {
  return {static_cast<double>(z.x), static_cast<double>(z.y)};
}

Point<quad> as_quad(const PlanePoint& z) { return {z.x, z.y}; }

// Orbit in quad with the Jacobian product of the p-th iterate.
struct PeriodMap {
  std::vector<Point<quad>> orbit;  // p + 1 points
  QMat jacobian;
};

PeriodMap period_map(const FamilyHandle& h, const Point<quad>& z0, int p, std::span<const quad> a) {
  PeriodMap out;
  out.orbit.push_back(z0);
  QMat m{{{1, 0}, {0, 1}}};
  Point<quad> z = z0;
  for (int i = 0; i < p; ++i) {
    const auto J = jacobian_value<quad>(h, z, a);
    QMat n{};
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) n[r][c] = J.m[r][0] * m[0][c] + J.m[r][1] * m[1][c];
    m = n;
    z = {reduce_circle(J.value.x), J.value.y};
    out.orbit.push_back(z);
  }
  out.jacobian = m;
  return out;
}

std::array<std::complex<double>, 2> eigenvalues(const QMat& m) {
  const quad tr = m[0][0] + m[1][1];
  const quad det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
  const quad disc = tr * tr - 4 * det;
  if (disc >= 0) {
    const quad root = sqrtq(disc);
    const quad big = tr >= 0 ? (tr + root) / 2 : (tr - root) / 2;
    const quad small = big != 0 ? det / big : 0;
    return {std::complex<double>(static_cast<double>(big), 0.0),
            std::complex<double>(static_cast<double>(small), 0.0)};
  }
  const double re = static_cast<double>(tr / 2);
  const double im = static_cast<double>(sqrtq(-disc) / 2);
  return {std::complex<double>(re, im), std::complex<double>(re, -im)};
}

// Newton on f^p(z) - z, then orbit data; nullopt when it fails to close.
std::optional<SinkRecord> refine_periodic(const FamilyHandle& h, Point<quad> z, int p,
                                          std::span<const double> a, SinkMethod method) {
  const auto aq = to_quad(a);
  for (int it = 0; it < 40; ++it) {
    const PeriodMap pm = period_map(h, z, p, aq);
    const quad fx = reduce_circle(pm.orbit.back().x - z.x);
    const quad fy = pm.orbit.back().y - z.y;
    const quad m00 = pm.jacobian[0][0] - 1, m01 = pm.jacobian[0][1];
    const quad m10 = pm.jacobian[1][0], m11 = pm.jacobian[1][1] - 1;
    const quad det = m00 * m11 - m01 * m10;
    if (det == 0 || !std::isfinite(static_cast<double>(det))) return std::nullopt;
    const quad dx = (-fx * m11 + fy * m01) / det;
    const quad dy = (-m00 * fy + m10 * fx) / det;
    z = {reduce_circle(z.x + dx), z.y + dy};
    if (qabs(dx) + qabs(dy) <= 1e-32q * (1 + qabs(z.x) + qabs(z.y))) break;
  }
  const PeriodMap pm = period_map(h, z, p, aq);
  SinkRecord rec;
  rec.period = p;
  rec.orbit.assign(pm.orbit.begin(), pm.orbit.end() - 1);
  rec.representative = as_plane(z);
  rec.multipliers = eigenvalues(pm.jacobian);
  rec.determinant = static_cast<double>(pm.jacobian[0][0] * pm.jacobian[1][1] -
                                        pm.jacobian[0][1] * pm.jacobian[1][0]);
  rec.closing_error = static_cast<double>(std::max(qabs(reduce_circle(pm.orbit.back().x - z.x)),
                                                   qabs(pm.orbit.back().y - z.y)));
  rec.parameter_lo.assign(a.begin(), a.end());
  rec.parameter_hi = rec.parameter_lo;
  rec.method = method;
  if (!std::isfinite(rec.closing_error) || rec.closing_error > 1e-9) return std::nullopt;
  return rec;
}

bool is_recordable_sink(const SinkRecord& r) {
  for (const auto& m : r.multipliers)
    if (!(std::abs(m) < 1.0 - 1e-6)) return false;
  for (const auto& z : r.orbit)
    if (in_excluded_strip(static_cast<double>(z.x))) return false;
  return true;
}

std::string grid_point(double u, double v) {
  std::ostringstream os;
  os.precision(6);
  os << "(" << u << ", " << v << ")";
  return os.str();
}

}  // namespace

// ---- charts ------------------------------------------------------------------------------

PlanePoint GraphChart::to_chart(const PlanePoint& z) const {
  const auto off = zeros_like<double>(parameter.size(), 1.0);
  return to_chart_impl<double>(*this, z, off);
}

Point<quad> GraphChart::to_chart(const Point<quad>& z) const {
  const auto off = zeros_like<quad>(parameter.size(), quad(1));
  return to_chart_impl<quad>(*this, z, off);
}

Point<quad> GraphChart::from_chart(const Point<quad>& w) const {
  const auto off = zeros_like<quad>(parameter.size(), quad(1));
  return from_chart_impl<quad>(*this, w, off);
}

PlanePoint GraphChart::from_chart(const PlanePoint& w) const {
  const auto off = zeros_like<double>(parameter.size(), 1.0);
  return from_chart_impl<double>(*this, w, off);
}

DMat GraphChart::derivative(const PlanePoint& z) const {
  const DDual unit(1.0);
  const auto off = zeros_like<DDual>(parameter.size(), unit);
  const Point<DDual> zd{DDual::variable(z.x, 0), DDual::variable(z.y, 1)};
  const Point<DDual> w = to_chart_impl<DDual>(*this, zd, off);
  return {{{w.x.d[0], w.x.d[1]}, {w.y.d[0], w.y.d[1]}}};
}

// ---- normal form -------------------------------------------------------------------------

TangencyGuess coupled_tangency_guess(const Construction& c) {
  if (c.kind() != ConstructionKind::coupled)
    throw ConfigError("the homoclinic tangency exists only in the coupled construction");
  return {c.saddle(), c.homoclinic_point(), c.approach_steps() + 1};
}

PlanePoint transition(const FamilyHandle& h, const TangencyData& td, const PlanePoint& xy,
                      std::span<const double> a) {
  return transition_impl<double>(h, td, xy, a);
}

Point<quad> transition(const FamilyHandle& h, const TangencyData& td, const Point<quad>& xy,
                       std::span<const double> a) {
  const auto aq = to_quad(a);
  return transition_impl<quad>(h, td, xy, std::span<const quad>(aq));
}

TangencyData tangency_normal_form(const FamilyHandle& h, const TangencyGuess& guess,
                                  std::span<const double> a0, const TangencyOptions& opts) {
  const Construction& con = h.construction();
  const int k = con.k(), d = con.d();
  if (static_cast<int>(a0.size()) != k) throw DimensionError("a0 must have k entries");
  if (guess.steps < 1) throw ConfigError("the homoclinic orbit needs at least one step");
  TangencyData td;
  td.parameter.assign(a0.begin(), a0.end());
  td.order = opts.order < 0 ? d + 1 : opts.order;
  td.guess = guess;
  const int order = td.order;
  const auto sp = JetSpace::get(k, order);

  td.saddle = continue_fixed_point(h, guess.saddle, a0, order);
  GraphTransformOptions gopts;
  gopts.degree = opts.manifold_degree;
  const LocalManifold stable = graph_transform_manifold(h, td.saddle, ManifoldSide::stable, gopts);
  const LocalManifold unstable =
      graph_transform_manifold(h, td.saddle, ManifoldSide::unstable, gopts);
  td.saddle_chart = {td.saddle.location, unstable.base().coeffs, stable.base().coeffs, td.parameter};

  // P on the unstable graph, then its orbit up to the point before the tangency
  PlanePoint p = guess.homoclinic;
  {
    const PlanePoint w = td.saddle_chart.to_chart(p);
    p = td.saddle_chart.from_chart(PlanePoint{w.x, 0.0});
  }
  td.approach.push_back(p);
  for (int i = 1; i < guess.steps; ++i) td.approach.push_back(step(h, td.approach.back(), a0));

  GraphPiece piece;
  if (opts.unstable_piece) {
    piece = *opts.unstable_piece;
  } else {
    piece = unstable.base();
    for (int i = 1; i < guess.steps; ++i) {
      const Point<Jet> c{Jet::constant(sp, td.approach[static_cast<std::size_t>(i)].x),
                         Jet::constant(sp, td.approach[static_cast<std::size_t>(i)].y)};
      piece = push_unstable_piece(h, a0, piece, c, opts.manifold_degree, opts.piece_half_width);
    }
  }
  // the quadratic fold only lives on the blend plateau around the preimage
  const double hw = std::min(piece.half_width, 0.5 * con.eta());
  td.prefold_chart = {piece.center, piece.coeffs, {}, td.parameter};
  td.q0 = 0;

  const auto aq = to_quad(a0);
  std::vector<QDual> ad(aq.begin(), aq.end());
  auto slopes = [&](quad x) {
    const Point<QDual> r = transition_impl<QDual>(h, td, Point<QDual>{QDual::variable(x, 0), QDual(quad(0))},
                                                  std::span<const QDual>(ad));
    return std::array<quad, 2>{r.x.d[0], r.y.d[0]};
  };
  auto dA = [&](quad x) { return slopes(x)[0]; };

  quad c0 = newton_quad(dA, 0, 60, "tangency location");
  if (!(std::abs(static_cast<double>(c0)) < hw))
    throw DomainError("no tangency: the critical point left the unstable piece");
  // re-center psi on the critical point; the quad remainder is re-solved
  {
    const double s = static_cast<double>(c0);
    const Jet lift = poly_value(td.prefold_chart.along, s);
    td.prefold_chart.center = {piece.center.x + s, piece.center.y + lift};
    td.prefold_chart.along = shifted_polynomial(piece.coeffs, s);
    c0 = newton_quad(dA, 0, 60, "tangency location");
  }
  td.critical_point0 = c0;
  const Point<quad> image = transition(h, td, Point<quad>{c0, 0}, a0);
  td.q0 = image.y;
  td.critical_value0 = image.x;
  const quad hq = 1e-10q;
  const double curvature = static_cast<double>((dA(c0 + hq) - dA(c0 - hq)) / (2 * hq));
  td.curvature = curvature;
  const auto s0 = slopes(c0);
  td.residual_value = std::abs(static_cast<double>(td.critical_value0));
  td.residual_height = std::abs(static_cast<double>(transition(h, td, Point<quad>{0, 0}, a0).y));
  td.residual_slope = std::abs(static_cast<double>(dA(0)));
  td.angle = std::atan2(std::abs(static_cast<double>(s0[0])), std::abs(static_cast<double>(s0[1])));

  if (!(std::abs(curvature) >= opts.curvature_margin)) {
    std::ostringstream os;
    os << "tangency is not quadratic: d^2 A / dx^2 = " << curvature << " below margin "
       << opts.curvature_margin;
    throw InvariantError(os.str());
  }
  if (td.residual_value > opts.residual_tolerance) {
    std::ostringstream os;
    os << (static_cast<double>(td.critical_value0) * curvature < 0.0
               ? "transversal intersection: the unstable curve crosses the stable manifold, "
               : "no tangency: the unstable curve misses the stable manifold, ")
       << "critical value " << static_cast<double>(td.critical_value0);
    throw DomainError(os.str());
  }
  if (td.angle > opts.angle_tolerance) throw DomainError("transversal intersection: angle too large");

  // parameter jets of c_a and C(a) through the parabola machinery
  const double sign = curvature > 0.0 ? 1.0 : -1.0;
  auto gamma = [&h, &td, sign](const auto& t, auto a) {
    using S = std::decay_t<decltype(t)>;
    return transition_impl<S>(h, td, Point<S>{t, constant_like(t, 0.0)}, a).x * sign;
  };
  const ParabolaFamily fam = ParabolaFamily::analytic(k, Interval{-hw, hw}, gamma);
  const MinJet mj = min_gamma_jet(fam, a0, order);
  td.critical_point = mj.m * 0.0 + Jet::constant(sp, 0.0);
  {
    // the critical point itself (value from quad)
    const auto outer = JetSpace::get(k + 1, order + 1);
    std::vector<Jet> a_outer;
    for (int i = 0; i < k; ++i) a_outer.push_back(Jet::variable(outer, i, a0[static_cast<std::size_t>(i)]));
    Jet c = Jet::constant(sp, static_cast<double>(c0));
    const std::vector<int> tp{1};
    for (int sweep = 0; sweep <= order; ++sweep) {
      const Jet t = resize(c, outer) + Jet::variable(outer, k, 0.0);
      c -= slice(fam.value(t, a_outer), tp, sp) / mj.curvature;
    }
    c.set_coeff(0, static_cast<double>(c0));
    td.critical_point = c;
  }
  td.critical_value = mj.m * sign;
  td.critical_value.set_coeff(0, static_cast<double>(td.critical_value0));

  // (T'): d_x A_a(c_a, 0) vanishes through order d - 1
  {
    const auto outer = JetSpace::get(k + 1, order);
    std::vector<Jet> a_outer;
    for (int i = 0; i < k; ++i) a_outer.push_back(Jet::variable(outer, i, a0[static_cast<std::size_t>(i)]));
    const Jet t = resize(td.critical_point, outer) + Jet::variable(outer, k, 0.0);
    const Jet A = transition_impl<Jet>(h, td, Point<Jet>{t, Jet::constant(outer, 0.0)},
                                       std::span<const Jet>(a_outer)).x;
    const std::vector<int> tp{1};
    const Jet dx = slice(A, tp, JetSpace::get(k, order));
    td.primed_residual = 0.0;
    for (std::size_t pos = 0; pos < dx.size(); ++pos)
      if (dx.space()->degree(pos) <= d - 1) td.primed_residual = std::max(td.primed_residual, std::abs(dx.coeff(pos)));
  }

  // separation of the pre-tangency point from its forward orbit and the approach
  const PlanePoint pre = td.prefold();
  double theta = std::numeric_limits<double>::infinity();
  {
    PlanePoint z = pre;
    for (int i = 0; i < 60; ++i) {
      z = step(h, z, a0);
      theta = std::min(theta, circle_distance(z, pre));
    }
    for (std::size_t i = 0; i + 1 < td.approach.size(); ++i)
      theta = std::min(theta, circle_distance(td.approach[i], pre));
    const double sigma = std::abs(td.saddle.unstable_multiplier.value());
    double u = td.saddle_chart.to_chart(p).x;
    for (int j = 0; j < 40; ++j) {
      u /= sigma;
      theta = std::min(theta, circle_distance(td.saddle_chart.from_chart(PlanePoint{u, 0.0}), pre));
    }
  }
  td.theta = theta;
  double radius = std::min(theta / 2.0, 0.2);
  for (int i = 0; i < 20; ++i, radius *= 0.5) {
    try {
      (void)con.chart_region_of_arc(pre.x - radius, pre.x + radius);
      break;
    } catch (const SupportError&) {
    }
  }
  td.ball_radius = radius;

  // sampled A, B with spatial and parameter derivatives; U from their size
  {
    const int ord = d + 2;
    const auto big = JetSpace::get(k + 2, ord);
    std::vector<Jet> a_big;
    for (int i = 0; i < k; ++i) a_big.push_back(Jet::variable(big, i, a0[static_cast<std::size_t>(i)]));
    double U = 1.0;
    for (const auto& ch : {td.saddle_chart, td.prefold_chart}) {
      for (const auto& c : ch.along) U = std::max(U, max_derivative(c));
      for (const auto& c : ch.across) U = std::max(U, max_derivative(c));
    }
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        const PlanePoint off{hw * (i - 2) / 2.0, hw * (j - 2) / 2.0};
        const Point<Jet> xy{Jet::variable(big, k, off.x), Jet::variable(big, k + 1, off.y)};
        const Point<Jet> ab = transition_impl<Jet>(h, td, xy, std::span<const Jet>(a_big));
        U = std::max({U, max_derivative(ab.x), max_derivative(ab.y)});
        td.samples.push_back({off, ab.x, ab.y});
      }
    td.norm_bound = U;
  }

  // nu: envelope of |d^d C| along the parameter axes
  {
    const Jet& C = td.critical_value;
    const std::size_t deg_lo = sp->degree_begin(std::min(d, order));
    const std::size_t deg_hi = d + 1 <= order ? sp->degree_begin(d + 1) : sp->size();
    for (int i = 0; i <= 100; ++i) {
      const double r = 0.25 * i / 100.0;
      double env = 0.0;
      for (int axis = 0; axis < k; ++axis)
        for (double s : {-1.0, 1.0}) {
          std::vector<double> shift(static_cast<std::size_t>(k), 0.0);
          shift[static_cast<std::size_t>(axis)] = s * r;
          const auto off = parameter_jets(shift, order);
          const Jet moved = taylor_polynomial<Jet>(C, off, Jet::constant(sp, 1.0));
          for (std::size_t pos = deg_lo; pos < deg_hi; ++pos)
            env = std::max(env, std::abs(moved.derivative_at(pos)));
        }
      td.nu_radius.push_back(r);
      td.nu.push_back(env);
    }
  }
  return td;
}

// ---- dissipation -------------------------------------------------------------------------

DissipationReport dissipation_check(double unstable_multiplier, double stable_multiplier, int d) {
  DissipationReport r;
  r.determinant = unstable_multiplier * stable_multiplier;
  r.determinant_margin = 1.0 - std::abs(r.determinant);
  r.condition = std::abs(stable_multiplier) * std::pow(std::abs(unstable_multiplier), d - 1);
  r.condition_margin = 1.0 - r.condition;
  return r;
}

DissipationReport dissipation_check(const HyperbolicPointData& saddle, int d) {
  return dissipation_check(saddle.unstable_multiplier.value(), saddle.stable_multiplier.value(), d);
}

// ---- perturbations -----------------------------------------------------------------------

double windowed_parameter_norm(const FamilyHandle& h, const ParameterWindow& w,
                               const Jet& amplitude, int d) {
  const std::size_t k = w.center.size();
  const int per_axis = k == 1 ? 161 : (k == 2 ? 41 : 9);
  std::size_t total = 1;
  for (std::size_t i = 0; i < k; ++i) total *= static_cast<std::size_t>(per_axis);
  double norm = 0.0;
  std::vector<double> a(k);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rest = idx;
    for (std::size_t i = 0; i < k; ++i) {
      const auto j = static_cast<double>(rest % static_cast<std::size_t>(per_axis));
      rest /= static_cast<std::size_t>(per_axis);
      a[i] = w.center[i] + 2.0 * w.alpha * (-1.0 + 2.0 * j / (per_axis - 1));
    }
    const auto aj = parameter_jets(a, d);
    const auto win = h.window_factor<Jet>(w, std::span<const Jet>(aj));
    if (!win) continue;
    std::vector<Jet> off;
    for (std::size_t i = 0; i < k; ++i) off.push_back(aj[i] - w.center[i]);
    const Jet unit = Jet::constant(aj.front().space(), 1.0);
    const Jet val = *win * taylor_polynomial<Jet>(amplitude, std::span<const Jet>(off), unit);
    norm = std::max(norm, max_derivative(val));
  }
  return norm;
}

double flatten_alpha_zero(const FamilyHandle& h, const TangencyData& td, double mu) {
  const int d = h.construction().d();
  double alpha = 0.25;
  for (int i = 0; i < 40; ++i, alpha *= 0.5) {
    const ParameterWindow w{td.parameter, alpha};
    if (windowed_parameter_norm(h, w, td.critical_value, d) <= mu / 2.0) return alpha;
  }
  throw ConvergenceError("no dyadic alpha brings the flattening term below mu / 2");
}

namespace {

// Amplitude in plane coordinates for a shift (du, 0) of the image in the saddle chart.
std::array<Jet, 2> chart_shift_to_plane(const FamilyHandle& h, const TangencyData& td, const Jet& du) {
  const PlanePoint image = step(h, td.prefold(), td.parameter);
  const DMat inv = invert(td.saddle_chart.derivative(image));
  return {du * inv[0][0], du * inv[1][0]};
}

}  // namespace

FamilyHandle flatten_perturbation(const FamilyHandle& h, const TangencyData& td, double alpha,
                                  std::optional<double> mu) {
  const double m = mu.value_or(h.construction().mu());
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  const double alpha0 = flatten_alpha_zero(h, td, m);
  if (alpha > alpha0 * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "alpha " << alpha << " above alpha_0 = " << alpha0;
    throw DomainError(os.str());
  }
  AdditivePerturbation p;
  p.center = td.prefold();
  p.radius = td.ball_radius;
  p.window = {td.parameter, alpha};
  p.amplitude = chart_shift_to_plane(h, td, -td.critical_value);
  return h.push_perturbation(p);
}

FoliationShift foliation_shift(const FamilyHandle& h, const TangencyData& td, int n) {
  if (n < 1) throw ConfigError("n must be at least 1");
  const int k = h.k(), order = td.order;
  const auto sp = JetSpace::get(k, order);
  const std::span<const double> a0(td.parameter);
  const auto aq = to_quad(a0);
  const auto aj = parameter_jets(a0, order);
  const GraphChart& phi = td.saddle_chart;
  const auto zq = zeros_like<quad>(static_cast<std::size_t>(k), quad(1));
  const std::span<const quad> offq(zq);

  // u coordinate of f along the unstable axis of the saddle chart
  auto along_q = [&](quad u) {
    const Point<quad> z = from_chart_impl<quad>(phi, Point<quad>{u, 0}, offq);
    const Point<quad> img = h.eval<quad>(z, std::span<const quad>(aq));
    return to_chart_impl<quad>(phi, img, offq).x;
  };
  std::vector<Jet> offj;
  for (int i = 0; i < k; ++i) offj.push_back(aj[static_cast<std::size_t>(i)] - a0[static_cast<std::size_t>(i)]);
  auto along_j = [&](const Jet& u) {
    const Point<Jet> z = from_chart_impl<Jet>(phi, Point<Jet>{u, Jet::constant(sp, 0.0)}, offj);
    const Point<Jet> img = h.eval<Jet>(z, std::span<const Jet>(aj));
    return to_chart_impl<Jet>(phi, img, offj).x;
  };

  const PlanePoint P = td.homoclinic();
  quad p = to_chart_impl<quad>(phi, as_quad(P), offq).x;
  Jet pj = to_chart_impl<Jet>(phi, Point<Jet>{Jet::constant(sp, P.x), Jet::constant(sp, P.y)}, offj).x;
  const double sigma = td.saddle.unstable_multiplier.value();
  for (int i = 0; i < n; ++i) {
    const quad target = p;
    p = newton_quad([&](quad u) { return along_q(u) - target; }, target / sigma, 60, "backward orbit");
    // jet corrections with a frozen slope, one order per sweep
    const double slope = static_cast<double>((along_q(p + 1e-12q) - along_q(p - 1e-12q)) / 2e-12q);
    Jet u = Jet::constant(sp, static_cast<double>(p));
    for (int s = 0; s <= order + 1; ++s) u -= (along_j(u) - pj) / slope;
    u.set_coeff(0, static_cast<double>(p));
    pj = u;
  }

  FoliationShift out;
  out.n = n;
  out.backward_point0 = p;
  out.backward_point = pj;
  // height of the critical image: q0 + B(c, 0)
  {
    const Point<Jet> xy{td.critical_point, Jet::constant(sp, 0.0)};
    const Jet B = transition_impl<Jet>(h, td, xy, std::span<const Jet>(aj)).y;
    out.height = B + static_cast<double>(td.q0);
    out.height.set_coeff(0, static_cast<double>(td.q0 + transition(h, td, Point<quad>{td.critical_point0, 0}, a0).y));
  }
  // integrate the stable line field from (p^n, 0) up to the height
  const int steps = 8;
  const Jet dv = out.height / static_cast<double>(steps);
  Jet integral = Jet::constant(sp, 0.0);
  double u = static_cast<double>(p);
  for (int i = 0; i < steps; ++i) {
    const double v_mid = (i + 0.5) * dv.value();
    const PlanePoint z = phi.from_chart(PlanePoint{u, v_mid});
    const LineSample ls = stable_line(h, z, a0, order);
    const DMat D = phi.derivative(z);
    const Jet num = ls.slope * D[0][0] + D[0][1];
    const Jet den = ls.slope * D[1][0] + D[1][1];
    const Jet du = num / den * dv;
    integral += du;
    u += du.value();
  }
  out.slope_integral = std::abs(integral.value());
  out.shift = pj + integral;
  out.shift0 = p + static_cast<quad>(integral.value());
  out.shift.set_coeff(0, static_cast<double>(out.shift0));
  return out;
}

FamilyHandle sink_translation_perturbation(const FamilyHandle& h, const TangencyData& td,
                                           double alpha, int n, std::optional<double> mu) {
  const Construction& con = h.construction();
  const int d = con.d();
  const double m = mu.value_or(con.mu());
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (n < 1) throw ConfigError("n must be at least 1");
  for (std::size_t pos = 0; pos < td.critical_value.size(); ++pos)
    if (td.critical_value.space()->degree(pos) <= d && std::abs(td.critical_value.coeff(pos)) > 1e-9)
      throw InvariantError("the unfolding is not flat; apply flatten_perturbation first");
  if (dissipation_margin(td.saddle, d) <= 0.0)
    throw InvariantError("dissipation condition |lambda| |sigma|^(d-1) < 1 fails");
  const FoliationShift fs = foliation_shift(h, td, n);
  const double norm = windowed_parameter_norm(h, ParameterWindow{td.parameter, alpha}, fs.shift, d);
  if (norm > m) {
    std::ostringstream os;
    os << "n = " << n << " too small: shift norm " << norm << " above mu = " << m;
    throw DomainError(os.str());
  }
  AdditivePerturbation p;
  p.center = td.prefold();
  p.radius = td.ball_radius;
  p.window = {td.parameter, alpha};
  p.amplitude = chart_shift_to_plane(h, td, fs.shift);
  return h.push_perturbation(p);
}

// ---- sinks -------------------------------------------------------------------------------

std::string to_string(SinkMethod m) {
  return m == SinkMethod::iteration ? "iteration" : "trapping-box";
}

bool in_excluded_strip(double x) {
  const double r = reduce_circle(x);
  return r >= -2.5 && r <= -1.5;
}

namespace {

std::vector<SinkRecord> sinks_at(const FamilyHandle& h, const SeedRegion& region,
                                 const std::vector<double>& a, int max_period,
                                 const SinkSearchOptions& opts) {
  const auto aq = to_quad(a);
  const std::span<const quad> as(aq);
  std::vector<SinkRecord> found;
  const auto ring = static_cast<std::size_t>(max_period + 1);
  for (int i = 0; i < region.nx; ++i)
    for (int j = 0; j < region.ny; ++j) {
      const double fx = region.nx == 1 ? 0.0 : -1.0 + 2.0 * i / (region.nx - 1);
      const double fy = region.ny == 1 ? 0.0 : -1.0 + 2.0 * j / (region.ny - 1);
      Point<quad> z{quad(region.center.x) + quad(region.half_x) * fx,
                    quad(region.center.y) + quad(region.half_y) * fy};
      std::vector<Point<quad>> hist(ring);
      hist[0] = z;
      int period = 0;
      for (int t = 1; t <= opts.max_steps && period == 0; ++t) {
        const Point<quad> img = h.eval<quad>(z, as);
        z = {reduce_circle(img.x), img.y};
        if (!std::isfinite(static_cast<double>(z.y)) || qabs(z.y) > 1e8q) break;
        hist[static_cast<std::size_t>(t) % ring] = z;
        if (t < max_period) continue;
        const quad scale = 1 + qabs(z.x) + qabs(z.y);
        for (int p = 1; p <= max_period; ++p) {
          const auto& old = hist[static_cast<std::size_t>(t - p) % ring];
          if (qabs(reduce_circle(z.x - old.x)) + qabs(z.y - old.y) <= quad(opts.convergence) * scale) {
            period = p;
            break;
          }
        }
      }
      if (period == 0) continue;
      auto rec = refine_periodic(h, z, period, a, SinkMethod::iteration);
      if (!rec || !is_recordable_sink(*rec)) continue;
      bool duplicate = false;
      for (const auto& f : found) {
        if (f.period != rec->period) continue;
        for (const auto& q : f.orbit)
          duplicate = duplicate || (qabs(reduce_circle(q.x - rec->orbit[0].x)) + qabs(q.y - rec->orbit[0].y) <= 1e-12q);
      }
      if (!duplicate) found.push_back(std::move(*rec));
    }
  return found;
}

}  // namespace

std::vector<SinkRecord> detect_sinks(const FamilyHandle& h, const SeedRegion& region,
                                     std::span<const std::vector<double>> a_grid, int max_period,
                                     const SinkSearchOptions& opts) {
  if (max_period < 1) throw ConfigError("max_period must be at least 1");
  std::vector<std::vector<SinkRecord>> per_point(a_grid.size());
  const std::size_t workers =
      opts.parallel ? std::max<std::size_t>(1, std::min<std::size_t>(a_grid.size(), std::thread::hardware_concurrency()))
                    : 1;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < a_grid.size(); i += workers)
          per_point[i] = sinks_at(h, region, a_grid[i], max_period, opts);
      });
  }
  std::vector<SinkRecord> out;
  for (auto& v : per_point)
    for (auto& r : v) out.push_back(std::move(r));
  return out;
}

TrappingBoxCertificate trapping_box_check(const FamilyHandle& h, const TangencyData& td, int n,
                                          std::span<const double> a, const TrappingOptions& opts) {
  if (n < 1) throw ConfigError("trapping box needs n >= 1: the box degenerates at n = 0");
  if (opts.grid < 2) throw ConfigError("trapping box grid needs at least 2 points per side");
  const int k = h.k();
  if (static_cast<int>(a.size()) != k) throw DimensionError("a must have k entries");
  TrappingBoxCertificate cert;
  cert.n = n;
  cert.period = td.steps() + n;

  std::vector<double> off(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) off[i] = a[i] - td.parameter[i];
  const double sigma = std::abs(evaluate(td.saddle.unstable_multiplier, off));
  const double lambda = std::abs(evaluate(td.saddle.stable_multiplier, off));
  cert.kappa = std::min(1.05, std::pow(sigma * lambda, -0.25));
  cert.sigma_prime = cert.kappa * cert.kappa * sigma;
  cert.lambda_prime = cert.kappa * cert.kappa * lambda;
  cert.half_x = std::pow(cert.sigma_prime, -n);
  cert.half_y = std::pow(cert.sigma_prime, -3.0 * n);
  if (cert.half_y == 0.0) throw CertificationError("trapping box below double range");
  const double s_n = std::pow(cert.sigma_prime, n);
  const double kn = std::pow(cert.kappa, -n);

  const GraphChart& phi = td.saddle_chart;
  const auto aq = to_quad(a);
  std::vector<quad> offq(off.begin(), off.end());
  const quad p = to_chart_impl<quad>(phi, as_quad(td.homoclinic()), std::span<const quad>(offq)).x;

  const int g = opts.grid;
  const quad hx = cert.half_x, hy = cert.half_y;
  struct Sample {
    double u, v;
    DMat J;
    quad du, dv;  // image offset from the center
  };
  std::vector<Sample> samples;
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j) {
      const quad fu = -1 + quad(2 * i) / (g - 1), fv = -1 + quad(2 * j) / (g - 1);
      const Point<quad> w{p + hx * fu, hy * fv};
      const Point<quad> z = from_chart_impl<quad>(phi, w, std::span<const quad>(offq));
      const PeriodMap pm = period_map(h, z, cert.period, aq);
      const Point<quad> w1 = to_chart_impl<quad>(phi, pm.orbit.back(), std::span<const quad>(offq));
      const DMat D0 = phi.derivative(as_plane(z));
      const DMat D1 = phi.derivative(as_plane(pm.orbit.back()));
      const DMat D0i = invert(D0);
      QMat t{};
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) t[r][c] = pm.jacobian[r][0] * D0i[0][c] + pm.jacobian[r][1] * D0i[1][c];
      DMat J{};
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) J[r][c] = static_cast<double>(D1[r][0] * t[0][c] + D1[r][1] * t[1][c]);
      samples.push_back({static_cast<double>(hx * fu), static_cast<double>(hy * fv), J, w1.x - p, w1.y});
    }

  const double nl = n * std::pow(cert.lambda_prime, n);
  auto pattern = [&](int r, int c, double u) {
    if (r == 0) return kn * s_n * (c == 0 ? std::abs(u) : 1.0);
    return kn * nl;
  };
  double C = 0.0;
  for (const auto& s : samples)
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) {
        cert.max_entries[r][c] = std::max(cert.max_entries[r][c], std::abs(s.J[r][c]));
        const double pat = pattern(r, c, s.u);
        if (pat > 0.0) C = std::max(C, std::abs(s.J[r][c]) / pat);
      }
  cert.measured_constant = C;
  if (opts.constant) {
    for (const auto& s : samples)
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c)
          if (std::abs(s.J[r][c]) > *opts.constant * pattern(r, c, s.u)) {
            std::ostringstream os;
            os << "entry (" << r + 1 << "," << c + 1 << ") = " << std::abs(s.J[r][c])
               << " exceeds its bound at grid point " << grid_point(s.u, s.v);
            throw CertificationError(os.str());
          }
  }
  for (const auto& s : samples) {
    const double col0 = std::abs(s.J[0][0]) + s_n * std::abs(s.J[1][0]);
    const double col1 = std::abs(s.J[0][1]) / s_n + std::abs(s.J[1][1]);
    cert.max_norm = std::max({cert.max_norm, col0, col1});
  }
  cert.norm_bound = C * kn * (1.0 + C * n * std::pow(cert.sigma_prime * cert.lambda_prime, n));

  // image of the box: grid images plus a Lipschitz margin over half a cell
  const double cell_u = 2.0 * cert.half_x / (g - 1), cell_v = 2.0 * cert.half_y / (g - 1);
  const double slack_u = 0.5 * (cert.max_entries[0][0] * cell_u + cert.max_entries[0][1] * cell_v);
  const double slack_v = 0.5 * (cert.max_entries[1][0] * cell_u + cert.max_entries[1][1] * cell_v);
  cert.maps_into = true;
  for (const auto& s : samples) {
    const bool in_u = std::abs(static_cast<double>(s.du)) + slack_u <= cert.half_x;
    const bool in_v = std::abs(static_cast<double>(s.dv)) + slack_v <= cert.half_y;
    if (!(in_u && in_v) && cert.maps_into) {
      cert.maps_into = false;
      cert.violation = "image of grid point " + grid_point(s.u, s.v) + " leaves the box";
    }
  }
  if (!(cert.max_norm < 1.0) && cert.violation.empty()) {
    std::ostringstream os;
    os << "return map is not contracting in the adapted norm: " << cert.max_norm;
    cert.violation = os.str();
  }
  cert.ok = cert.maps_into && cert.max_norm < 1.0;

  if (cert.ok) {
    const Point<quad> start = from_chart_impl<quad>(phi, Point<quad>{p, 0}, std::span<const quad>(offq));
    auto rec = refine_periodic(h, start, cert.period, a, SinkMethod::trapping_box);
    if (rec) {
      const Point<quad> w = to_chart_impl<quad>(phi, rec->orbit.front(), std::span<const quad>(offq));
      if (qabs(w.x - p) <= hx && qabs(w.y) <= hy) cert.sink = std::move(*rec);
    }
    if (!cert.sink) {
      cert.ok = false;
      cert.violation = "no fixed point of the return map inside the box";
    }
  }
  return cert;
}

// ---- quasi-homoclinic snap ---------------------------------------------------------------

namespace {

// limit - approx as a polynomial in t = x - limit.center.x (jets in a).
std::vector<Jet> snap_shift(const GraphPiece& approx, const GraphPiece& limit) {
  const Jet delta = limit.center.x - approx.center.x;
  const std::size_t deg = std::max(approx.coeffs.size(), limit.coeffs.size());
  std::vector<Jet> out(deg, limit.center.y * 0.0);
  for (std::size_t j = 0; j < limit.coeffs.size(); ++j) out[j] += limit.coeffs[j];
  out[0] += limit.center.y - approx.center.y;
  // approx(t + delta) = sum c_i (t + delta)^i
  for (std::size_t i = 0; i < approx.coeffs.size(); ++i) {
    Jet power = delta * 0.0 + 1.0;  // delta^(i - j)
    double binom = 1.0;
    for (std::size_t j = i + 1; j-- > 0;) {
      out[j] -= approx.coeffs[i] * power * binom;
      power = power * delta;
      binom = binom * static_cast<double>(j) / static_cast<double>(i - j + 1);
    }
  }
  return out;
}

}  // namespace

double piece_distance(const GraphPiece& approx, const GraphPiece& limit, double half_width) {
  const auto shift = snap_shift(approx, limit);
  double dist = 0.0;
  for (int i = 0; i <= 20; ++i) {
    const double t = half_width * (-1.0 + i / 10.0);
    Jet val = shift.back();
    Jet slope = shift.back() * static_cast<double>(shift.size() - 1);
    for (std::size_t j = shift.size() - 1; j-- > 0;) {
      val = val * t + shift[j];
      if (j >= 1) slope = slope * t + shift[j] * static_cast<double>(j);
    }
    dist = std::max({dist, max_derivative(val), shift.size() > 1 ? max_derivative(slope) : 0.0});
  }
  return dist;
}

FamilyHandle quasi_snap_perturbation(const FamilyHandle& h, const GraphPiece& approx,
                                     const GraphPiece& limit, std::span<const double> a0,
                                     double theta, double alpha) {
  if (!(theta > 0.0) || !(alpha > 0.0)) throw ConfigError("theta and alpha must be positive");
  const double dist = piece_distance(approx, limit, std::min(theta, limit.half_width));
  if (dist > 0.1 * theta) {
    std::ostringstream os;
    os << "local manifolds too far apart: distance " << dist << " above 0.1 theta = " << 0.1 * theta;
    throw DomainError(os.str());
  }
  SnapPerturbation s;
  s.center = {limit.center.x.value(), limit.center.y.value()};
  s.radius = theta;
  s.window = {std::vector<double>(a0.begin(), a0.end()), alpha};
  s.shift = snap_shift(approx, limit);
  return h.push_perturbation(s);
}

}  // namespace parablend
