#include "parablend/paratangency.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <type_traits>
#include <variant>

namespace parablend {

namespace {

struct AnalyticNode {
  ParabolaFamily::ValueFn value;
  ParabolaFamily::JetFn jet;
};

struct TransformedNode {
  std::shared_ptr<const ParabolaFamily::Node> parent;
  double height = 0.0;  // delta(0) / 3
  SignedPolynomial poly;
  double eps = 0.0;
};

struct SampledNode {
  Interval interp;
  std::vector<double> a0;
  std::vector<Jet> cheb;  // coefficients of T_0 .. T_{n-1}, each a jet in (a - a0)
};

}  // namespace

struct ParabolaFamily::Node {
  std::variant<AnalyticNode, TransformedNode, SampledNode> impl;
};

namespace {

using Node = ParabolaFamily::Node;

template <class S>
S clenshaw(const std::vector<S>& c, const S& s) {
  S b1 = c.back() * 0.0;
  S b2 = b1;
  for (std::size_t j = c.size() - 1; j >= 1; --j) {
    S b0 = c[j] + s * b1 * 2.0 - b2;
    b2 = std::move(b1);
    b1 = std::move(b0);
  }
  return c[0] + s * b1 - b2;
}

double eval_node(const Node& n, double t, std::span<const double> a) {
  if (const auto* an = std::get_if<AnalyticNode>(&n.impl)) return an->value(t, a);
  if (const auto* tr = std::get_if<TransformedNode>(&n.impl))
    return 1.5 * (eval_node(*tr->parent, t, a) - tr->height - tr->eps * tr->poly.evaluate(a));
  const auto& sm = std::get<SampledNode>(n.impl);
  std::vector<double> off(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) off[i] = a[i] - sm.a0[i];
  std::vector<double> c;
  c.reserve(sm.cheb.size());
  for (const auto& j : sm.cheb) c.push_back(evaluate(j, off));
  const double s = (2.0 * t - sm.interp.lo - sm.interp.hi) / sm.interp.width();
  return clenshaw(c, s);
}

Jet eval_node(const Node& n, const Jet& t, std::span<const Jet> a) {
  if (const auto* an = std::get_if<AnalyticNode>(&n.impl)) return an->jet(t, a);
  if (const auto* tr = std::get_if<TransformedNode>(&n.impl))
    return (eval_node(*tr->parent, t, a) - tr->height - tr->poly.evaluate<Jet>(a) * tr->eps) * 1.5;
  const auto& sm = std::get<SampledNode>(n.impl);
  std::vector<Jet> off;
  for (std::size_t i = 0; i < a.size(); ++i) off.push_back(a[i] - sm.a0[i]);
  const Jet unit = unit_like(t);
  std::vector<Jet> c;
  c.reserve(sm.cheb.size());
  for (const auto& j : sm.cheb) c.push_back(taylor_polynomial<Jet>(j, off, unit));
  const Jet s = (t * 2.0 - (sm.interp.lo + sm.interp.hi)) / sm.interp.width();
  return clenshaw(c, s);
}

std::vector<Jet> constant_params(std::span<const double> a0, const JetSpacePtr& sp) {
  std::vector<Jet> out;
  for (double v : a0) out.push_back(Jet::constant(sp, v));
  return out;
}

// Chebyshev points of the first kind on [lo, hi].
std::vector<double> chebyshev_nodes(Interval iv, int n) {
  std::vector<double> t;
  for (int j = 0; j < n; ++j)
    t.push_back(0.5 * (iv.lo + iv.hi) +
                0.5 * iv.width() * std::cos(std::numbers::pi * (j + 0.5) / n));
  return t;
}

std::vector<Jet> chebyshev_coefficients(const std::vector<Jet>& values) {
  const int n = static_cast<int>(values.size());
  std::vector<Jet> c;
  for (int m = 0; m < n; ++m) {
    Jet acc(values.front().space());
    for (int j = 0; j < n; ++j) acc += values[static_cast<std::size_t>(j)] *
                                       std::cos(std::numbers::pi * m * (j + 0.5) / n);
    acc *= (m == 0 ? 1.0 : 2.0) / n;
    c.push_back(std::move(acc));
  }
  return c;
}

// Root of f(t) = level on [a, b] where f(a) and f(b) bracket the level.
template <class F>
double solve_level(F&& f, double a, double b, double level) {
  double fa = f(a) - level, fb = f(b) - level;
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  if ((fa > 0) == (fb > 0)) throw DomainError("level is not bracketed");
  int side = 0;
  for (int it = 0; it < 300; ++it) {
    // Illinois variant of regula falsi
    double m = (a * fb - b * fa) / (fb - fa);
    if (!(m > std::min(a, b) && m < std::max(a, b))) m = 0.5 * (a + b);
    const double fm = f(m) - level;
    if (fm == 0.0 || std::abs(b - a) <= 4e-16 * std::max(1.0, std::abs(m))) return m;
    if ((fm > 0) == (fb > 0)) {
      b = m;
      fb = fm;
      if (side == -1) fa *= 0.5;
      side = -1;
    } else {
      a = m;
      fa = fm;
      if (side == 1) fb *= 0.5;
      side = 1;
    }
  }
  return 0.5 * (a + b);
}

struct MinLocation {
  double c;
  double slope;
  double curvature;
  double value;
};

MinLocation locate_min(const ParabolaFamily& p, std::span<const double> a0) {
  const Interval d = p.domain();
  const int grid = 64;
  double best_t = d.lo, best = INFINITY;
  for (int i = 0; i <= grid; ++i) {
    const double t = d.lo + d.width() * i / grid;
    const double v = p.value(t, a0);
    if (!std::isfinite(v)) throw DomainError("parabola is not finite on its domain");
    if (v < best) {
      best = v;
      best_t = t;
    }
  }
  double t = best_t;
  std::array<double, 3> g{};
  for (int it = 0; it < 100; ++it) {
    g = p.t_derivatives(t, a0);
    if (!(g[2] > 0.0)) throw DomainError("parabola is not convex near its minimum");
    const double step = g[1] / g[2];
    const double next = std::clamp(t - step, d.lo, d.hi);
    const double moved = std::abs(next - t);
    t = next;
    if (moved <= 2e-16 * std::max(1.0, std::abs(t))) break;
  }
  g = p.t_derivatives(t, a0);
  const double tol = 1e-10 * std::max(1.0, g[2]);
  if (std::abs(g[1]) > tol) {
    if (t <= d.lo || t >= d.hi) throw DomainError("minimum lies on the boundary of the domain");
    throw ConvergenceError("Newton on the critical point did not converge");
  }
  return {t, g[1], g[2], g[0]};
}

// Largest subinterval around the minimum on which the family stays below level.
Interval sublevel_domain(const ParabolaFamily& p, std::span<const double> a0, double level,
                         const MinLocation& mn) {
  if (mn.value >= level) throw DomainError("preimage is empty: minimum above the strip height");
  auto f = [&](double t) { return p.value(t, a0); };
  const Interval d = p.domain();
  Interval out = d;
  if (f(d.lo) > level) out.lo = solve_level(f, d.lo, mn.c, level);
  if (f(d.hi) > level) out.hi = solve_level(f, mn.c, d.hi, level);
  return out;
}

double sampled_curvature(const ParabolaFamily& p, std::span<const double> a0, int samples) {
  double lo = INFINITY;
  const Interval d = p.domain();
  for (int i = 0; i < samples; ++i) {
    const double t = d.lo + d.width() * i / std::max(1, samples - 1);
    lo = std::min(lo, p.t_derivatives(t, a0)[2]);
  }
  return lo;
}

}  // namespace

ParabolaFamily ParabolaFamily::from_functions(int k, Interval domain, ValueFn value, JetFn jet) {
  if (!(domain.hi > domain.lo)) throw DomainError("parabola domain must be a nondegenerate segment");
  ParabolaFamily p;
  p.node_ = std::make_shared<const Node>(Node{AnalyticNode{std::move(value), std::move(jet)}});
  p.k_ = k;
  p.domain_ = domain;
  return p;
}

ParabolaFamily ParabolaFamily::polynomial(int k, Interval domain, std::vector<Jet> coeffs) {
  if (coeffs.empty()) throw DimensionError("polynomial parabola needs coefficients");
  for (const auto& c : coeffs)
    if (c.vars() != k) throw DimensionError("coefficient jets must have k variables");
  auto shared = std::make_shared<const std::vector<Jet>>(std::move(coeffs));
  auto value = [shared](double t, std::span<const double> a) {
    double acc = 0.0;
    for (std::size_t j = shared->size(); j-- > 0;) acc = acc * t + evaluate((*shared)[j], a);
    return acc;
  };
  auto jet = [shared](const Jet& t, std::span<const Jet> a) {
    const Jet unit = unit_like(t);
    Jet acc = t * 0.0;
    for (std::size_t j = shared->size(); j-- > 0;)
      acc = acc * t + taylor_polynomial<Jet>((*shared)[j], a, unit);
    return acc;
  };
  return from_functions(k, domain, value, jet);
}

ParabolaFamily ParabolaFamily::sampled(const ParabolaFamily& source, std::span<const double> a0,
                                       int order, int nodes) {
  if (nodes < 3) throw DimensionError("at least three sample nodes are needed");
  const auto sp = JetSpace::get(source.k(), order);
  const auto aj = parameter_jets(a0, order);
  std::vector<Jet> values;
  for (double t : chebyshev_nodes(source.domain(), nodes))
    values.push_back(source.value(Jet::constant(sp, t), aj));
  ParabolaFamily p = source;
  p.node_ = std::make_shared<const Node>(
      Node{SampledNode{source.domain(), {a0.begin(), a0.end()}, chebyshev_coefficients(values)}});
  return p;
}

ParabolaFamily::Kind ParabolaFamily::kind() const {
  if (std::holds_alternative<AnalyticNode>(node_->impl)) return Kind::analytic;
  if (std::holds_alternative<TransformedNode>(node_->impl)) return Kind::transformed;
  return Kind::sampled;
}

double ParabolaFamily::value(double t, std::span<const double> a) const {
  return eval_node(*node_, t, a);
}

Jet ParabolaFamily::value(const Jet& t, std::span<const Jet> a) const {
  return eval_node(*node_, t, a);
}

std::array<double, 3> ParabolaFamily::t_derivatives(double t, std::span<const double> a) const {
  const auto sp = JetSpace::get(1, 2);
  const Jet g = value(Jet::variable(sp, 0, t), constant_params(a, sp));
  return {g.coeff(0), g.coeff(1), 2.0 * g.coeff(2)};
}

ParabolaFamily ParabolaFamily::restricted(Interval domain) const {
  ParabolaFamily p = *this;
  p.domain_ = domain;
  return p;
}

ParabolaCertificate ParabolaFamily::certify(std::span<const double> a0, double mu, int samples,
                                            double slack) const {
  ParabolaCertificate c;
  std::ostringstream why;
  c.endpoint_lo = value(domain_.lo, a0);
  c.endpoint_hi = value(domain_.hi, a0);
  try {
    const MinLocation mn = locate_min(*this, a0);
    c.min_value = mn.value;
    c.min_location = mn.c;
  } catch (const std::runtime_error& e) {
    c.violated = e.what();
    return c;
  }
  c.curvature = curvature_floor_ > 0.0 ? curvature_floor_ : sampled_curvature(*this, a0, samples);
  const double xa = chart_.x(domain_.lo), xb = chart_.x(domain_.hi);
  const double xbound = 1.0 + mu + 1e-12;
  if (std::min(c.endpoint_lo, c.endpoint_hi) < 1.5 - slack)
    why << "endpoint value " << std::min(c.endpoint_lo, c.endpoint_hi) << " below 3/2";
  else if (std::abs(c.min_value) > 2.0 / 3.0 + slack)
    why << "|min| = " << std::abs(c.min_value) << " above 2/3";
  else if (c.curvature < 1.0 - slack)
    why << "second derivative " << c.curvature << " below 1";
  else if (std::min(xa, xb) < -xbound || std::max(xa, xb) > xbound)
    why << "domain leaves [-1 - mu, 1 + mu]";
  c.violated = why.str();
  c.ok = c.violated.empty();
  return c;
}

MinJet min_gamma_jet(const ParabolaFamily& p, std::span<const double> a0, int order) {
  if (static_cast<int>(a0.size()) != p.k()) throw DimensionError("a0 must have k entries");
  const MinLocation mn = locate_min(p, a0);
  const int k = p.k();
  const auto inner = JetSpace::get(k, order);
  const auto outer = JetSpace::get(k + 1, order + 1);
  std::vector<Jet> a_outer;
  for (int i = 0; i < k; ++i) a_outer.push_back(Jet::variable(outer, i, a0[static_cast<std::size_t>(i)]));
  const std::vector<int> t_power{1};
  // c_a solves d gamma / dt (c_a, a) = 0; one order gained per sweep
  Jet c = Jet::constant(inner, mn.c);
  for (int sweep = 0; sweep <= order; ++sweep) {
    const Jet t = resize(c, outer) + Jet::variable(outer, k, 0.0);
    const Jet g = p.value(t, a_outer);
    c -= slice(g, t_power, inner) / mn.curvature;
  }
  MinJet out;
  out.c = mn.c;
  out.m = p.value(c, parameter_jets(a0, order));
  out.residual = mn.slope;
  out.curvature = mn.curvature;
  return out;
}

ParabolaFamily model_preimage(const Construction& con, const ParabolaFamily& p,
                              const Letter& delta, std::span<const double> a0) {
  const std::size_t region = con.region_index(delta);
  const double mu = con.mu();
  const double xa = p.chart().x(p.domain().lo), xb = p.chart().x(p.domain().hi);
  if (std::min(xa, xb) < -1.0 - 2.0 * mu || std::max(xa, xb) > 1.0 + 2.0 * mu)
    throw DomainError("image containment: parabola leaves [-1 - 2mu, 1 + 2mu] in x");
  const MinLocation parent_min = locate_min(p, a0);
  const double floor_y = delta.sign(0) > 0 ? -2.0 / 3.0 - 2.0 * mu / 3.0 : -1.0 - 2.0 * mu / 3.0;
  if (parent_min.value < floor_y)
    throw DomainError("image containment: parabola dips below the image of the strip");

  ParabolaFamily child = p;
  child.node_ = std::make_shared<const Node>(Node{TransformedNode{
      p.node_, delta.sign(0) / 3.0, con.polynomial(region), con.epsilon()}});
  child.chart_ = {con.branch_inverse_x(region, p.chart().offset), p.chart().scale / con.expansion()};
  child.generation_ = p.generation_ + 1;
  const double parent_curv =
      p.curvature_floor_ > 0.0 ? p.curvature_floor_ : sampled_curvature(p, a0, 33);
  child.curvature_floor_ = 1.5 * parent_curv;
  MinLocation mn = parent_min;
  mn.value = child.value(mn.c, a0);
  child.domain_ = sublevel_domain(child, a0, 1.5 + mu, mn);
  return child;
}

ParabolaFamily sampled_preimage(const FamilyHandle& h, const ParabolaFamily& p,
                                const Letter& delta, std::span<const double> a0, int order,
                                int nodes) {
  const Construction& con = h.construction();
  const std::size_t region = con.region_index(delta);
  const double mu = con.mu();
  const ParabolaChart pc = p.chart();
  const ParabolaChart cc{con.branch_inverse_x(region, pc.offset), pc.scale / con.expansion()};
  if (cc.scale < 1e-9)
    throw DomainError("preimage chart is finer than double precision resolves");
  const double xa = pc.x(p.domain().lo), xb = pc.x(p.domain().hi);
  if (std::min(xa, xb) < -1.0 - 2.0 * mu || std::max(xa, xb) > 1.0 + 2.0 * mu)
    throw DomainError("image containment: parabola leaves [-1 - 2mu, 1 + 2mu] in x");

  const auto sp = JetSpace::get(p.k(), order);
  const auto aj = parameter_jets(a0, order);
  const double height = delta.sign(0) / 3.0;
  const double shift = con.epsilon() * con.polynomial(region).evaluate(a0);
  std::vector<Jet> values;
  for (double t : chebyshev_nodes(p.domain(), nodes)) {
    const double x = cc.x(t);
    double y = 1.5 * (p.value(t, a0) - height - shift);
    double slope = 0.0;
    bool converged = false;
    for (int it = 0; it < 60; ++it) {
      const auto J = jacobian_value<double>(h, PlanePoint{x, y}, a0);
      const double tp = reduce_circle(J.value.x - pc.offset) / pc.scale;
      const auto g = p.t_derivatives(tp, a0);
      const double r = J.value.y - g[0];
      slope = J.m[1][1] - g[1] * J.m[0][1] / pc.scale;
      if (!std::isfinite(r) || slope == 0.0) break;
      const double step = r / slope;
      y -= step;
      if (std::abs(step) <= 4e-16 * std::max(1.0, std::abs(y))) {
        converged = true;
        break;
      }
    }
    if (!converged) throw ConvergenceError("pointwise preimage did not converge");
    Jet yj = Jet::constant(sp, y);
    const Jet xj = Jet::constant(sp, x);
    for (int sweep = 0; sweep <= order + 1; ++sweep) {
      const Point<Jet> img = h.eval<Jet>(Point<Jet>{xj, yj}, std::span<const Jet>(aj));
      const Jet tp = reduce_circle(img.x - pc.offset) / pc.scale;
      yj -= (img.y - p.value(tp, aj)) / slope;
    }
    values.push_back(std::move(yj));
  }
  ParabolaFamily child = p;
  child.node_ = std::make_shared<const Node>(
      Node{SampledNode{p.domain(), {a0.begin(), a0.end()}, chebyshev_coefficients(values)}});
  child.chart_ = cc;
  child.generation_ = p.generation_ + 1;
  child.curvature_floor_ = 0.0;
  const MinLocation mn = locate_min(child, a0);
  child.domain_ = sublevel_domain(child, a0, 1.5 + mu, mn);
  return child;
}

ParabolaFamily parabola_preimage(const FamilyHandle& h, const ParabolaFamily& p,
                                 const Letter& delta, std::span<const double> a0) {
  if (h.perturbations().empty()) return model_preimage(h.construction(), p, delta, a0);
  return sampled_preimage(h, p, delta, a0, h.construction().d());
}

bool DaggerMargins::holds() const {
  if (!(value > 0.0)) return false;
  return std::all_of(derivatives.begin(), derivatives.end(), [](double m) { return m >= 0.0; });
}

DaggerMargins dagger_margins(const MinJet& m, double eps) {
  DaggerMargins out;
  out.value = 2.0 / 3.0 - std::abs(m.derivative(0));
  for (std::size_t pos = 1; pos < m.m.size(); ++pos)
    out.derivatives.push_back(2.0 * eps - std::abs(m.derivative(pos)));
  return out;
}

Letter greedy_step(const MinJet& m, double eps) {
  const DaggerMargins dm = dagger_margins(m, eps);
  if (!dm.holds()) {
    std::ostringstream msg;
    msg << "condition (dagger) violated: |m_0| margin " << dm.value;
    for (std::size_t i = 0; i < dm.derivatives.size(); ++i)
      if (dm.derivatives[i] < 0.0) msg << ", derivative " << i + 1 << " margin " << dm.derivatives[i];
    throw InvariantError(msg.str());
  }
  std::vector<int> signs;
  for (std::size_t pos = 0; pos < m.m.size(); ++pos) signs.push_back(m.derivative(pos) >= 0.0 ? 1 : -1);
  return Letter::from_signs(signs);
}

AffineChart AffineChart::identity(int k, int order) {
  const auto sp = JetSpace::get(k, order);
  AffineChart h;
  for (auto& row : h.linear)
    for (auto& e : row) e = Jet(sp);
  for (auto& s : h.shift) s = Jet(sp);
  return h;
}

AffineChart AffineChart::random(int k, int order, double size, std::uint64_t seed) {
  AffineChart h = identity(k, order);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  // spread the budget over the entries; Taylor coefficients divided by alpha!
  // keep every derivative below size / 6
  auto fill = [&](Jet& j) {
    for (std::size_t pos = 0; pos < j.size(); ++pos)
      j.set_coeff(pos, size / 6.0 * u(rng) / j.space()->factorial(pos));
  };
  for (auto& row : h.linear)
    for (auto& e : row) fill(e);
  for (auto& s : h.shift) fill(s);
  return h;
}

ParabolaFamily image_under(const ParabolaFamily& p, const AffineChart& h,
                           std::span<const double> a0) {
  auto shared = std::make_shared<const std::pair<ParabolaFamily, AffineChart>>(p, h);
  auto entries = [](const AffineChart& c, auto&& at) {
    std::array<double, 6> e{};
    e[0] = at(c.linear[0][0]);
    e[1] = at(c.linear[0][1]);
    e[2] = at(c.linear[1][0]);
    e[3] = at(c.linear[1][1]);
    e[4] = at(c.shift[0]);
    e[5] = at(c.shift[1]);
    return e;
  };
  auto value = [shared, entries](double x, std::span<const double> a) {
    const auto& [fam, chart] = *shared;
    const auto e = entries(chart, [&](const Jet& j) { return evaluate(j, a); });
    // new x = (1 + A00) t + A01 gamma(t) + b0; solve for t
    double t = (x - e[4]) / (1.0 + e[0]);
    for (int it = 0; it < 100; ++it) {
      const auto g = fam.t_derivatives(t, a);
      const double r = (1.0 + e[0]) * t + e[1] * g[0] + e[4] - x;
      const double step = r / ((1.0 + e[0]) + e[1] * g[1]);
      t -= step;
      if (std::abs(step) <= 4e-16 * std::max(1.0, std::abs(t))) break;
    }
    return e[2] * t + (1.0 + e[3]) * fam.value(t, a) + e[5];
  };
  auto jet = [shared](const Jet& x, std::span<const Jet> a) {
    const auto& [fam, chart] = *shared;
    const Jet unit = unit_like(x);
    auto at = [&](const Jet& j) { return taylor_polynomial<Jet>(j, a, unit); };
    const Jet a00 = at(chart.linear[0][0]), a01 = at(chart.linear[0][1]);
    const Jet a10 = at(chart.linear[1][0]), a11 = at(chart.linear[1][1]);
    const Jet b0 = at(chart.shift[0]), b1 = at(chart.shift[1]);
    std::vector<double> av;
    for (const auto& j : a) av.push_back(j.value());
    // value-level Newton, then constant-slope jet sweeps
    Jet t = (x - b0) / (a00 + 1.0);
    double tv = t.value();
    double slope = 1.0;
    for (int it = 0; it < 100; ++it) {
      const auto g = fam.t_derivatives(tv, av);
      slope = (1.0 + a00.value()) + a01.value() * g[1];
      const double step =
          ((1.0 + a00.value()) * tv + a01.value() * g[0] + b0.value() - x.value()) / slope;
      tv -= step;
      if (std::abs(step) <= 4e-16 * std::max(1.0, std::abs(tv))) break;
    }
    t = t - t.value() + tv;
    for (int sweep = 0; sweep <= x.order() + 1; ++sweep)
      t -= ((a00 + 1.0) * t + a01 * fam.value(t, a) + b0 - x) / slope;
    return a10 * t + (a11 + 1.0) * fam.value(t, a) + b1;
  };
  const Interval d = p.domain();
  auto new_x = [&](double t) {
    const auto e = entries(h, [&](const Jet& j) { return evaluate(j, a0); });
    return (1.0 + e[0]) * t + e[1] * p.value(t, a0) + e[4];
  };
  return ParabolaFamily::analytic(p.k(), Interval{new_x(d.lo), new_x(d.hi)}, [value, jet](const auto& x, auto a) {
    if constexpr (std::is_same_v<std::decay_t<decltype(x)>, Jet>)
      return jet(x, a);
    else
      return value(x, a);
  });
}

Jet eta_jet(const FamilyHandle& h, const ParabolaFamily& p, const SymbolWord& word,
            std::span<const double> a0) {
  const Construction& con = h.construction();
  const int order = con.d();
  if (word.empty()) throw DimensionError("eta needs a nonempty word");
  if (h.perturbations().empty()) {
    const MinJet mn = min_gamma_jet(p, a0, order);
    // periodic continuation; 110 extra letters push the tail below 1e-19
    const SymbolWord w = word.unrolled(word.depth() + 110);
    return mn.m - y_series(w, con.epsilon(), parameter_jets(a0, order)).value;
  }
  const LocalManifold wu = graph_transform_manifold(h, word, ManifoldSide::unstable, a0, order);
  const GraphPiece& last = wu.pieces.back();
  const Point<Jet>& z0 = wu.pieces.front().center;
  const Interval d = p.domain();
  const ParabolaChart ch = p.chart();
  const double reach = std::max(std::abs(ch.x(d.lo) - z0.x.value()),
                                std::abs(ch.x(d.hi) - z0.x.value())) + 0.05;
  const GraphPiece wide = push_unstable_piece(h, a0, last, z0, 9, reach);
  auto shared = std::make_shared<const GraphPiece>(wide);
  const std::vector<double> a0v(a0.begin(), a0.end());
  auto diff = [shared, p, ch, a0v](const auto& t, auto a) {
    using S = std::decay_t<decltype(t)>;
    const GraphPiece& g = *shared;
    if constexpr (std::is_same_v<S, Jet>) {
      const auto& sp = t.space();
      auto up = [&](const Jet& j) { return resize(j, sp); };
      const Jet u = t * ch.scale + ch.offset - up(g.center.x);
      Jet acc = up(g.coeffs.back());
      for (std::size_t i = g.coeffs.size() - 1; i-- > 0;) acc = acc * u + up(g.coeffs[i]);
      return p.value(t, a) - up(g.center.y) - acc;
    } else {
      // coefficients are Taylor jets at a0
      std::vector<double> off(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) off[i] = a[i] - a0v[i];
      const double u = ch.x(t) - evaluate(g.center.x, off);
      double acc = evaluate(g.coeffs.back(), off);
      for (std::size_t i = g.coeffs.size() - 1; i-- > 0;) acc = acc * u + evaluate(g.coeffs[i], off);
      return p.value(t, a) - evaluate(g.center.y, off) - acc;
    }
  };
  const ParabolaFamily gap = ParabolaFamily::analytic(p.k(), d, diff);
  return min_gamma_jet(gap, a0, order).m;
}

double default_paratangency_tolerance(int depth) { return 4.0 * std::pow(2.0 / 3.0, depth); }

bool ParatangencyVerdict::all() const {
  return std::all_of(pass.begin(), pass.end(), [](bool b) { return b; });
}

ParatangencyVerdict paratangency_verdict(const Jet& eta, std::span<const double> tol) {
  if (tol.empty()) throw DimensionError("at least one tolerance is needed");
  ParatangencyVerdict v;
  const int order = eta.order();
  v.measured.assign(static_cast<std::size_t>(order + 1), 0.0);
  for (std::size_t pos = 0; pos < eta.size(); ++pos) {
    const auto deg = static_cast<std::size_t>(eta.space()->degree(pos));
    v.measured[deg] = std::max(v.measured[deg], std::abs(eta.derivative_at(pos)));
  }
  for (int i = 0; i <= order; ++i) {
    const double t = tol[std::min(static_cast<std::size_t>(i), tol.size() - 1)];
    v.tolerance.push_back(t);
    v.pass.push_back(v.measured[static_cast<std::size_t>(i)] <= t);
  }
  return v;
}

GreedyTrace greedy_code(const FamilyHandle& h, const ParabolaFamily& p,
                        std::span<const double> a0, int depth, const GreedyOptions& opts) {
  const Construction& con = h.construction();
  if (con.d() >= 1 && con.params().smoothness < 2)
    throw ConfigError("parameter order d >= 1 needs spatial smoothness at least 2");
  if (p.k() != con.k()) throw DimensionError("parabola and construction disagree on k");
  if (depth < 0) throw DimensionError("depth must be nonnegative");
  const double eps = con.epsilon();
  const int order = con.d();

  std::vector<AffineChart> charts;
  for (int i = 0; i < opts.sampled_charts; ++i)
    charts.push_back(AffineChart::random(con.k(), order, eps * eps, opts.seed * 7919u + static_cast<std::uint64_t>(i)));

  GreedyTrace trace;
  trace.sampled_charts = opts.sampled_charts;
  ParabolaFamily cur = p;
  for (int step = 0; step <= depth; ++step) {
    try {
      trace.certificates.push_back(cur.certify(a0, con.mu(), 33, opts.certificate_slack));
      if (!trace.certificates.back().ok)
        throw CertificationError("parabola certification failed: " +
                                 trace.certificates.back().violated);
      for (std::size_t i = 0; i < charts.size() && trace.charts_ok; ++i) {
        const auto cert = image_under(cur, charts[i], a0).certify(a0, con.mu(), 9, opts.certificate_slack);
        if (!cert.ok) {
          trace.charts_ok = false;
          trace.chart_failure = "step " + std::to_string(step) + ", chart " + std::to_string(i) +
                                ": " + cert.violated;
        }
      }
      trace.mins.push_back(min_gamma_jet(cur, a0, order));
      trace.margins.push_back(dagger_margins(trace.mins.back(), eps));
      if (step == depth) break;
      const Letter delta = greedy_step(trace.mins.back(), eps);
      trace.word.letters.push_back(delta);
      cur = parabola_preimage(h, cur, delta, a0);
    } catch (const std::runtime_error& e) {
      const std::string msg = "greedy step " + std::to_string(step) + ": " + e.what();
      if (dynamic_cast<const InvariantError*>(&e)) throw InvariantError(msg);
      if (dynamic_cast<const CertificationError*>(&e)) throw CertificationError(msg);
      if (dynamic_cast<const ConvergenceError*>(&e)) throw ConvergenceError(msg);
      throw DomainError(msg);
    }
  }
  trace.final_parabola.emplace(cur);
  if (depth > 0) trace.eta = eta_jet(h, p, trace.word, a0);
  else trace.eta = trace.mins.front().m * 0.0;
  return trace;
}

}  // namespace parablend
