#include "parablend/hyperbolic.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace parablend {

namespace {

using Dual1 = Dual<double, 1>;

template <class S>
std::vector<S> params_as(std::span<const double> a0, const std::vector<Jet>& aj, const S& like) {
  if constexpr (std::is_same_v<S, Jet>) {
    (void)a0;
    (void)like;
    return aj;
  } else {
    (void)aj;
    (void)like;
    return std::vector<S>(a0.begin(), a0.end());
  }
}

// Root of a scalar residual: Newton on the value, then one constant-slope
// correction per jet order.
template <class F>
Jet solve_scalar(F&& residual, double s0, const JetSpacePtr& sp) {
  double s = s0;
  double slope = 0.0;
  bool converged = false;
  for (int it = 0; it < 100; ++it) {
    const Dual1 r = residual(Dual1::variable(s, 0));
    slope = r.d[0];
    if (!std::isfinite(r.v) || !std::isfinite(slope) || slope == 0.0)
      throw ConvergenceError("scalar Newton hit a degenerate slope");
    const double step = r.v / slope;
    s -= step;
    if (std::abs(step) <= 4e-16 * std::max(1.0, std::abs(s))) {
      converged = true;
      break;
    }
  }
  if (!converged) throw ConvergenceError("scalar Newton did not converge");
  Jet sj = Jet::constant(sp, s);
  for (int i = 0; i <= sp->order(); ++i) sj -= residual(sj) / slope;
  return sj;
}

// Least-degree interpolation through Chebyshev nodes on [-hw, hw].
class GraphFitter {
 public:
  GraphFitter(int degree, double hw) : hw_(hw) {
    const int n = degree + 1;
    Eigen::MatrixXd v(n, n);
    for (int i = 0; i < n; ++i) {
      const double tau = std::cos(std::numbers::pi * (2 * i + 1) / (2.0 * n));
      nodes_.push_back(hw * tau);
      for (int j = 0; j < n; ++j) v(i, j) = std::pow(tau, j);
    }
    lu_ = v.partialPivLu();
  }

  [[nodiscard]] const std::vector<double>& nodes() const noexcept { return nodes_; }

  [[nodiscard]] std::vector<Jet> fit(const std::vector<Jet>& values) const {
    const auto& sp = values.front().space();
    const auto n = static_cast<Eigen::Index>(values.size());
    const auto m = static_cast<Eigen::Index>(sp->size());
    Eigen::MatrixXd b(n, m);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < m; ++j)
        b(i, j) = values[static_cast<std::size_t>(i)].coeff(static_cast<std::size_t>(j));
    const Eigen::MatrixXd x = lu_.solve(b);
    std::vector<Jet> out;
    double scale = 1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      std::vector<double> c(static_cast<std::size_t>(m));
      for (Eigen::Index j = 0; j < m; ++j) c[static_cast<std::size_t>(j)] = x(i, j) / scale;
      out.emplace_back(sp, std::move(c));
      scale *= hw_;
    }
    return out;
  }

 private:
  double hw_;
  std::vector<double> nodes_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

PlanePoint value_point(const Point<Jet>& z) { return {z.x.value(), z.y.value()}; }

double piece_change(const GraphPiece& a, const GraphPiece& b) {
  double worst = 0.0, scale = 1.0;
  for (std::size_t i = 0; i < a.coeffs.size(); ++i) {
    worst = std::max(worst, (a.coeffs[i] - b.coeffs[i]).max_abs() * scale);
    scale *= a.half_width;
  }
  return worst;
}

GraphPiece zero_piece(const Point<Jet>& center, int degree, double hw) {
  GraphPiece g;
  g.center = center;
  g.half_width = hw;
  g.coeffs.assign(static_cast<std::size_t>(degree + 1), Jet(center.x.space()));
  return g;
}

}  // namespace

// ---- periodic orbits ----------------------------------------------------------

std::vector<Point<Jet>> continue_periodic_orbit(const FamilyHandle& h,
                                                std::span<const PlanePoint> guess,
                                                std::span<const double> a0, int order) {
  const auto p = static_cast<Eigen::Index>(guess.size());
  if (p == 0) throw DimensionError("periodic orbit needs at least one point");
  if (static_cast<int>(a0.size()) != h.k()) throw DimensionError("parameter has wrong size");
  std::vector<PlanePoint> z(guess.begin(), guess.end());
  for (auto& q : z) q.x = reduce_circle(q.x);

  auto assemble = [&](Eigen::MatrixXd& A, Eigen::VectorXd& R) {
    A.setZero(2 * p, 2 * p);
    R.resize(2 * p);
    for (Eigen::Index j = 0; j < p; ++j) {
      const Eigen::Index nj = (j + 1) % p;
      const auto J = jacobian_value<double>(h, z[static_cast<std::size_t>(j)], a0);
      const PlanePoint& next = z[static_cast<std::size_t>(nj)];
      R(2 * j) = reduce_circle(next.x - J.value.x);
      R(2 * j + 1) = next.y - J.value.y;
      A(2 * j, 2 * nj) += 1.0;
      A(2 * j + 1, 2 * nj + 1) += 1.0;
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) A(2 * j + r, 2 * j + c) -= J.m[r][c];
    }
  };

  Eigen::MatrixXd A;
  Eigen::VectorXd R;
  bool converged = false;
  for (int it = 0; it < 100; ++it) {
    assemble(A, R);
    if (!R.allFinite()) throw ConvergenceError("orbit Newton produced non-finite residual");
    const Eigen::VectorXd step = A.fullPivLu().solve(R);
    if (!step.allFinite()) throw ConvergenceError("orbit Newton: singular system");
    for (Eigen::Index j = 0; j < p; ++j) {
      auto& q = z[static_cast<std::size_t>(j)];
      q.x = reduce_circle(q.x - step(2 * j));
      q.y -= step(2 * j + 1);
    }
    if (step.lpNorm<Eigen::Infinity>() > 1e6) throw ConvergenceError("orbit Newton diverged");
    if (step.lpNorm<Eigen::Infinity>() <= 1e-15 || R.lpNorm<Eigen::Infinity>() <= 1e-16) {
      converged = true;
      break;
    }
  }
  if (!converged) throw ConvergenceError("orbit Newton did not converge");
  assemble(A, R);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (lu.rcond() < 1e-14) throw ConvergenceError("orbit is degenerate (Jacobian minus identity singular)");

  const auto aj = parameter_jets(a0, order);
  const auto& sp = aj.front().space();
  std::vector<Point<Jet>> zj;
  for (const auto& q : z) zj.push_back({Jet::constant(sp, q.x), Jet::constant(sp, q.y)});
  const auto m = static_cast<Eigen::Index>(sp->size());
  for (int it = 0; it <= order; ++it) {
    Eigen::MatrixXd B(2 * p, m);
    for (Eigen::Index j = 0; j < p; ++j) {
      const auto img = h.eval<Jet>(zj[static_cast<std::size_t>(j)], std::span<const Jet>(aj));
      const auto& next = zj[static_cast<std::size_t>((j + 1) % p)];
      const Jet rx = reduce_circle(next.x - img.x);
      const Jet ry = next.y - img.y;
      for (Eigen::Index c = 0; c < m; ++c) {
        B(2 * j, c) = rx.coeff(static_cast<std::size_t>(c));
        B(2 * j + 1, c) = ry.coeff(static_cast<std::size_t>(c));
      }
    }
    const Eigen::MatrixXd D = lu.solve(B);
    for (Eigen::Index j = 0; j < p; ++j) {
      auto& q = zj[static_cast<std::size_t>(j)];
      for (Eigen::Index c = 0; c < m; ++c) {
        q.x.mutable_coeffs()[static_cast<std::size_t>(c)] -= D(2 * j, c);
        q.y.mutable_coeffs()[static_cast<std::size_t>(c)] -= D(2 * j + 1, c);
      }
      q.x = reduce_circle(q.x);
    }
  }
  return zj;
}

std::vector<PlanePoint> coded_orbit_guess(const Construction& c, const SymbolWord& word) {
  if (word.empty()) throw DimensionError("empty word");
  const std::size_t p = word.depth();
  std::vector<std::size_t> region(p);
  for (std::size_t j = 0; j < p; ++j) {
    if (word.letters[p - 1 - j].length() != c.dprime() + 1)
      throw DimensionError("word letters do not match the construction's alphabet");
    region[j] = c.region_index(word.letters[p - 1 - j]);
  }
  std::vector<double> x(p);
  x[0] = 0.5 * (c.regions()[region[0]].lo + c.regions()[region[0]].hi);
  for (int round = 0; round < 200; ++round) {
    const double before = x[0];
    for (std::size_t j = p; j-- > 0;) x[j] = c.branch_inverse_x(region[j], x[(j + 1) % p]);
    if (std::abs(x[0] - before) <= 1e-16 && round > 0) break;
  }
  std::vector<PlanePoint> out;
  for (double v : x) out.push_back({v, 0.0});
  return out;
}

std::vector<Point<Jet>> coded_orbit(const FamilyHandle& h, const SymbolWord& word,
                                    std::span<const double> a0, int order) {
  const auto& c = h.construction();
  const auto guess = coded_orbit_guess(c, word);
  auto orbit = continue_periodic_orbit(h, guess, a0, order);
  const std::size_t p = word.depth();
  for (std::size_t j = 0; j < p; ++j) {
    const auto want = c.region_index(word.letters[p - 1 - j]);
    const auto got = c.branch_at(orbit[j].x.value());
    if (!got || *got != want) throw InvariantError("coded orbit left its strip");
  }
  return orbit;
}

Point<Jet> continue_coded_orbit(const FamilyHandle& h, const SymbolWord& word,
                                std::span<const double> a0, int order) {
  return coded_orbit(h, word, a0, order).front();
}

HyperbolicPointData continue_fixed_point(const FamilyHandle& h, const PlanePoint& guess,
                                         std::span<const double> a0, int order) {
  const std::vector<PlanePoint> g{guess};
  HyperbolicPointData out;
  out.location = continue_periodic_orbit(h, g, a0, order).front();
  out.parameter.assign(a0.begin(), a0.end());
  const auto aj = parameter_jets(a0, order);
  const auto J = jacobian(h, out.location, aj, 1);
  const auto& m = J.first;
  const Jet tr = m[0][0] + m[1][1];
  const Jet det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
  const Jet disc = tr * tr * 0.25 - det;
  if (disc.value() <= 0.0) throw InvariantError("fixed point has non-real or double multipliers");
  const Jet root = sqrt(disc);
  // larger root without cancellation, the other from the determinant
  const Jet e1 = tr.value() >= 0.0 ? tr * 0.5 + root : tr * 0.5 - root;
  const Jet e2 = det / e1;
  if (std::abs(e1.value()) <= 1.0 + 1e-6 || std::abs(e2.value()) >= 1.0 - 1e-6)
    throw InvariantError("fixed point is not a hyperbolic saddle");
  out.unstable_multiplier = e1;
  out.stable_multiplier = e2;

  auto eigvec = [&](const Jet& mu, bool unstable) {
    std::array<Jet, 2> v1{m[0][1], mu - m[0][0]};
    std::array<Jet, 2> v2{mu - m[1][1], m[1][0]};
    auto norm0 = [](const std::array<Jet, 2>& v) { return std::hypot(v[0].value(), v[1].value()); };
    std::array<Jet, 2> v = norm0(v1) >= norm0(v2) ? v1 : v2;
    const Jet n = sqrt(v[0] * v[0] + v[1] * v[1]);
    v[0] = v[0] / n;
    v[1] = v[1] / n;
    // unstable: x component positive; stable: y component positive
    const double lead = unstable ? v[0].value() : v[1].value();
    const double other = unstable ? v[1].value() : v[0].value();
    if (lead < 0.0 || (lead == 0.0 && other < 0.0)) {
      v[0] = -v[0];
      v[1] = -v[1];
    }
    return v;
  };
  out.unstable_direction = eigvec(e1, true);
  out.stable_direction = eigvec(e2, false);
  return out;
}

// ---- graph transform ---------------------------------------------------------------

static GraphPiece push_unstable_piece_impl(const FamilyHandle& h, std::span<const double> a0,
                                    const GraphPiece& src, const Point<Jet>& dst_center,
                                    int degree, double half_width,
                                    std::vector<double>* preimages) {
  const auto& sp = src.center.x.space();
  const auto aj = parameter_jets(a0, sp->order());
  const GraphFitter fitter(degree, half_width);
  const PlanePoint c0 = value_point(src.center);
  const auto J = jacobian_value<double>(h, c0, a0);
  const double g1 = src.slope(0.0);
  const double along = J.m[0][0] + J.m[0][1] * g1;
  const double y0 = src.offset(0.0);
  const auto img0 = h.eval<double>({c0.x, c0.y + y0}, a0);

  std::vector<Jet> values;
  for (double t : fitter.nodes()) {
    auto residual = [&](const auto& s) {
      using S = std::decay_t<decltype(s)>;
      const auto a = params_as<S>(a0, aj, s);
      const Point<S> q{lift(src.center.x, s) + s, lift(src.center.y, s) + src.offset(s)};
      const Point<S> img = h.eval<S>(q, std::span<const S>(a));
      return reduce_circle(img.x - lift(dst_center.x, s) - t);
    };
    const double s0 = reduce_circle(dst_center.x.value() + t - img0.x) / along;
    const Jet s = solve_scalar(residual, s0, sp);
    if (preimages) preimages->push_back(reduce_circle(c0.x + s.value()));
    const Point<Jet> q{src.center.x + s, src.center.y + src.offset(s)};
    const Point<Jet> img = h.eval<Jet>(q, std::span<const Jet>(aj));
    values.push_back(img.y - dst_center.y);
  }
  GraphPiece out;
  out.center = dst_center;
  out.half_width = half_width;
  out.coeffs = fitter.fit(values);
  return out;
}

GraphPiece push_unstable_piece(const FamilyHandle& h, std::span<const double> a0,
                               const GraphPiece& src, const Point<Jet>& dst_center, int degree,
                               double half_width) {
  return push_unstable_piece_impl(h, a0, src, dst_center, degree, half_width, nullptr);
}

GraphPiece pull_stable_piece(const FamilyHandle& h, std::span<const double> a0,
                             const GraphPiece& dst, const Point<Jet>& src_center, int degree,
                             double half_width) {
  const auto& sp = src_center.x.space();
  const auto aj = parameter_jets(a0, sp->order());
  const GraphFitter fitter(degree, half_width);
  const PlanePoint c0 = value_point(src_center);

  std::vector<Jet> values;
  for (double t : fitter.nodes()) {
    auto residual = [&](const auto& s) {
      using S = std::decay_t<decltype(s)>;
      const auto a = params_as<S>(a0, aj, s);
      const Point<S> q{lift(src_center.x, s) + s, lift(src_center.y, s) + t};
      const Point<S> img = h.eval<S>(q, std::span<const S>(a));
      const S v = img.y - lift(dst.center.y, s);
      return reduce_circle(img.x - lift(dst.center.x, s) - dst.offset(v));
    };
    const auto J = jacobian_value<double>(h, PlanePoint{c0.x, c0.y + t}, a0);
    const double v0 = J.value.y - dst.center.y.value();
    const double g = reduce_circle(J.value.x - dst.center.x.value() - dst.offset(v0));
    const double along = J.m[0][0] - dst.slope(v0) * J.m[1][0];
    const Jet s = solve_scalar(residual, -g / along, sp);
    values.push_back(s);
  }
  GraphPiece out;
  out.center = src_center;
  out.half_width = half_width;
  out.coeffs = fitter.fit(values);
  return out;
}

namespace {

LocalManifold run_graph_transform(const FamilyHandle& h, const std::vector<Point<Jet>>& orbit,
                                  ManifoldSide side, std::span<const double> a0,
                                  const GraphTransformOptions& opts) {
  double hw = opts.half_width;
  for (int attempt = 0; attempt < 5; ++attempt, hw *= 0.5) {
    LocalManifold m;
    m.side = side;
    m.parameter.assign(a0.begin(), a0.end());
    const std::size_t p = orbit.size();
    for (const auto& z : orbit) m.pieces.push_back(zero_piece(z, opts.degree, hw));
    double last_change = INFINITY;
    int growth = 0;
    bool converged = false;
    for (int sweep = 1; sweep <= opts.max_iterations; ++sweep) {
      double change = 0.0;
      if (side == ManifoldSide::unstable) {
        for (std::size_t j = 0; j < p; ++j) {
          const std::size_t nj = (j + 1) % p;
          GraphPiece next =
              push_unstable_piece(h, a0, m.pieces[j], orbit[nj], opts.degree, hw);
          change = std::max(change, piece_change(next, m.pieces[nj]));
          m.pieces[nj] = std::move(next);
        }
      } else {
        for (std::size_t j = p; j-- > 0;) {
          const std::size_t nj = (j + 1) % p;
          GraphPiece prev = pull_stable_piece(h, a0, m.pieces[nj], orbit[j], opts.degree, hw);
          change = std::max(change, piece_change(prev, m.pieces[j]));
          m.pieces[j] = std::move(prev);
        }
      }
      m.iterations = sweep;
      if (!std::isfinite(change)) throw ConvergenceError("graph transform produced non-finite graph");
      if (change <= opts.tolerance) {
        converged = true;
        break;
      }
      growth = change > last_change ? growth + 1 : 0;
      if (growth >= 10) throw ConvergenceError("graph transform is not contracting");
      last_change = change;
    }
    if (!converged) throw ConvergenceError("graph transform did not converge");
    if (conjugation_residual(h, m) <= opts.residual_tolerance) return m;
  }
  throw InvariantError("graph transform residual too large even on a shrunken chart");
}

}  // namespace

LocalManifold graph_transform_manifold(const FamilyHandle& h, const HyperbolicPointData& base,
                                       ManifoldSide side, const GraphTransformOptions& opts) {
  if (std::abs(base.stable_multiplier.value()) > 0.95 ||
      std::abs(base.unstable_multiplier.value()) < 1.05)
    throw InvariantError("hyperbolicity margin below 0.05");
  const std::vector<Point<Jet>> orbit{base.location};
  return run_graph_transform(h, orbit, side, base.parameter, opts);
}

LocalManifold graph_transform_manifold(const FamilyHandle& h, const SymbolWord& word,
                                       ManifoldSide side, std::span<const double> a0, int order,
                                       const GraphTransformOptions& opts) {
  const auto orbit = coded_orbit(h, word, a0, order);
  return run_graph_transform(h, orbit, side, a0, opts);
}

double conjugation_residual(const FamilyHandle& h, const LocalManifold& m, int samples) {
  const auto& sp = m.pieces.front().center.x.space();
  const auto aj = parameter_jets(m.parameter, sp->order());
  const std::size_t p = m.pieces.size();
  double worst = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    const GraphPiece& cur = m.pieces[j];
    const GraphPiece& next = m.pieces[(j + 1) % p];
    const auto J = jacobian_value<double>(h, value_point(cur.center), std::span<const double>(m.parameter));
    // unstable pieces are stretched by the map, stable ones by its inverse
    double span_t = cur.half_width;
    if (m.side == ManifoldSide::unstable) span_t /= std::max(1.0, std::abs(J.m[0][0]));
    for (int i = 0; i < samples; ++i) {
      const double t = span_t * (2.0 * i / (samples - 1) - 1.0);
      const Jet tj = Jet::constant(sp, t);
      Point<Jet> q;
      if (m.side == ManifoldSide::unstable)
        q = {cur.center.x + t, cur.center.y + cur.offset(tj)};
      else
        q = {cur.center.x + cur.offset(tj), cur.center.y + t};
      const Point<Jet> img = h.eval<Jet>(q, std::span<const Jet>(aj));
      if (m.side == ManifoldSide::unstable) {
        const Jet u = reduce_circle(img.x - next.center.x);
        if (std::abs(u.value()) > next.half_width) continue;
        worst = std::max(worst, (img.y - next.center.y - next.offset(u)).max_abs());
      } else {
        const Jet v = img.y - next.center.y;
        if (std::abs(v.value()) > next.half_width) continue;
        worst = std::max(worst, reduce_circle(img.x - next.center.x - next.offset(v)).max_abs());
      }
    }
  }
  return worst;
}

double dissipation_margin(const HyperbolicPointData& p, int d) {
  return 1.0 - std::abs(p.stable_multiplier.value()) *
                   std::pow(std::abs(p.unstable_multiplier.value()), d - 1);
}

// ---- line fields -------------------------------------------------------------------------

namespace {

// Pull the vertical slope back through Jacobians J[n-1], ..., J[0].
template <class M, class S>
S pull_slope(const std::vector<M>& jac, std::size_t n, S s) {
  for (std::size_t i = n; i-- > 0;) {
    const auto& m = jac[i];
    const S wx = s * m[1][1] - m[0][1];
    const S wy = m[0][0] - s * m[1][0];
    s = wx / wy;
  }
  return s;
}

}  // namespace

LineSample stable_line(const FamilyHandle& h, const PlanePoint& z, std::span<const double> a0,
                       int order, int max_steps, double tolerance) {
  using Mat = std::array<std::array<double, 2>, 2>;
  std::vector<Mat> jac;
  PlanePoint cur = z;
  auto extend = [&](std::size_t n) {
    while (jac.size() < n) {
      const auto J = jacobian_value<double>(h, cur, a0);
      jac.push_back(J.m);
      cur = {reduce_circle(J.value.x), J.value.y};
    }
  };
  std::size_t n = 1;
  extend(n);
  double prev = pull_slope(jac, n, 0.0);
  bool converged = false;
  while (static_cast<int>(n) < max_steps) {
    const std::size_t next = std::min<std::size_t>(2 * n, static_cast<std::size_t>(max_steps));
    extend(next);
    const double s = pull_slope(jac, next, 0.0);
    if (!std::isfinite(s)) throw ConvergenceError("line field pull-back degenerated");
    const bool done = std::abs(s - prev) <= tolerance;
    n = next;
    prev = s;
    if (done) {
      converged = true;
      break;
    }
  }
  if (!converged) throw ConvergenceError("line field did not converge within the step budget");

  LineSample out;
  out.z = z;
  out.steps = static_cast<int>(n);
  const auto aj = parameter_jets(a0, order);
  const auto& sp = aj.front().space();
  using JMat = std::array<std::array<Jet, 2>, 2>;
  std::vector<JMat> jj;
  Point<Jet> zj{Jet::constant(sp, z.x), Jet::constant(sp, z.y)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto J = jacobian(h, zj, aj, 1);
    jj.push_back(J.first);
    zj = {reduce_circle(J.value.x), J.value.y};
  }
  out.slope = pull_slope(jj, n, Jet(sp));
  return out;
}

LineField invariant_line_field(const FamilyHandle& h, const HyperbolicPointData& saddle,
                               const ChartBox& box, int order) {
  if (dissipation_margin(saddle, h.construction().d()) <= 0.0)
    throw InvariantError("dissipation condition |lambda| |sigma|^(d-1) < 1 fails");
  if (box.nx < 1 || box.ny < 1) throw DimensionError("line field grid needs at least one point");
  LineField out;
  for (int i = 0; i < box.nx; ++i)
    for (int j = 0; j < box.ny; ++j) {
      const double fx = box.nx == 1 ? 0.5 : static_cast<double>(i) / (box.nx - 1);
      const double fy = box.ny == 1 ? 0.5 : static_cast<double>(j) / (box.ny - 1);
      const PlanePoint z{box.lo.x + fx * (box.hi.x - box.lo.x), box.lo.y + fy * (box.hi.y - box.lo.y)};
      out.samples.push_back(stable_line(h, z, saddle.parameter, order));
    }
  return out;
}

double line_field_residual(const FamilyHandle& h, const LineField& field,
                           std::span<const double> a0) {
  double worst = 0.0;
  for (const auto& s : field.samples) {
    const auto J = jacobian_value<double>(h, s.z, a0);
    const double ex = s.slope.value(), ey = 1.0;
    const double vx = J.m[0][0] * ex + J.m[0][1] * ey;
    const double vy = J.m[1][0] * ex + J.m[1][1] * ey;
    const PlanePoint fz{reduce_circle(J.value.x), J.value.y};
    const double s2 = stable_line(h, fz, a0, 0).slope.value();
    const double cross = vx * 1.0 - vy * s2;
    const double dot = vx * s2 + vy * 1.0;
    double ang = std::abs(std::atan2(cross, dot));
    ang = std::min(ang, std::numbers::pi - ang);
    worst = std::max(worst, ang);
  }
  return worst;
}

// ---- inclination -------------------------------------------------------------------------

InclinationReport inclination_test(const FamilyHandle& h, const GraphPiece& seed,
                                   const SymbolWord& word, int n, std::span<const double> a0,
                                   int order, const GraphTransformOptions& opts) {
  const auto& c = h.construction();
  const LocalManifold target =
      graph_transform_manifold(h, word, ManifoldSide::unstable, a0, order, opts);
  const std::size_t p = word.depth();
  auto strip_of = [&](std::size_t j) { return c.region_index(word.letters[p - 1 - j]); };
  const auto start = c.branch_at(seed.center.x.value());
  if (!start || *start != strip_of(0)) throw DomainError("seed is not centred in the word's strip");

  InclinationReport rep;
  GraphPiece cur = seed;
  const double hw = target.base().half_width;
  for (int step = 0; step < n; ++step) {
    const std::size_t j = static_cast<std::size_t>(step) % p;
    const std::size_t nj = (j + 1) % p;
    std::vector<double> pre;
    cur = push_unstable_piece_impl(h, a0, cur, target.pieces[nj].center, opts.degree, hw, &pre);
    for (double x : pre) {
      const auto r = c.branch_at(x);
      if (!r || *r != strip_of(j)) throw DomainError("seed leaves the region table");
    }
    const GraphPiece& tgt = target.pieces[nj];
    double c0 = 0.0, c1 = 0.0, jd = 0.0;
    for (int i = 0; i <= 20; ++i) {
      const Jet t = Jet::constant(cur.center.x.space(), hw * (i / 10.0 - 1.0));
      const Jet dv = cur.offset(t) - tgt.offset(t);
      const Jet ds = cur.slope(t) - tgt.slope(t);
      c0 = std::max(c0, std::abs(dv.value()));
      c1 = std::max(c1, std::abs(ds.value()));
      jd = std::max({jd, dv.max_abs(), ds.max_abs()});
    }
    rep.c0.push_back(c0);
    rep.c1.push_back(c1);
    rep.jet.push_back(jd);
  }
  return rep;
}

// ---- adapted chart ---------------------------------------------------------------------

AdaptedChart::AdaptedChart(const LocalManifold& stable, const LocalManifold& unstable) {
  if (stable.side != ManifoldSide::stable || unstable.side != ManifoldSide::unstable)
    throw DimensionError("adapted chart needs a stable and an unstable manifold");
  if (stable.pieces.size() != 1 || unstable.pieces.size() != 1)
    throw DimensionError("adapted chart is built at a fixed point");
  base_ = stable.base().center;
  stable_ = stable.base();
  unstable_ = unstable.base();
  half_width_ = std::min(stable_.half_width, unstable_.half_width);
}

}  // namespace parablend
