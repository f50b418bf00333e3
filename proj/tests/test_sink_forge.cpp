#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "parablend/sink_forge.hpp"

using namespace parablend;

namespace {

FamilyHandle coupled(int k = 1, int d = 1) {
  ConstructionParams p;
  p.kind = ConstructionKind::coupled;
  p.k = k;
  p.d = d;
  return FamilyHandle(p);
}

Jet taylor1(std::vector<double> c) {
  const auto sp = JetSpace::get(1, static_cast<int>(c.size()) - 1);
  return Jet(sp, std::move(c));
}

// Horizontal push of size amplitude(a) around the fold, window over all of [-2, 2].
FamilyHandle with_unfolding(const FamilyHandle& h, Jet amplitude) {
  AdditivePerturbation p;
  p.center = h.construction().fold_point();
  p.radius = 0.2;
  p.window = {{0.0}, 1.0};
  p.amplitude = {amplitude, amplitude * 0.0};
  return h.push_perturbation(p);
}

const std::vector<double> origin{0.0};

TangencyData model_tangency(const FamilyHandle& h, std::span<const double> a = origin,
                            TangencyOptions opts = {}) {
  return tangency_normal_form(h, coupled_tangency_guess(h.construction()), a, opts);
}

}  // namespace

// ---- normal form -------------------------------------------------------------------------

TEST(TangencyNormalForm, ModelTangencyIsExact) {
  const auto h = coupled();
  const auto td = model_tangency(h);
  EXPECT_EQ(td.critical_value0, 0);
  EXPECT_EQ(td.residual_value, 0.0);
  EXPECT_EQ(td.residual_slope, 0.0);
  EXPECT_LT(td.residual_height, 1e-15);
  EXPECT_EQ(td.steps(), 2);
  EXPECT_DOUBLE_EQ(td.homoclinic().x, 2.8125);
  EXPECT_EQ(td.prefold().x, 0.0);
  EXPECT_EQ(td.prefold().y, 0.0);
  EXPECT_LT(td.angle, 1e-12);
  EXPECT_EQ(td.critical_value.max_abs(), 0.0);
  EXPECT_EQ(td.primed_residual, 0.0);
}

TEST(TangencyNormalForm, CurvatureMatchesFoldScale) {
  const auto h = coupled();
  const auto td = model_tangency(h);
  // x image near the fold is 3 + fold (2 u^2 - y): second derivative 4 fold
  EXPECT_NEAR(td.curvature, 4.0 * h.construction().fold_scale(), 1e-9);
  EXPECT_NEAR(td.curvature, 1.0 / 512.0, 1e-9);
}

TEST(TangencyNormalForm, TransitionAgreesWithDirectMap) {
  const auto h = coupled();
  const auto td = model_tangency(h);
  const double fold = h.construction().fold_scale();
  for (double u : {-0.003, -0.001, 0.0, 0.002}) {
    // double loses the x offset to the circle's magnitude; quad does not
    const Point<quad> ab = transition(h, td, Point<quad>{u, 0}, origin);
    EXPECT_NEAR(static_cast<double>(ab.x), 2.0 * fold * u * u, 1e-25);
    EXPECT_NEAR(static_cast<double>(ab.y), u, 1e-25);
    const PlanePoint abd = transition(h, td, PlanePoint{u, 0.0}, origin);
    EXPECT_NEAR(abd.x, 2.0 * fold * u * u, 8.0 * std::numeric_limits<double>::epsilon());
  }
}

TEST(TangencyNormalForm, UnfoldingDerivativeMatchesFiniteDifference) {
  const auto h = with_unfolding(coupled(), taylor1({0.0, 1.0}));
  TangencyOptions loose;
  loose.residual_tolerance = 1.0;
  const auto td = model_tangency(h, origin, loose);
  const double step = 1e-4;
  const std::vector<double> lo{-step}, hi{step};
  const double c_lo = static_cast<double>(model_tangency(h, lo, loose).critical_value0);
  const double c_hi = static_cast<double>(model_tangency(h, hi, loose).critical_value0);
  EXPECT_NEAR(td.critical_value.derivative_at(1), (c_hi - c_lo) / (2.0 * step), 1e-8);
  EXPECT_NEAR(td.critical_value.derivative_at(1), 1.0, 1e-8);
}

TEST(TangencyNormalForm, TransversalAndMissingAreRefused) {
  const auto base = coupled();
  // curvature is positive: a negative critical value crosses W^s
  const auto crossing = with_unfolding(base, taylor1({-1e-3}));
  const auto missing = with_unfolding(base, taylor1({1e-3}));
  try {
    (void)model_tangency(crossing);
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("transversal"), std::string::npos);
  }
  try {
    (void)model_tangency(missing);
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("no tangency"), std::string::npos);
  }
}

TEST(TangencyNormalForm, WeakCurvatureIsNotQuadratic) {
  const auto h = coupled(1, 2);  // fold scale shrinks with d'
  EXPECT_THROW((void)model_tangency(h), InvariantError);
}

TEST(TangencyNormalForm, ManifoldChartsAreStraight) {
  const auto h = coupled();
  const auto td = model_tangency(h);
  for (const auto& c : td.saddle_chart.along) EXPECT_EQ(c.max_abs(), 0.0);
  for (const auto& c : td.saddle_chart.across) EXPECT_EQ(c.max_abs(), 0.0);
  const PlanePoint w = td.saddle_chart.to_chart(PlanePoint{2.9, 0.25});
  const PlanePoint z = td.saddle_chart.from_chart(w);
  EXPECT_NEAR(z.x, reduce_circle(2.9), 1e-15);
  EXPECT_NEAR(z.y, 0.25, 1e-15);
}

// ---- dissipation -------------------------------------------------------------------------

TEST(Dissipation, WorkedExamples) {
  const auto r = dissipation_check(16.0, std::pow(4.0, -9), 1);
  EXPECT_DOUBLE_EQ(r.determinant, 16.0 * std::pow(4.0, -9));
  EXPECT_DOUBLE_EQ(r.condition, std::pow(4.0, -9));
  EXPECT_TRUE(r.holds());
  const auto r2 = dissipation_check(16.0, std::pow(4.0, -9), 2);
  EXPECT_DOUBLE_EQ(r2.condition, 16.0 * std::pow(4.0, -9));
  EXPECT_TRUE(r2.holds());
}

TEST(Dissipation, ConservativeToyFails) {
  const auto r = dissipation_check(4.0, 0.25, 1);
  EXPECT_DOUBLE_EQ(r.determinant, 1.0);
  EXPECT_DOUBLE_EQ(r.determinant_margin, 0.0);
  EXPECT_FALSE(r.holds());
}

TEST(Dissipation, ModelSaddle) {
  const auto h = coupled();
  const auto td = model_tangency(h);
  const auto r = dissipation_check(td.saddle, 1);
  EXPECT_NEAR(r.determinant, 16.0 * std::pow(4.0, -9), 1e-18);
  EXPECT_TRUE(r.holds());
}

// ---- flatten -----------------------------------------------------------------------------

namespace {

FamilyHandle surrogate() { return with_unfolding(coupled(), taylor1({0.0, 0.0, 1e-3})); }

}  // namespace

TEST(Flatten, AlphaZeroIsLarge) {
  const auto h = surrogate();
  const auto td = model_tangency(h);
  EXPECT_GE(flatten_alpha_zero(h, td, h.construction().mu()), 0.125);
}

TEST(Flatten, RemovesCriticalValueInsideWindow) {
  const auto h = surrogate();
  const auto td = model_tangency(h);
  const double alpha = 1.0 / 16.0;
  const auto flat = flatten_perturbation(h, td, alpha);
  for (int i = -5; i <= 5; ++i) {
    const std::vector<double> a{alpha * i / 5.0};
    const auto after = model_tangency(flat, a);
    EXPECT_LE(std::abs(static_cast<double>(after.critical_value0)), 1e-7) << "a = " << a[0];
  }
}

TEST(Flatten, UntouchedOutsideWindowAndBall) {
  const auto h = surrogate();
  const auto td = model_tangency(h);
  const double alpha = 1.0 / 16.0;
  const auto flat = flatten_perturbation(h, td, alpha);
  for (double a : {-0.5, -2.0 * alpha, 2.0 * alpha, 0.3}) {
    const std::vector<double> av{a};
    for (const PlanePoint z : {PlanePoint{0.0, 0.0}, PlanePoint{0.01, -0.02}}) {
      const PlanePoint x = h.eval<double>(z, av), y = flat.eval<double>(z, av);
      EXPECT_EQ(x.x, y.x);
      EXPECT_EQ(x.y, y.y);
    }
  }
  const std::vector<double> inside{0.05};
  const PlanePoint far{td.prefold().x + 1.01 * td.ball_radius, 0.0};
  EXPECT_EQ(h.eval<double>(far, inside).x, flat.eval<double>(far, inside).x);
}

TEST(Flatten, NormScalesWithAlpha) {
  const auto h = surrogate();
  const auto td = model_tangency(h);
  std::vector<double> logs, norms;
  for (int e = 3; e <= 8; ++e) {
    const double alpha = std::ldexp(1.0, -e);
    logs.push_back(std::log(alpha));
    norms.push_back(std::log(windowed_parameter_norm(h, {{0.0}, alpha}, td.critical_value, 1)));
  }
  const double slope = (norms.back() - norms.front()) / (logs.back() - logs.front());
  EXPECT_GE(slope, 0.9);
}

TEST(Flatten, AlphaAboveAlphaZeroThrows) {
  const auto h = surrogate();
  const auto td = model_tangency(h);
  const double a0 = flatten_alpha_zero(h, td, h.construction().mu());
  EXPECT_THROW((void)flatten_perturbation(h, td, 2.0 * a0), DomainError);
  EXPECT_THROW((void)flatten_perturbation(h, td, 0.0), ConfigError);
}

// ---- foliation shift and the sink ---------------------------------------------------------

TEST(FoliationShift, ShrinksLikeSigmaToTheMinusN) {
  const auto h = coupled();
  const auto td = model_tangency(h);
  const double sigma = h.construction().expansion();
  for (int n : {2, 6, 12}) {
    const auto fs = foliation_shift(h, td, n);
    // -3 / sigma^(m + n), m = 1
    EXPECT_NEAR(static_cast<double>(fs.shift0), -3.0 * std::pow(sigma, -(n + 1)),
                1e-12 * std::pow(sigma, -(n + 1)));
  }
  EXPECT_THROW((void)foliation_shift(h, td, 0), ConfigError);
}

TEST(SinkTranslation, RefusesUnflattened) {
  const auto h = with_unfolding(coupled(), taylor1({0.0, 1e-3}));
  const auto td = model_tangency(h);
  EXPECT_THROW((void)sink_translation_perturbation(h, td, 1.0 / 16.0, 12), InvariantError);
}

TEST(SinkTranslation, RefusesSmallN) {
  const auto h = coupled();
  const auto td = model_tangency(h);
  EXPECT_THROW((void)sink_translation_perturbation(h, td, 1.0 / 16.0, 0), ConfigError);
}

namespace {

struct SinkSetup {
  FamilyHandle base = coupled();
  TangencyData td = model_tangency(base);
  FamilyHandle sunk = sink_translation_perturbation(base, td, 1.0 / 16.0, 12);
};

const SinkSetup& sink_setup() {
  static const SinkSetup s;
  return s;
}

std::vector<std::vector<double>> window_grid(double alpha, int count) {
  std::vector<std::vector<double>> g;
  for (int i = 0; i < count; ++i) g.push_back({alpha * (-1.0 + 2.0 * i / (count - 1))});
  return g;
}

}  // namespace

TEST(SinkTranslation, SinkOfPeriodFourteenAcrossWindow) {
  const auto& s = sink_setup();
  const SeedRegion seeds{s.td.homoclinic(), 1e-16, 1e-40};
  const auto grid = window_grid(1.0 / 16.0, 11);
  const auto sinks = detect_sinks(s.sunk, seeds, grid, 20);
  ASSERT_EQ(sinks.size(), grid.size());
  for (const auto& r : sinks) {
    EXPECT_EQ(r.period, 14);
    EXPECT_LT(std::abs(r.multipliers[0]), 1.0);
    EXPECT_LT(std::abs(r.multipliers[1]), 1.0);
  }
}

TEST(SinkTranslation, DeterminantIsMultiplierProduct) {
  const auto& s = sink_setup();
  const SeedRegion seeds{s.td.homoclinic(), 1e-16, 1e-40};
  const auto sinks = detect_sinks(s.sunk, seeds, window_grid(1.0 / 16.0, 3), 20);
  ASSERT_FALSE(sinks.empty());
  for (const auto& r : sinks) {
    const auto prod = r.multipliers[0] * r.multipliers[1];
    EXPECT_NEAR(prod.real(), r.determinant, 1e-8 * std::abs(r.determinant));
    EXPECT_NEAR(prod.imag(), 0.0, 1e-8 * std::abs(r.determinant));
  }
}

TEST(SinkTranslation, OrbitIsStableUnderLongIteration) {
  const auto& s = sink_setup();
  const SeedRegion seeds{s.td.homoclinic(), 1e-16, 1e-40, 1, 1};
  const auto sinks = detect_sinks(s.sunk, seeds, window_grid(1.0 / 32.0, 2), 20);
  ASSERT_FALSE(sinks.empty());
  for (const auto& r : sinks) {
    const std::vector<quad> a(r.parameter_lo.begin(), r.parameter_lo.end());
    Point<quad> z = r.orbit.front();
    for (int i = 0; i < 1000 * r.period; ++i) {
      const auto img = s.sunk.eval<quad>(z, std::span<const quad>(a));
      z = {reduce_circle(img.x), img.y};
    }
    EXPECT_LE(static_cast<double>(qabs(reduce_circle(z.x - r.orbit.front().x)) +
                                  qabs(z.y - r.orbit.front().y)),
              1e-6);
  }
}

TEST(SinkDetection, NoSinksNearSaddleOfDissipativeMap) {
  ConstructionParams p;
  p.kind = ConstructionKind::dissipative;
  const FamilyHandle h(p);
  const SeedRegion seeds{h.construction().saddle(), 0.05, 0.05, 3, 3};
  SinkSearchOptions opts;
  opts.max_steps = 2000;
  const auto grid = window_grid(0.5, 3);
  EXPECT_TRUE(detect_sinks(h, seeds, grid, 20, opts).empty());
}

TEST(SinkDetection, ExcludedStrip) {
  EXPECT_TRUE(in_excluded_strip(4.0));
  EXPECT_TRUE(in_excluded_strip(-2.0));
  EXPECT_FALSE(in_excluded_strip(3.0));
  EXPECT_FALSE(in_excluded_strip(0.0));
}

TEST(TrappingBox, CertifiesTranslatedSink) {
  const auto& s = sink_setup();
  const auto cert = trapping_box_check(s.sunk, s.td, 12, origin);
  EXPECT_TRUE(cert.ok) << cert.violation;
  EXPECT_TRUE(cert.maps_into);
  EXPECT_LT(cert.norm_bound, 0.5);
  EXPECT_LT(cert.max_norm, 1.0);
  ASSERT_TRUE(cert.sink.has_value());
  EXPECT_EQ(cert.sink->period, 14);
}

TEST(TrappingBox, UntranslatedMapHasNoTrappedSink) {
  const auto h = coupled();
  const auto td = model_tangency(h);
  EXPECT_FALSE(trapping_box_check(h, td, 12, origin).ok);
}

TEST(TrappingBox, RefusesZeroN) {
  const auto& s = sink_setup();
  EXPECT_THROW((void)trapping_box_check(s.sunk, s.td, 0, origin), ConfigError);
}

TEST(TrappingBox, ExplicitConstantTooSmallThrows) {
  const auto& s = sink_setup();
  TrappingOptions opts;
  opts.constant = 1e-3;
  EXPECT_THROW((void)trapping_box_check(s.sunk, s.td, 12, origin, opts), CertificationError);
}

TEST(TrappingBox, LowerLeftEntryMatchesOracle) {
  const auto& s = sink_setup();
  const auto cert = trapping_box_check(s.sunk, s.td, 12, origin);
  // d eta' / d xi = lambda^n sigma along the return: x moves by sigma at the
  // fold slope 1, y contracts by lambda for n saddle passes
  const double sigma = s.base.construction().expansion();
  const double lambda = s.base.construction().saddle_contraction();
  const double oracle = std::pow(lambda, 12) * sigma;
  EXPECT_NEAR(cert.max_entries[1][0], oracle, 1e-6 * oracle);

  // central difference of the return map's y coordinate in quad
  const quad p = 3 - quad(3) / 16;
  const quad h = 1e-20q;
  auto ret_y = [&](quad x) {
    Point<quad> z{reduce_circle(x), 0};
    const std::vector<quad> a{0};
    for (int i = 0; i < 14; ++i) {
      const auto img = s.sunk.eval<quad>(z, std::span<const quad>(a));
      z = {reduce_circle(img.x), img.y};
    }
    return z.y;
  };
  const double fd = static_cast<double>((ret_y(p + h) - ret_y(p - h)) / (2 * h));
  EXPECT_NEAR(fd, oracle, 1e-6 * oracle);
}

// ---- quasi-homoclinic snap ---------------------------------------------------------------

namespace {

GraphPiece flat_piece(double x, double y) {
  const auto sp = JetSpace::get(1, 2);
  return {{Jet::constant(sp, x), Jet::constant(sp, y)},
          {Jet::constant(sp, 0.0), Jet::constant(sp, 0.0), Jet::constant(sp, 0.0)},
          0.05};
}

}  // namespace

TEST(QuasiSnap, ZeroDistanceIsIdentity) {
  const auto h = coupled();
  const auto piece = flat_piece(2.9, 0.0);
  EXPECT_EQ(piece_distance(piece, piece, 0.05), 0.0);
  const auto snapped = quasi_snap_perturbation(h, piece, piece, origin, 0.05, 0.25);
  for (const PlanePoint z : {PlanePoint{2.9, 0.0}, PlanePoint{2.92, 0.01}}) {
    EXPECT_EQ(h.eval<double>(z, origin).x, snapped.eval<double>(z, origin).x);
    EXPECT_EQ(h.eval<double>(z, origin).y, snapped.eval<double>(z, origin).y);
  }
}

TEST(QuasiSnap, LiftsApproximationOntoLimit) {
  const auto h = coupled();
  const double gap = 1e-4;
  const auto approx = flat_piece(2.9, gap), limit = flat_piece(2.9, 0.0);
  EXPECT_NEAR(piece_distance(approx, limit, 0.05), gap, 1e-18);
  const auto snapped = quasi_snap_perturbation(h, approx, limit, origin, 0.05, 0.25);
  const PlanePoint on_approx{2.9, gap}, on_limit{2.9, 0.0};
  const PlanePoint got = snapped.eval<double>(on_approx, origin);
  const PlanePoint want = h.eval<double>(on_limit, origin);
  EXPECT_NEAR(got.x, want.x, 1e-15);
  EXPECT_NEAR(got.y, want.y, 1e-15);

  // the change is at most 2 dist U over the ball
  double change = 0.0, lipschitz = 0.0;
  for (int i = -4; i <= 4; ++i)
    for (int j = -4; j <= 4; ++j) {
      const PlanePoint z{2.9 + 0.01 * i, 0.01 * j};
      const PlanePoint a = h.eval<double>(z, origin), b = snapped.eval<double>(z, origin);
      change = std::max(change, std::hypot(reduce_circle(a.x - b.x), a.y - b.y));
      const auto J = jacobian_value<double>(h, Point<double>{z.x, z.y}, std::span<const double>(origin));
      for (const auto& row : J.m)
        for (double e : row) lipschitz = std::max(lipschitz, std::abs(e));
    }
  EXPECT_LE(change, 2.0 * gap * std::max(1.0, lipschitz));
}

TEST(QuasiSnap, FarPiecesRefused) {
  const auto h = coupled();
  EXPECT_THROW((void)quasi_snap_perturbation(h, flat_piece(2.9, 0.01), flat_piece(2.9, 0.0), origin,
                                             0.05, 0.25),
               DomainError);
}
