#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "parablend/paratangency.hpp"
#include "support/random_parabola.hpp"

using namespace parablend;

namespace {

FamilyHandle model(int k, int d, double eps) {
  ConstructionParams p;
  p.kind = ConstructionKind::base;
  p.k = k;
  p.d = d;
  p.epsilon = eps;
  return FamilyHandle(p);
}

Jet poly1(std::vector<double> taylor) {
  const auto sp = JetSpace::get(1, static_cast<int>(taylor.size()) - 1);
  return Jet(sp, std::move(taylor));
}

// 2t^2 + shift(a), shift given by Taylor coefficients around 0
ParabolaFamily shifted_square(std::vector<double> shift) {
  const int order = static_cast<int>(shift.size()) - 1;
  return ParabolaFamily::polynomial(
      1, {-1.0, 1.0}, {poly1(shift), poly1(std::vector<double>(shift.size(), 0.0)),
                       Jet(JetSpace::get(1, order), [&] {
                         std::vector<double> c(shift.size(), 0.0);
                         c[0] = 2.0;
                         return c;
                       }())});
}

// Golden-section minimum of t -> f(t) on [lo, hi].
template <class F>
double golden_min(F&& f, double lo, double hi) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < 200 && b - a > 1e-15; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return std::min(fc, fd);
}

const std::vector<double> kZero{0.0};

}  // namespace

TEST(MinGammaJet, LinearShiftGivesItsSlope) {
  const double c = 0.37;
  const auto p = shifted_square({0.0, c, 0.0});
  const MinJet m = min_gamma_jet(p, kZero, 2);
  EXPECT_NEAR(m.c, 0.0, 1e-15);
  EXPECT_NEAR(m.derivative(0), 0.0, 1e-15);
  EXPECT_NEAR(m.derivative(1), c, 1e-15);
  EXPECT_NEAR(m.derivative(2), 0.0, 1e-14);
}

TEST(MinGammaJet, MovingVertexSymbolicMinimum) {
  // 2 (t - a)^2 + a^2 has minimum a^2
  auto f = [](const auto& t, auto a) {
    const auto s = t - a[0];
    return s * s * 2.0 + a[0] * a[0];
  };
  const auto p = ParabolaFamily::analytic(1, {-1.0, 1.0}, f);
  const MinJet m = min_gamma_jet(p, kZero, 2);
  EXPECT_NEAR(m.m.coeff(0), 0.0, 1e-15);
  EXPECT_NEAR(m.m.coeff(1), 0.0, 1e-15);
  EXPECT_NEAR(m.m.coeff(2), 1.0, 1e-14);
}

TEST(MinGammaJet, EnvelopeMatchesFiniteDifferencesOfMinimizedValues) {
  auto f = [](const auto& t, auto a) {
    using std::sin;
    const auto& x = a[0];
    return t * t * 2.0 + t * x * 0.3 + t * t * t * sin(x) * 0.1 + x * x * 0.05 + x * 0.2 +
           t * 0.1;
  };
  const auto p = ParabolaFamily::analytic(1, {-1.0, 1.0}, f);
  for (double a0 : {-0.3, 0.0, 0.25}) {
    const std::vector<double> av{a0};
    const MinJet m = min_gamma_jet(p, av, 2);
    auto minval = [&](double a) {
      const std::vector<double> aa{a};
      return golden_min([&](double t) { return f(t, std::span<const double>(aa)); }, -1.0, 1.0);
    };
    const double h = 1e-3;
    const double fp = minval(a0 + h), f0 = minval(a0), fm = minval(a0 - h);
    const double d1 = (fp - fm) / (2 * h), d2 = (fp - 2 * f0 + fm) / (h * h);
    EXPECT_NEAR(m.derivative(0), f0, 1e-14);
    EXPECT_LE(std::abs(m.derivative(1) - d1), 1e-5 * std::abs(d1));
    EXPECT_LE(std::abs(m.derivative(2) - d2), 1e-5 * std::abs(d2));
  }
}

TEST(MinGammaJet, BoundaryMinimumIsRejected) {
  const auto p = ParabolaFamily::polynomial(1, {0.5, 1.0}, {poly1({0.0}), poly1({0.0}), poly1({2.0})});
  EXPECT_THROW(min_gamma_jet(p, kZero, 1), DomainError);
}

TEST(ParabolaPreimage, ModelRecursionIsExact) {
  std::mt19937_64 rng(41);
  for (int d : {0, 1, 2}) {
    const double eps = 0.08;
    const auto h = model(1, d, eps);
    for (int trial = 0; trial < 10; ++trial) {
      const auto p = testkit::admissible_parabola(1, d, eps, h.construction().mu(), kZero, rng);
      const MinJet m = min_gamma_jet(p, kZero, d);
      const Letter delta = greedy_step(m, eps);
      const auto q = parabola_preimage(h, p, delta, kZero);
      const MinJet mq = min_gamma_jet(q, kZero, d);
      EXPECT_NEAR(mq.derivative(0), 1.5 * (m.derivative(0) - delta.sign(0) / 3.0), 1e-14);
      for (int i = 1; i <= d; ++i)
        EXPECT_NEAR(mq.derivative(static_cast<std::size_t>(i)),
                    1.5 * (m.derivative(static_cast<std::size_t>(i)) - eps * delta.sign(i)), 1e-14);
    }
  }
}

TEST(ParabolaPreimage, VertexAtZeroMovesToMinusOneHalf) {
  const auto h = model(1, 1, 0.05);
  const auto p = shifted_square({0.0, 0.0});
  const auto q = parabola_preimage(h, p, Letter::parse("++"), kZero);
  EXPECT_NEAR(min_gamma_jet(q, kZero, 1).derivative(0), -0.5, 1e-15);
}

TEST(ParabolaPreimage, EndpointsStayAboveThreeHalvesAndCurvatureGrows) {
  const auto h = model(1, 1, 0.05);
  const double mu = h.construction().mu();
  ParabolaFamily p = shifted_square({0.1, 0.02});
  for (const char* s : {"++", "-+", "--", "+-", "++"}) {
    const auto q = parabola_preimage(h, p, Letter::parse(s), kZero);
    const auto cert = q.certify(kZero, mu);
    EXPECT_TRUE(cert.ok) << cert.violated;
    EXPECT_GE(std::min(cert.endpoint_lo, cert.endpoint_hi), 1.5);
    EXPECT_NEAR(std::max(cert.endpoint_lo, cert.endpoint_hi), 1.5 + mu, 1e-9);
    EXPECT_GE(cert.curvature, 1.5 * p.certify(kZero, mu).curvature * (1 - 1e-12));
    EXPECT_NEAR(q.chart().scale, p.chart().scale / h.construction().expansion(), 1e-300);
    p = q;
  }
}

TEST(ParabolaPreimage, SampledAgreesWithModel) {
  std::mt19937_64 rng(42);
  const double eps = 0.1;
  const auto h = model(1, 1, eps);
  for (int trial = 0; trial < 4; ++trial) {
    const auto p = testkit::admissible_parabola(1, 1, eps, h.construction().mu(), kZero, rng);
    const Letter delta = greedy_step(min_gamma_jet(p, kZero, 1), eps);
    const auto exact = model_preimage(h.construction(), p, delta, kZero);
    const auto pointwise = sampled_preimage(h, p, delta, kZero, 1);
    const MinJet a = min_gamma_jet(exact, kZero, 1);
    const MinJet b = min_gamma_jet(pointwise, kZero, 1);
    EXPECT_LE((a.m - b.m).max_abs(), 1e-10);
    EXPECT_NEAR(exact.domain().lo, pointwise.domain().lo, 1e-9);
    EXPECT_NEAR(exact.domain().hi, pointwise.domain().hi, 1e-9);
  }
}

TEST(ParabolaFamily, SampledReproducesPolynomial) {
  std::mt19937_64 rng(43);
  const auto p = testkit::random_parabola(2, 2, 0.1, rng);
  const std::vector<double> a0{0.1, -0.2};
  const auto s = ParabolaFamily::sampled(p, a0, 2);
  EXPECT_EQ(s.kind(), ParabolaFamily::Kind::sampled);
  EXPECT_LE((min_gamma_jet(p, a0, 2).m - min_gamma_jet(s, a0, 2).m).max_abs(), 1e-12);
}

TEST(GreedyStep, SignReadout) {
  const double eps = 0.05;
  MinJet m;
  m.m = Jet(JetSpace::get(1, 2), {0.5, eps, -eps / 2.0});
  EXPECT_EQ(greedy_step(m, eps), Letter::parse("++-"));
  m.m = Jet(JetSpace::get(1, 2), {0.0, 0.0, -eps / 2.0});
  EXPECT_EQ(greedy_step(m, eps), Letter::parse("++-"));
}

TEST(GreedyStep, ViolatedDaggerThrows) {
  MinJet m;
  m.m = Jet(JetSpace::get(1, 1), {0.7, 0.0});
  EXPECT_THROW(greedy_step(m, 0.05), InvariantError);
  m.m = Jet(JetSpace::get(1, 1), {0.1, 0.11});
  EXPECT_THROW(greedy_step(m, 0.05), InvariantError);
}

TEST(GreedyStep, ChainBoundsHoldForRandomDaggerJets) {
  // hand-rolled generator over the whole (dagger) box, k = 2, d = 2
  std::mt19937_64 rng(44);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double eps = 0.07;
  const auto sp = JetSpace::get(2, 2);
  for (int trial = 0; trial < 500; ++trial) {
    MinJet m;
    m.m = Jet(sp);
    m.m.set_coeff(0, (2.0 / 3.0) * u(rng) * 0.999999);
    for (std::size_t pos = 1; pos < sp->size(); ++pos)
      m.m.set_coeff(pos, 2.0 * eps * u(rng) / sp->factorial(pos));
    const Letter delta = greedy_step(m, eps);
    EXPECT_LE(std::abs(1.5 * (m.derivative(0) - delta.sign(0) / 3.0)), 0.5 + 1e-15);
    for (std::size_t pos = 1; pos < sp->size(); ++pos)
      EXPECT_LE(std::abs(1.5 * (m.derivative(pos) - eps * delta.sign(static_cast<int>(pos)))),
                1.5 * eps + 1e-15);
  }
}

TEST(GreedyCode, ConstantSquareWithZeroEpsilon) {
  const auto h = model(1, 1, 0.0);
  const auto p = shifted_square({0.0, 0.0});
  const auto trace = greedy_code(h, p, kZero, 20);
  ASSERT_EQ(trace.mins.size(), 21u);
  for (std::size_t i = 0; i < trace.mins.size(); ++i) {
    EXPECT_EQ(trace.mins[i].derivative(1), 0.0);
    EXPECT_GE(trace.margins[i].value, 1.0 / 6.0 - 1e-12);
  }
  EXPECT_TRUE(trace.charts_ok) << trace.chart_failure;
}

TEST(GreedyCode, WordReproducesTheMinimumThroughTheSeries) {
  std::mt19937_64 rng(45);
  const double eps = 0.1;
  const auto h = model(1, 1, eps);
  const auto p = testkit::admissible_parabola(1, 1, eps, h.construction().mu(), kZero, rng);
  const int N = 30;
  const auto trace = greedy_code(h, p, kZero, N);
  const double y = y_series(trace.word, eps, parameter_jets(kZero, 1)).value.value();
  EXPECT_LE(std::abs(y - min_gamma_jet(p, kZero, 1).derivative(0)), 2.0 * std::pow(2.0 / 3.0, N));
}

TEST(GreedyCode, DepthZeroIsEmpty) {
  const auto h = model(1, 1, 0.05);
  const auto trace = greedy_code(h, shifted_square({0.1, 0.0}), kZero, 0);
  EXPECT_TRUE(trace.word.empty());
  EXPECT_EQ(trace.mins.size(), 1u);
  EXPECT_EQ(trace.eta.max_abs(), 0.0);
}

TEST(GreedyCode, DaggerViolationAtStartReportsStep) {
  const auto h = model(1, 1, 0.05);
  try {
    (void)greedy_code(h, shifted_square({0.0, 0.2}), kZero, 3);
    FAIL() << "expected an invariant error";
  } catch (const InvariantError& e) {
    EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos);
  }
}

TEST(GreedyCode, RoughConstructionsAreRefused) {
  ConstructionParams p;
  p.kind = ConstructionKind::base;
  p.d = 1;
  p.smoothness = 1;
  EXPECT_THROW(FamilyHandle{p}, ConfigError);
}

TEST(EtaJet, ModelBoundAndVerdict) {
  std::mt19937_64 rng(46);
  for (int d : {0, 1, 2}) {
    const double eps = 0.05;
    const auto h = model(1, d, eps);
    const auto p = testkit::admissible_parabola(1, d, eps, h.construction().mu(), kZero, rng);
    const int N = 40;
    const auto trace = greedy_code(h, p, kZero, N, {0, 1, 1e-6});
    const double bound = 2.0 * std::max(2.0 / 3.0, 2.0 * eps) * std::pow(2.0 / 3.0, N);
    for (std::size_t pos = 0; pos < trace.eta.size(); ++pos)
      EXPECT_LE(std::abs(trace.eta.derivative_at(pos)), bound) << d << " " << pos;
    const std::vector<double> tol{default_paratangency_tolerance(N)};
    EXPECT_TRUE(paratangency_verdict(trace.eta, tol).all());
  }
}

TEST(EtaJet, FlippedLetterIsDetected) {
  const double eps = 0.05;
  const auto h = model(1, 1, eps);
  const auto p = shifted_square({0.05, 0.01});
  const int N = 40;
  const auto trace = greedy_code(h, p, kZero, N, {0, 1, 1e-6});
  for (std::size_t j : {0u, 3u, 8u}) {
    SymbolWord w = trace.word;
    w.letters[j] = w.letters[j].with_sign(0, -w.letters[j].sign(0));
    const Jet eta = eta_jet(h, p, w, kZero);
    EXPECT_GE(std::abs(eta.value()), 0.5 * std::pow(2.0 / 3.0, static_cast<double>(j) + 2.0));
  }
}

TEST(EtaJet, TangentByConstructionIsZero) {
  const double eps = 0.08;
  const auto h = model(1, 2, eps);
  const SymbolWord word = SymbolWord::parse("+-+,--+,+++");
  const SymbolWord longw = word.unrolled(word.depth() + 110);
  auto f = [longw, eps](const auto& t, auto a) {
    using S = std::decay_t<decltype(t)>;
    if constexpr (std::is_same_v<S, Jet>) {
      return t * t * 2.0 + y_series(longw, eps, a).value;
    } else {
      const auto sp = JetSpace::get(1, 0);
      const std::vector<Jet> aj{Jet::constant(sp, a[0])};
      return 2.0 * t * t + y_series(longw, eps, aj).value.value();
    }
  };
  const auto p = ParabolaFamily::analytic(1, {-1.0, 1.0}, f);
  const std::vector<double> a0{0.1};
  EXPECT_LE(eta_jet(h, p, word, a0).max_abs(), 1e-10);
}

TEST(Verdict, ZeroPassesAndLargeTopOrderFails) {
  const double tol = 1e-6;
  const std::vector<double> tv{tol};
  Jet z(JetSpace::get(1, 2));
  EXPECT_TRUE(paratangency_verdict(z, tv).all());
  z.set_coeff(2, 10.0 * tol / 2.0);  // derivative 10 tol
  const auto v = paratangency_verdict(z, tv);
  EXPECT_TRUE(v.pass[0]);
  EXPECT_TRUE(v.pass[1]);
  EXPECT_FALSE(v.pass[2]);
}

TEST(Verdict, AffineChartsDoNotChangeTheVerdict) {
  std::mt19937_64 rng(47);
  const double eps = 0.05;
  const auto h = model(1, 1, eps);
  const int N = 25;
  for (int trial = 0; trial < 3; ++trial) {
    const auto p = testkit::admissible_parabola(1, 1, eps, h.construction().mu(), kZero, rng);
    const auto trace = greedy_code(h, p, kZero, N, {0, 1, 1e-6});
    const std::vector<double> tol{default_paratangency_tolerance(N)};
    const bool base = paratangency_verdict(trace.eta, tol).all();
    const Jet y = y_series(trace.word.unrolled(N + 110), eps, parameter_jets(kZero, 1)).value;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      // parameter-independent chart applied to the parabola and to the
      // horizontal manifold; eta is the gap at the tangency
      AffineChart c = AffineChart::random(1, 0, 0.01, seed);
      AffineChart cj = AffineChart::identity(1, 1);
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) cj.linear[i][j].set_coeff(0, c.linear[i][j].value());
        cj.shift[i].set_coeff(0, c.shift[i].value());
      }
      const auto moved = image_under(p, cj, kZero);
      auto manifold_line = [&](const auto& x, auto a) {
        using S = std::decay_t<decltype(x)>;
        const double a00 = cj.linear[0][0].value(), a01 = cj.linear[0][1].value();
        const double a10 = cj.linear[1][0].value(), a11 = cj.linear[1][1].value();
        const double b0 = cj.shift[0].value(), b1 = cj.shift[1].value();
        if constexpr (std::is_same_v<S, Jet>) {
          const Jet yy = taylor_polynomial<Jet>(y, std::vector<Jet>{a[0] - 0.0}, unit_like(x));
          const Jet t = (x - b0 - yy * a01) / (1.0 + a00);
          return a10 * t + (1.0 + a11) * yy + b1;
        } else {
          const double yy = evaluate(y, std::vector<double>{a[0]});
          const double t = (x - b0 - a01 * yy) / (1.0 + a00);
          return a10 * t + (1.0 + a11) * yy + b1;
        }
      };
      auto gap = [&](const auto& x, auto a) { return moved.value(x, a) - manifold_line(x, a); };
      const auto g = ParabolaFamily::analytic(1, moved.domain(), gap);
      const Jet eta = min_gamma_jet(g, kZero, 1).m;
      EXPECT_EQ(paratangency_verdict(eta, tol).all(), base);
      EXPECT_LE((eta - trace.eta).max_abs(), 0.05 * tol[0]);
    }
  }
}

TEST(GreedyCode, SampledChartQuantifiersHoldOnTheModel) {
  std::mt19937_64 rng(48);
  const double eps = 0.1;
  const auto h = model(1, 1, eps);
  const auto p = testkit::admissible_parabola(1, 1, eps, h.construction().mu(), kZero, rng);
  const auto trace = greedy_code(h, p, kZero, 12);
  EXPECT_EQ(trace.sampled_charts, 8);
  EXPECT_TRUE(trace.charts_ok) << trace.chart_failure;
}

TEST(GreedyCode, PerturbedFamilyUsesPointwisePreimages) {
  const double eps = 0.1;
  FamilyHandle h = model(1, 1, eps);
  // a small vertical push localized on the strip of "++"
  const auto& reg = h.construction().regions()[h.construction().region_index(Letter::parse("++"))];
  AdditivePerturbation bump;
  bump.center = {0.5 * (reg.lo + reg.hi), 0.0};
  bump.radius = 0.06;
  bump.window = {{0.0}, 1.0};
  bump.amplitude = {Jet(JetSpace::get(1, 1)), Jet(JetSpace::get(1, 1), {1e-3, 5e-4})};
  h = h.push_perturbation(bump);
  const auto p = shifted_square({0.02, 0.01});
  const int N = 5;
  const auto trace = greedy_code(h, p, kZero, N, {0, 1, 1e-6});
  EXPECT_EQ(trace.word.depth(), static_cast<std::size_t>(N));
  for (const auto& m : trace.margins) EXPECT_TRUE(m.holds());
  const std::vector<double> tol{default_paratangency_tolerance(N)};
  EXPECT_TRUE(paratangency_verdict(trace.eta, tol).all());
  // the bump must have changed something
  const auto plain = greedy_code(model(1, 1, eps), p, kZero, N, {0, 1, 1e-6});
  EXPECT_GT((trace.mins.back().m - plain.mins.back().m).max_abs(), 1e-9);
}
