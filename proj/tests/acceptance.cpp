// Acceptance run: one PASS/FAIL line per criterion, tolerances pinned below.
// Exit status is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "parablend/hyperbolic.hpp"
#include "parablend/ifs_blender.hpp"
#include "parablend/paratangency.hpp"
#include "parablend/sink_forge.hpp"
#include "parablend/sweep.hpp"
#include "support/random_expr.hpp"
#include "support/random_parabola.hpp"

using namespace parablend;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void run(int id, const char* name, double time_limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs < time_limit_s;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  std::printf("%s criterion %d (%s): %s; %.2f s (limit %.0f s)\n", pass ? "PASS" : "FAIL", id, name,
              o.detail.c_str(), secs, time_limit_s);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// ---- 1 -----------------------------------------------------------------------------------

Outcome jets_vs_finite_differences() {
  constexpr double kStep = 1e-4;
  constexpr double kRelTol = 1e-6;
  std::mt19937_64 rng(1001);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  double worst = 0.0;
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 1 + trial % 2;
    const auto sp = JetSpace::get(k, 1);
    const auto expr = parablend::testing::RandomExpr::generate(rng, k, 3);
    std::vector<double> a0(static_cast<std::size_t>(k));
    for (auto& v : a0) v = u(rng);
    std::vector<Jet> a;
    for (int i = 0; i < k; ++i) a.push_back(Jet::variable(sp, i, a0[static_cast<std::size_t>(i)]));
    const Jet y = expr.eval<Jet>(a);
    for (int i = 0; i < k; ++i) {
      auto p = a0, m = a0;
      p[static_cast<std::size_t>(i)] += kStep;
      m[static_cast<std::size_t>(i)] -= kStep;
      const double fd = (expr.eval<double>(p) - expr.eval<double>(m)) / (2.0 * kStep);
      const double jet = y.derivative_at(static_cast<std::size_t>(i + 1));
      // relative to max(1, |fd|): an O(h^2) difference quotient has no relative accuracy near 0
      worst = std::max(worst, std::abs(jet - fd) / std::max(1.0, std::abs(fd)));
      ++checked;
    }
  }
  return {worst <= kRelTol, fmt("%.0f first derivatives, worst relative error %.2e <= 1e-6", checked, worst)};
}

// ---- 2 -----------------------------------------------------------------------------------

Outcome blender_interval() {
  ParablenderIfs f;
  f.k = 1;
  f.d = 0;
  f.epsilon = 0.0;
  const double bound = 2.0 * std::pow(2.0 / 3.0, 20) * (1.0 + 1e-12);
  const auto c = limit_set_cover(f, 20);
  bool ok = c.hausdorff_bound <= bound;
  double worst = 0.0;
  std::mt19937_64 rng(1002);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<BranchMap> maps;
    for (int s : {-1, 1}) {
      // shift change and wobble share the C1 budget 0.01
      maps.push_back({2.0 / 3.0, s / 3.0 + 0.005 * u(rng), 0.005 * u(rng), 3.0 * u(rng)});
    }
    worst = std::max(worst, limit_set_cover(maps, 20).hausdorff_bound);
  }
  ok = ok && worst <= 0.05;
  return {ok, fmt("unperturbed %.3e <= %.3e, worst of 5 perturbed %.3e <= 0.05", c.hausdorff_bound, bound, worst)};
}

// ---- 3 -----------------------------------------------------------------------------------

Outcome jet_coverage() {
  ParablenderIfs f;
  f.k = 1;
  f.d = 1;
  f.epsilon = 0.1;
  // box from the enumeration oracle (tests/oracles/ifs_coverage_oracle.out)
  const JetBox box{{-0.5, -0.15}, {0.5, 0.15}};
  const auto base = stream_jet_coverage(f, 14, box);
  std::mt19937_64 rng(1003);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  f.offsets.clear();
  for (std::size_t i = 0; i < f.letter_count(); ++i) f.offsets.push_back(0.005 * (u(rng) < 0 ? -1.0 : 1.0));
  const auto shifted = stream_jet_coverage(f, 14, box);
  return {base.covered && shifted.covered,
          std::string("N = 14 box +-0.5 x +-0.15: ") + (base.covered ? "certified" : "not certified") +
              ", with +-0.005 offsets: " + (shifted.covered ? "certified" : "not certified") +
              fmt(" (%.0f and %.0f words examined before every cell was covered)",
                  static_cast<double>(base.points_examined), static_cast<double>(shifted.points_examined))};
}

// ---- 4 -----------------------------------------------------------------------------------

Outcome greedy_paratangency() {
  constexpr int kDepth = 40;
  const double tol = 4.0 * std::pow(2.0 / 3.0, kDepth);
  const std::vector<double> a0{0.0};
  std::mt19937_64 rng(1004);
  int families = 0, failed = 0;
  double worst_eta = 0.0, min_value_margin = INFINITY, min_derivative_margin = INFINITY;
  for (int d : {0, 1, 2}) {
    ConstructionParams p;
    p.kind = ConstructionKind::base;
    p.d = d;
    p.epsilon = 0.05;
    const FamilyHandle h(p);
    const double eps = h.construction().epsilon();
    for (int trial = 0; trial < 100; ++trial) {
      const auto fam = testkit::admissible_parabola(1, d, eps, h.construction().mu(), a0, rng);
      GreedyOptions opts;
      opts.sampled_charts = 0;
      const auto trace = greedy_code(h, fam, a0, kDepth, opts);
      ++families;
      bool ok = true;
      for (std::size_t i = 0; i < trace.margins.size(); ++i) {
        const auto& m = trace.margins[i];
        ok = ok && m.holds();
        if (i == 0) continue;
        // after one step: |m_0| <= 3/2 * 1/3 and |d m| <= 3/2 eps
        min_value_margin = std::min(min_value_margin, m.value - (2.0 / 3.0 - 0.5));
        for (double dm : m.derivatives) min_derivative_margin = std::min(min_derivative_margin, dm - 0.5 * eps);
      }
      const auto verdict = paratangency_verdict(trace.eta, std::vector<double>{tol});
      for (double v : verdict.measured) worst_eta = std::max(worst_eta, v);
      if (!ok || !verdict.all()) ++failed;
    }
  }
  const double slack = -1e-15;
  const bool chain = min_value_margin >= slack && (min_derivative_margin >= slack || std::isinf(min_derivative_margin));
  return {failed == 0 && chain,
          fmt("%.0f families, %.0f failures, worst |eta| %.2e", families, failed, worst_eta) +
              fmt(" <= %.2e; chain slack value %.2e, derivative %.2e", tol, min_value_margin,
                  std::isinf(min_derivative_margin) ? 0.0 : min_derivative_margin)};
}

// ---- 5 -----------------------------------------------------------------------------------

Outcome graph_transform_vs_series() {
  ConstructionParams p;
  p.kind = ConstructionKind::base;
  p.k = 1;
  p.d = 1;
  p.epsilon = 0.05;
  const FamilyHandle h(p);
  const auto& c = h.construction();
  std::mt19937_64 rng(1005);
  std::uniform_int_distribution<int> len(1, 5);
  std::uniform_int_distribution<std::uint32_t> mask(0, (1u << (c.dprime() + 1)) - 1);
  const std::vector<double> a0{0.1};
  const auto aj = parameter_jets(a0, 1);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    SymbolWord w;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) w.letters.emplace_back(mask(rng), c.dprime() + 1);
    const auto m = graph_transform_manifold(h, w, ManifoldSide::unstable, a0, 1);
    // periodic word: one period of the series divided by 1 - (2/3)^p
    const Jet closed = y_series(w, c.epsilon(), aj).value / (1.0 - std::pow(2.0 / 3.0, n));
    worst = std::max(worst, (m.height() - closed).max_abs());
  }
  return {worst <= 1e-8, fmt("50 words, worst jet gap %.2e <= 1e-8", worst)};
}

// ---- 6 -----------------------------------------------------------------------------------

FamilyHandle coupled_handle() {
  ConstructionParams p;
  p.kind = ConstructionKind::coupled;
  p.k = 1;
  p.d = 1;
  return FamilyHandle(p);
}

// Unfolding a -> 1e-3 a^(d+1) pushed onto the model tangency.
FamilyHandle surrogate_unfolding(const FamilyHandle& h) {
  AdditivePerturbation p;
  p.center = h.construction().fold_point();
  p.radius = 0.2;
  p.window = {{0.0}, 1.0};
  const auto sp = JetSpace::get(1, 2);
  p.amplitude = {Jet(sp, {0.0, 0.0, 1e-3}), Jet(sp)};
  return h.push_perturbation(p);
}

Outcome flattening() {
  const FamilyHandle h = surrogate_unfolding(coupled_handle());
  const auto guess = coupled_tangency_guess(h.construction());
  const std::vector<double> a0{0.0};
  const auto td = tangency_normal_form(h, guess, a0);
  TangencyOptions loose;
  loose.residual_tolerance = 1.0;
  bool exact = true;
  double worst_residual = 0.0;
  std::vector<double> log_alpha, log_norm;
  const std::vector<PlanePoint> probes{{0.0, 0.0}, {0.003, 0.001}, {-0.05, 0.02}, {0.1, -0.1}};
  for (int e = 3; e <= 6; ++e) {
    const double alpha = std::ldexp(1.0, -e);
    const auto flat = flatten_perturbation(h, td, alpha);
    for (double a : {-2.0 * alpha, 2.0 * alpha, -2.0 * alpha - 0.01, 2.0 * alpha + 0.3, 0.9}) {
      const std::vector<double> av{a};
      for (const auto& z : probes) {
        const PlanePoint x = h.eval<double>(z, av), y = flat.eval<double>(z, av);
        exact = exact && x.x == y.x && x.y == y.y;
      }
    }
    for (int i = -5; i <= 5; ++i) {
      const std::vector<double> a{alpha * i / 6.0};
      worst_residual = std::max(
          worst_residual, std::abs(static_cast<double>(tangency_normal_form(flat, guess, a, loose).critical_value0)));
    }
    log_alpha.push_back(std::log(alpha));
    log_norm.push_back(std::log(windowed_parameter_norm(h, {a0, alpha}, td.critical_value, 1)));
  }
  // least-squares slope of log norm against log alpha
  const double n = static_cast<double>(log_alpha.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < log_alpha.size(); ++i) {
    sx += log_alpha[i];
    sy += log_norm[i];
    sxx += log_alpha[i] * log_alpha[i];
    sxy += log_alpha[i] * log_norm[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  bool decreasing = true;
  for (std::size_t i = 1; i < log_norm.size(); ++i) decreasing = decreasing && log_norm[i] < log_norm[i - 1];
  return {exact && worst_residual <= 1e-7 && decreasing && slope >= 0.9,
          std::string("bit-exact outside the window: ") + (exact ? "yes" : "no") +
              fmt(", worst residual %.2e <= 1e-7, log-slope %.3f >= 0.9", worst_residual, slope)};
}

// ---- 7 -----------------------------------------------------------------------------------

Outcome sink_creation() {
  const FamilyHandle base = coupled_handle();
  const auto guess = coupled_tangency_guess(base.construction());
  const std::vector<double> a0{0.0};
  const double alpha = 1.0 / 16.0;
  const int n = 12;
  const auto td = tangency_normal_form(base, guess, a0);
  const auto flat = flatten_perturbation(base, td, alpha);
  const auto td_flat = tangency_normal_form(flat, guess, a0);
  const auto sunk = sink_translation_perturbation(flat, td_flat, alpha, n);
  std::vector<std::vector<double>> grid;
  for (int i = -5; i <= 5; ++i) grid.push_back({alpha * i / 6.0});
  const auto sinks = detect_sinks(sunk, {td.homoclinic(), 1e-16, 1e-40}, grid, td.steps() + n + 6);
  int good = 0;
  bool avoid = true;
  for (const auto& a : grid) {
    bool found = false;
    for (const auto& s : sinks) {
      if (s.parameter_lo != a || s.period != td.steps() + n) continue;
      found = found || (std::abs(s.multipliers[0]) < 1.0 && std::abs(s.multipliers[1]) < 1.0);
      for (const auto& z : s.orbit) {
        // [3.5, 4.5] on the circle of length 6
        const double x = std::fmod(static_cast<double>(z.x) + 600.0, 6.0);
        avoid = avoid && !(x >= 3.5 && x <= 4.5);
      }
    }
    good += found ? 1 : 0;
  }
  int certified = 0;
  double worst_norm = 0.0;
  for (int i : {-4, -2, 0, 2, 4}) {
    const std::vector<double> a{alpha * i / 6.0};
    const auto cert = trapping_box_check(sunk, td_flat, n, a);
    certified += cert.ok ? 1 : 0;
    worst_norm = std::max(worst_norm, cert.max_norm);
  }
  return {good == 11 && certified == 5 && avoid,
          fmt("period-14 sinks at %.0f/11 grid points, trapping boxes %.0f/5 (worst N-norm %.3f)", good, certified,
              worst_norm) +
              (avoid ? ", orbits avoid [3.5, 4.5]" : ", an orbit enters [3.5, 4.5]")};
}

// ---- 8 -----------------------------------------------------------------------------------

Outcome dissipation_margins() {
  std::string detail;
  bool ok = true;
  for (int d : {1, 2, 3}) {
    ConstructionParams p;
    p.kind = ConstructionKind::dissipative;
    p.k = 1;
    p.d = d;
    const FamilyHandle h(p);
    const int dp = h.construction().dprime();
    const auto saddle = continue_fixed_point(h, h.construction().saddle(), std::vector<double>{0.0}, 1);
    const auto r = dissipation_check(saddle, d);
    const double want = std::pow(4.0, dp + 1) * std::pow(4.0, -(dp + 2) * (dp + 2));
    const bool this_ok = std::abs(r.determinant - want) <= 1e-12 * want && want < 1.0 && r.condition_margin > 0.0;
    ok = ok && this_ok;
    if (!detail.empty()) detail += "; ";
    detail += fmt("d = %.0f: det %.3e (want %.3e)", d, r.determinant, want) + fmt(", margin %.6f", r.condition_margin);
  }
  return {ok, detail};
}

// ---- 9 -----------------------------------------------------------------------------------

Outcome sweep_determinism() {
  SweepConfig cfg;  // k = 1, N = 3
  const auto first = run_sweep(cfg);
  const auto second = run_sweep(cfg);
  const bool identical = report_csv(first) == report_csv(second);
  const double reach = 2.0 * std::ldexp(1.0, -cfg.lattice_depth - 1);
  bool local = true, every_toggle_matters = true;
  for (std::size_t idx = 0; idx < first.lattice.size(); ++idx) {
    SweepConfig off = cfg;
    off.disabled_windows = {static_cast<int>(idx)};
    const auto rep = run_sweep(off);
    bool changed = false;
    for (std::size_t i = 0; i < rep.grid.size(); ++i) {
      if (rep.grid[i].sink_count == first.grid[i].sink_count) continue;
      changed = true;
      local = local && std::abs(rep.grid[i].point[0] - first.lattice[idx].point[0]) < reach;
    }
    every_toggle_matters = every_toggle_matters && changed;
  }
  return {identical && local && first.lattice.size() == 8,
          fmt("%.0f lattice points, CSV byte-identical: ", static_cast<double>(first.lattice.size())) +
              (identical ? "yes" : "no") + ", toggles local: " + (local ? "yes" : "no") +
              (every_toggle_matters ? "" : " (some toggle changed nothing)")};
}

// ---- 10 ----------------------------------------------------------------------------------

Outcome inclination() {
  constexpr double kFactor = 0.75;
  constexpr double kNoiseFloor = 1e-13;
  constexpr int kBurnIn = 3;
  ConstructionParams p;
  p.kind = ConstructionKind::base;
  p.k = 1;
  p.d = 1;
  p.epsilon = 0.05;
  const FamilyHandle h(p);
  const SymbolWord w = SymbolWord::parse("+-,-+,++");
  const std::vector<double> a0{0.2};
  const auto orbit = coded_orbit(h, w, a0, 1);
  std::mt19937_64 rng(1010);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst_ratio = 0.0;
  int seeds = 0;
  for (int trial = 0; trial < 20; ++trial) {
    GraphPiece seed;
    seed.center = orbit[0];
    seed.half_width = 0.2;
    const auto sp = orbit[0].x.space();
    // transversal: nonzero height offset and slope
    const double offset = 0.3 * (0.3 + 0.7 * std::abs(u(rng))) * (u(rng) < 0 ? -1 : 1);
    seed.coeffs = {Jet::constant(sp, offset), Jet::variable(sp, 0, u(rng)), Jet::constant(sp, 2.0 * u(rng)),
                   Jet(sp), Jet(sp), Jet(sp)};
    const auto rep = inclination_test(h, seed, w, 12, a0, 1);
    ++seeds;
    for (std::size_t i = kBurnIn + 1; i < rep.c0.size(); ++i) {
      const double prev = std::max(rep.c0[i - 1], rep.c1[i - 1]);
      const double cur = std::max(rep.c0[i], rep.c1[i]);
      if (prev <= kNoiseFloor) continue;
      worst_ratio = std::max(worst_ratio, cur / prev);
    }
  }
  return {worst_ratio <= kFactor, fmt("%.0f seeds, worst C1 decay ratio %.3f <= 0.75", seeds, worst_ratio)};
}

}  // namespace

int main() {
  run(1, "jet arithmetic", 5.0, jets_vs_finite_differences);
  run(2, "blender interval", 10.0, blender_interval);
  run(3, "parablender jet coverage", 60.0, jet_coverage);
  run(4, "greedy paratangency", 30.0, greedy_paratangency);
  run(5, "graph transform vs series", 60.0, graph_transform_vs_series);
  run(6, "flattening perturbation", 60.0, flattening);
  run(7, "sink creation", 120.0, sink_creation);
  run(8, "dissipation margins", 60.0, dissipation_margins);
  run(9, "sweep determinism and localization", 120.0, sweep_determinism);
  run(10, "inclination", 60.0, inclination);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures;
}
