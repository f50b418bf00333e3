// Command-line front end: coverage, paratangency, flattening, sink and sweep runs.
// Exit codes: 0 success, 2 certificate failure, 1 error.

#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "parablend/ifs_blender.hpp"
#include "parablend/paratangency.hpp"
#include "parablend/sink_forge.hpp"
#include "parablend/sweep.hpp"

using namespace parablend;

namespace {

constexpr int kCertificateFailure = 2;

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Flag values override the config file; unset flags leave it alone.
struct SweepFlags {
  std::string config;
  std::optional<int> d, k, lattice_depth, translation_depth, paratangency_depth, max_period, max_steps,
      coverage_threshold;
  std::optional<double> epsilon, mu, eta, alpha, grid_resolution, seed_half_x, seed_half_y;
  std::optional<std::uint64_t> seed;
  bool control = false;
  std::vector<int> disabled_windows;
  std::optional<std::string> csv_path, json_path, svg_path;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON config file");
    app->add_option("--d", d);
    app->add_option("--k", k);
    app->add_option("--epsilon", epsilon);
    app->add_option("--mu", mu);
    app->add_option("--eta", eta);
    app->add_option("--lattice_depth", lattice_depth);
    app->add_option("--alpha", alpha);
    app->add_option("--grid_resolution", grid_resolution);
    app->add_option("--translation_depth", translation_depth);
    app->add_option("--paratangency_depth", paratangency_depth);
    app->add_option("--max_period", max_period);
    app->add_option("--max_steps", max_steps);
    app->add_option("--seed_half_x", seed_half_x);
    app->add_option("--seed_half_y", seed_half_y);
    app->add_option("--coverage_threshold", coverage_threshold);
    app->add_option("--seed", seed);
    app->add_flag("--control", control, "no perturbations");
    app->add_option("--disabled_windows", disabled_windows, "lattice indices left unperturbed");
    app->add_option("--csv_path", csv_path);
    app->add_option("--json_path", json_path);
    app->add_option("--svg_path", svg_path);
  }

  SweepConfig resolve() const {
    SweepConfig c = config.empty() ? SweepConfig{} : config_from_json(read_text(config));
    auto set = [](auto& dst, const auto& src) {
      if (src) dst = *src;
    };
    set(c.d, d);
    set(c.k, k);
    set(c.epsilon, epsilon);
    if (mu) c.mu = *mu;
    if (eta) c.eta = *eta;
    set(c.lattice_depth, lattice_depth);
    set(c.alpha, alpha);
    set(c.grid_resolution, grid_resolution);
    set(c.translation_depth, translation_depth);
    set(c.paratangency_depth, paratangency_depth);
    set(c.max_period, max_period);
    set(c.max_steps, max_steps);
    set(c.seed_half_x, seed_half_x);
    set(c.seed_half_y, seed_half_y);
    set(c.coverage_threshold, coverage_threshold);
    set(c.seed, seed);
    if (control) c.control = true;
    if (!disabled_windows.empty()) c.disabled_windows = disabled_windows;
    set(c.csv_path, csv_path);
    set(c.json_path, json_path);
    set(c.svg_path, svg_path);
    return c;
  }
};

void write_outputs(const SweepReport& rep) {
  const auto& c = rep.config;
  if (!c.csv_path.empty()) export_report(rep, ReportFormat::csv, c.csv_path);
  if (!c.json_path.empty()) export_report(rep, ReportFormat::json, c.json_path);
  if (!c.svg_path.empty()) emit_plots(rep, c.svg_path);
}

void print_summary(const SweepReport& rep) {
  std::cout << "lattice points: " << rep.lattice.size() << "\n";
  for (const auto& l : rep.lattice) {
    std::cout << "  [" << l.index << "] a0 =";
    for (double v : l.point) std::cout << " " << v;
    std::cout << "  status: " << l.status << "  paratangency: " << (l.paratangency_pass ? "pass" : "fail")
              << "  trapping box: " << (l.trapping_ok ? "ok" : "no") << "\n";
  }
  std::cout << "grid points: " << rep.grid.size() << "  coverage: " << rep.coverage
            << "  thickened-lattice coverage: " << rep.thickened_coverage << "\n";
  if (rep.certificates_pass) std::cout << "certificates: " << (*rep.certificates_pass ? "pass" : "FAIL") << "\n";
}

int report_exit(const SweepReport& rep) {
  return rep.certificates_pass.value_or(true) ? 0 : kCertificateFailure;
}

FamilyHandle coupled_handle(int k, int d, double eps) {
  ConstructionParams p;
  p.kind = ConstructionKind::coupled;
  p.k = k;
  p.d = d;
  p.epsilon = eps;
  return FamilyHandle(p);
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string cell;
  while (std::getline(in, cell, ',')) out.push_back(std::stod(cell));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"parablender sweeps and certificates"};
  app.require_subcommand(1);

  // ifs-coverage
  int cov_k = 1, cov_d = 1, cov_depth = 14;
  double cov_eps = 0.1;
  std::string cov_box;
  auto* cov = app.add_subcommand("ifs-coverage", "limit set cover and jet coverage certificate");
  cov->add_option("--k", cov_k);
  cov->add_option("--d", cov_d);
  cov->add_option("--epsilon", cov_eps);
  cov->add_option("--depth", cov_depth);
  cov->add_option("--box", cov_box, "lo_0,...,lo_m,hi_0,...,hi_m in Taylor coordinates");

  // paratangency
  int par_d = 1, par_depth = 40;
  double par_eps = 0.05;
  std::uint64_t par_seed = 1;
  auto* par = app.add_subcommand("paratangency", "greedy code for a random admissible parabola");
  par->add_option("--d", par_d);
  par->add_option("--epsilon", par_eps);
  par->add_option("--depth", par_depth);
  par->add_option("--seed", par_seed);

  // flatten
  double fl_alpha = 1.0 / 16.0, fl_amplitude = 1e-3;
  auto* fl = app.add_subcommand("flatten", "flatten a surrogate unfolding a^(d+1) at a0 = 0 (k = d = 1)");
  fl->add_option("--alpha", fl_alpha);
  fl->add_option("--amplitude", fl_amplitude);

  // sinks
  double sk_alpha = 1.0 / 16.0;
  int sk_n = 12, sk_grid = 11;
  auto* sk = app.add_subcommand("sinks", "sink translation at a0 = 0, detection and trapping boxes (k = d = 1)");
  sk->add_option("--alpha", sk_alpha);
  sk->add_option("--n", sk_n);
  sk->add_option("--grid", sk_grid);

  // sweep
  SweepFlags sweep_flags;
  auto* sw = app.add_subcommand("sweep", "lattice sweep");
  sweep_flags.attach(sw);

  // report
  std::string rp_in, rp_csv, rp_svg;
  auto* rp = app.add_subcommand("report", "summarize or re-export a JSON report");
  rp->add_option("input", rp_in, "report JSON")->required();
  rp->add_option("--csv_path", rp_csv);
  rp->add_option("--svg_path", rp_svg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*cov) {
      ParablenderIfs ifs;
      ifs.k = cov_k;
      ifs.d = cov_d;
      ifs.epsilon = cov_eps;
      const auto cover = limit_set_cover(ifs, std::min(cov_depth, 20));
      std::cout << "limit set: hausdorff bound " << cover.hausdorff_bound << " (" << cover.cylinders
                << " cylinders)\n";
      if (cov_box.empty()) return 0;
      const auto v = parse_list(cov_box);
      if (v.size() % 2 != 0 || v.empty()) throw ConfigError("--box needs lo and hi for every coordinate");
      JetBox box{{v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2)},
                 {v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end()}};
      const auto cert = stream_jet_coverage(ifs, cov_depth, box);
      std::cout << "jet coverage: " << (cert.covered ? "certified" : "not certified") << " ("
                << cert.cells_covered << "/" << cert.cells_total << " cells)"
                << (cert.reason.empty() ? "" : ", " + cert.reason) << "\n";
      return cert.covered ? 0 : kCertificateFailure;
    }
    if (*par) {
      ConstructionParams p;
      p.kind = ConstructionKind::base;
      p.d = par_d;
      p.epsilon = par_eps;
      const FamilyHandle h(p);
      const std::vector<double> a0{0.0};
      std::mt19937_64 rng(par_seed);
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      const auto sp = JetSpace::get(1, par_d + 1);
      for (int attempt = 0; attempt < 1000; ++attempt) {
        std::vector<Jet> coeffs;
        for (int j = 0; j <= 3; ++j) {
          Jet c(sp);
          const double size = j == 0 ? par_eps / 4.0 : (j == 2 ? 0.2 : 0.1);
          for (std::size_t pos = 0; pos < c.size(); ++pos)
            c.set_coeff(pos, size * u(rng) / sp->factorial(pos) / (1 + sp->degree(pos)));
          if (j == 2) c.set_coeff(0, 2.0 + c.coeff(0));
          coeffs.push_back(std::move(c));
        }
        const auto fam = ParabolaFamily::polynomial(1, Interval{-1.0, 1.0}, std::move(coeffs));
        if (!fam.certify(a0, h.construction().mu()).ok) continue;
        const auto trace = greedy_code(h, fam, a0, par_depth);
        const std::vector<double> tol{4.0 * std::pow(2.0 / 3.0, par_depth)};
        const auto verdict = paratangency_verdict(trace.eta, tol);
        for (std::size_t i = 0; i < verdict.measured.size(); ++i)
          std::cout << "degree " << i << ": |eta| " << verdict.measured[i] << " <= " << verdict.tolerance[i]
                    << (verdict.pass[i] ? " pass" : " FAIL") << "\n";
        return verdict.all() ? 0 : kCertificateFailure;
      }
      throw ConvergenceError("no admissible parabola drawn");
    }
    if (*fl) {
      const FamilyHandle base = coupled_handle(1, 1, 0.05);
      AdditivePerturbation unfold;
      unfold.center = base.construction().fold_point();
      unfold.radius = 0.2;
      unfold.window = {{0.0}, 1.0};
      unfold.amplitude = {Jet(JetSpace::get(1, 2), {0.0, 0.0, fl_amplitude}), Jet(JetSpace::get(1, 2))};
      const FamilyHandle h = base.push_perturbation(unfold);
      const auto guess = coupled_tangency_guess(h.construction());
      const std::vector<double> a0{0.0};
      const auto td = tangency_normal_form(h, guess, a0);
      const double alpha0 = flatten_alpha_zero(h, td, h.construction().mu());
      const auto flat = flatten_perturbation(h, td, fl_alpha);
      double worst = 0.0;
      for (int i = -5; i <= 5; ++i) {
        const std::vector<double> a{fl_alpha * i / 5.0};
        TangencyOptions loose;
        loose.residual_tolerance = 1.0;
        worst = std::max(worst, std::abs(static_cast<double>(tangency_normal_form(flat, guess, a, loose).critical_value0)));
      }
      std::cout << "alpha_0 " << alpha0 << "  perturbation norm "
                << windowed_parameter_norm(h, {a0, fl_alpha}, td.critical_value, 1) << "  worst residual " << worst
                << "\n";
      return worst <= 1e-7 ? 0 : kCertificateFailure;
    }
    if (*sk) {
      const FamilyHandle h = coupled_handle(1, 1, 0.05);
      const auto guess = coupled_tangency_guess(h.construction());
      const std::vector<double> a0{0.0};
      const auto td = tangency_normal_form(h, guess, a0);
      const auto sunk = sink_translation_perturbation(h, td, sk_alpha, sk_n);
      std::vector<std::vector<double>> grid;
      for (int i = 0; i < sk_grid; ++i)
        grid.push_back({sk_alpha * (-1.0 + 2.0 * i / std::max(1, sk_grid - 1))});
      const auto sinks = detect_sinks(sunk, {td.homoclinic(), 1e-16, 1e-40}, grid, td.steps() + sk_n + 4);
      for (const auto& s : sinks)
        std::cout << "a " << s.parameter_lo[0] << "  period " << s.period << "  |multiplier| "
                  << std::max(std::abs(s.multipliers[0]), std::abs(s.multipliers[1])) << "\n";
      const auto cert = trapping_box_check(sunk, td, sk_n, a0);
      std::cout << "trapping box: " << (cert.ok ? "certified" : "not certified " + cert.violation) << "  norm "
                << cert.max_norm << "\n";
      return sinks.size() == grid.size() && cert.ok ? 0 : kCertificateFailure;
    }
    if (*sw) {
      const SweepConfig cfg = sweep_flags.resolve();
      const SweepReport rep = run_sweep(cfg);
      write_outputs(rep);
      print_summary(rep);
      return report_exit(rep);
    }
    if (*rp) {
      const SweepReport rep = import_report_json(read_text(rp_in));
      if (!rp_csv.empty()) export_report(rep, ReportFormat::csv, rp_csv);
      if (!rp_svg.empty()) emit_plots(rep, rp_svg);
      print_summary(rep);
      return report_exit(rep);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
