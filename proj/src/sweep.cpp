#include "parablend/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

#include "json.hpp"
#include "parablend/paratangency.hpp"

namespace parablend {

using ordered_json = nlohmann::ordered_json;

// ---- config ------------------------------------------------------------------------------

void SweepConfig::validate() const {
  if (k < 1) throw ConfigError("k must be at least 1");
  if (d < 0) throw ConfigError("d must be nonnegative");
  if (lattice_depth < 1) throw ConfigError("lattice depth N must be at least 1");
  if (!(alpha > 0.0) || alpha > 1.0) throw ConfigError("alpha must lie in (0, 1]");
  if (!(grid_resolution > 0.0) || grid_resolution > alpha / 4.0)
    throw ConfigError("grid resolution must be positive and at most alpha / 4");
  if (translation_depth < 1) throw ConfigError("translation depth n must be at least 1");
  if (paratangency_depth < 0) throw ConfigError("paratangency depth must be nonnegative");
  if (max_period < 1 || max_steps < 1) throw ConfigError("sink search bounds must be positive");
  if (coverage_threshold < 1) throw ConfigError("coverage threshold must be at least 1");
}

std::vector<std::vector<double>> lattice_points(double alpha, int lattice_depth, int k) {
  if (lattice_depth < 1) throw ConfigError("lattice depth N must be at least 1");
  if (k < 1) throw ConfigError("k must be at least 1");
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  const double spacing = alpha * std::ldexp(1.0, 1 - lattice_depth);
  const long reach = static_cast<long>(std::floor(alpha / spacing + 1e-12));
  std::vector<std::vector<double>> out;
  if (reach < 1) throw ConfigError("empty lattice: N too small relative to alpha");
  std::vector<long> idx(static_cast<std::size_t>(k), -reach);
  for (;;) {
    if (std::any_of(idx.begin(), idx.end(), [](long v) { return v != 0; })) {
      std::vector<double> p;
      for (long v : idx) p.push_back(spacing * static_cast<double>(v));
      out.push_back(std::move(p));
    }
    std::size_t i = idx.size();
    while (i > 0 && idx[i - 1] == reach) idx[--i] = -reach;
    if (i == 0) break;
    ++idx[i - 1];
  }
  if (out.empty()) throw ConfigError("empty lattice: N too small relative to alpha");
  return out;
}

double window_half_width(const SweepConfig& cfg) { return cfg.alpha * std::ldexp(1.0, -cfg.lattice_depth); }

std::vector<std::vector<double>> sweep_grid(const SweepConfig& cfg) {
  const long per_side = std::lround(cfg.alpha / cfg.grid_resolution);
  const long n = 2 * per_side + 1;
  std::vector<std::vector<double>> out;
  std::vector<long> idx(static_cast<std::size_t>(cfg.k), 0);
  for (;;) {
    std::vector<double> p;
    for (long v : idx) p.push_back(cfg.alpha * (-1.0 + static_cast<double>(v) / static_cast<double>(per_side)));
    out.push_back(std::move(p));
    std::size_t i = idx.size();
    while (i > 0 && idx[i - 1] == n - 1) idx[--i] = 0;
    if (i == 0) break;
    ++idx[i - 1];
  }
  return out;
}

// ---- pipeline ----------------------------------------------------------------------------

namespace {

// 2t^2 + t^3 / 10 plus a small random dependence on a - a0 (seeded by the lattice index).
ParabolaFamily lattice_parabola(const SweepConfig& cfg, const std::vector<double>& a0, int index) {
  std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(index));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double size = cfg.epsilon / 8.0;
  const double value = size * u(rng);
  std::vector<double> linear, square;
  for (int i = 0; i < cfg.k; ++i) {
    linear.push_back(size * u(rng));
    square.push_back(size * u(rng) / 2.0);
  }
  auto gamma = [=](const auto& t, auto a) {
    auto acc = t * t * 2.0 + t * t * t * 0.1 + value;
    for (std::size_t i = 0; i < a0.size(); ++i) {
      const auto s = a[i] - a0[i];
      acc = acc + s * linear[i] + s * s * square[i];
    }
    return acc;
  };
  return ParabolaFamily::analytic(cfg.k, Interval{-1.0, 1.0}, gamma);
}

ConstructionParams construction_params(const SweepConfig& cfg) {
  ConstructionParams p;
  p.kind = ConstructionKind::coupled;
  p.k = cfg.k;
  p.d = cfg.d;
  p.epsilon = cfg.epsilon;
  p.mu = cfg.mu;
  p.eta = cfg.eta;
  return p;
}

struct LatticeOutcome {
  LatticeRecord record;
  std::vector<Perturbation> perturbations;
};

LatticeOutcome process_lattice_point(const SweepConfig& cfg, const FamilyHandle& base, int index,
                                     const std::vector<double>& a0) {
  LatticeOutcome out;
  LatticeRecord& rec = out.record;
  rec.index = index;
  rec.point = a0;
  const bool disabled = std::find(cfg.disabled_windows.begin(), cfg.disabled_windows.end(), index) !=
                        cfg.disabled_windows.end();
  try {
    const auto trace = greedy_code(base, lattice_parabola(cfg, a0, index), a0, cfg.paratangency_depth);
    const std::vector<double> tol{default_paratangency_tolerance(cfg.paratangency_depth)};
    const auto verdict = paratangency_verdict(trace.eta, tol);
    rec.paratangency_pass = verdict.all();
    rec.paratangency_eta = *std::max_element(verdict.measured.begin(), verdict.measured.end());
  } catch (const std::runtime_error& e) {
    rec.status = std::string("paratangency: ") + e.what();
  }
  if (cfg.control || disabled) return out;

  const double window_alpha = window_half_width(cfg) / 2.0;
  const auto guess = coupled_tangency_guess(base.construction());
  const std::size_t before = base.perturbations().size();
  try {
    const auto td = tangency_normal_form(base, guess, a0);
    FamilyHandle flat = base;
    if (td.critical_value.max_abs() > 0.0) {
      flat = flatten_perturbation(base, td, window_alpha);
      rec.flatten_norm =
          windowed_parameter_norm(base, {a0, window_alpha}, td.critical_value, cfg.d);
    }
    const auto td_flat = flat.perturbations().size() == before ? td : tangency_normal_form(flat, guess, a0);
    const FamilyHandle sunk = sink_translation_perturbation(flat, td_flat, window_alpha, cfg.translation_depth);
    const auto shift = foliation_shift(flat, td_flat, cfg.translation_depth);
    rec.shift_norm = windowed_parameter_norm(flat, {a0, window_alpha}, shift.shift, cfg.d);
    const auto cert = trapping_box_check(sunk, td_flat, cfg.translation_depth, a0);
    rec.trapping_ok = cert.ok;
    rec.trapping_norm = cert.max_norm;
    const auto all = sunk.perturbations();
    out.perturbations.assign(all.begin() + static_cast<std::ptrdiff_t>(before), all.end());
    rec.perturbed = true;
  } catch (const std::runtime_error& e) {
    const std::string msg = std::string("sink pipeline: ") + e.what();
    rec.status = rec.status == "ok" ? msg : rec.status + "; " + msg;
  }
  return out;
}

bool in_thickened_lattice(const SweepConfig& cfg, const std::vector<double>& a) {
  const double spacing = cfg.alpha * std::ldexp(1.0, 1 - cfg.lattice_depth);
  bool nonzero = false;
  for (double v : a) {
    const double r = v / spacing;
    const double nearest = std::round(r);
    if (std::abs(r - nearest) > 0.25 + 1e-12) return false;
    nonzero = nonzero || nearest != 0.0;
  }
  return nonzero;
}

}  // namespace

SweepReport run_sweep(const SweepConfig& cfg) {
  cfg.validate();
  SweepReport rep;
  rep.config = cfg;
  const FamilyHandle base(construction_params(cfg));
  const auto lattice = lattice_points(cfg.alpha, cfg.lattice_depth, cfg.k);

  // lattice points are independent (disjoint windows); stacking happens in index order
  std::vector<std::future<LatticeOutcome>> jobs;
  for (std::size_t i = 0; i < lattice.size(); ++i)
    jobs.push_back(std::async(std::launch::async, process_lattice_point, std::cref(cfg), std::cref(base),
                              static_cast<int>(i), std::cref(lattice[i])));
  FamilyHandle stacked = base;
  for (auto& j : jobs) {
    LatticeOutcome o = j.get();
    for (auto& p : o.perturbations) stacked = stacked.push_perturbation(std::move(p));
    rep.lattice.push_back(std::move(o.record));
  }

  const auto grid = sweep_grid(cfg);
  const auto guess = coupled_tangency_guess(base.construction());
  SeedRegion seeds{guess.homoclinic, cfg.seed_half_x, cfg.seed_half_y, 3, 3};
  SinkSearchOptions opts;
  opts.max_steps = cfg.max_steps;
  const auto sinks = detect_sinks(stacked, seeds, grid, cfg.max_period, opts);
  std::map<std::vector<double>, std::vector<const SinkRecord*>> by_point;
  for (const auto& s : sinks) by_point[s.parameter_lo].push_back(&s);

  std::size_t covered = 0, thick = 0, thick_covered = 0;
  for (const auto& a : grid) {
    GridRecord g;
    g.point = a;
    if (auto it = by_point.find(a); it != by_point.end()) {
      for (const SinkRecord* s : it->second) {
        g.sinks.push_back({s->period, s->representative.x, s->representative.y,
                           std::max(std::abs(s->multipliers[0]), std::abs(s->multipliers[1])),
                           to_string(s->method)});
      }
      std::sort(g.sinks.begin(), g.sinks.end(), [](const SinkSummary& l, const SinkSummary& r) {
        return std::tie(l.period, l.x, l.y) < std::tie(r.period, r.x, r.y);
      });
      g.sink_count = static_cast<int>(g.sinks.size());
      g.min_period = g.sinks.front().period;
      g.max_period = g.sinks.back().period;
    }
    const bool hit = g.sink_count >= cfg.coverage_threshold;
    covered += hit ? 1 : 0;
    if (in_thickened_lattice(cfg, a)) {
      ++thick;
      thick_covered += hit ? 1 : 0;
    }
    rep.grid.push_back(std::move(g));
  }
  rep.coverage = grid.empty() ? 0.0 : static_cast<double>(covered) / static_cast<double>(grid.size());
  rep.thickened_coverage = thick == 0 ? 0.0 : static_cast<double>(thick_covered) / static_cast<double>(thick);
  if (!cfg.control) {
    bool pass = true;
    for (const auto& l : rep.lattice)
      if (std::find(cfg.disabled_windows.begin(), cfg.disabled_windows.end(), l.index) ==
          cfg.disabled_windows.end())
        pass = pass && l.status == "ok" && l.paratangency_pass && l.trapping_ok;
    rep.certificates_pass = pass;
  }
  return rep;
}

// ---- serialization -----------------------------------------------------------------------

namespace {

ordered_json to_ordered(const SweepConfig& c) {
  ordered_json j;
  j["d"] = c.d;
  j["k"] = c.k;
  j["epsilon"] = c.epsilon;
  j["mu"] = c.mu ? ordered_json(*c.mu) : ordered_json(nullptr);
  j["eta"] = c.eta ? ordered_json(*c.eta) : ordered_json(nullptr);
  j["lattice_depth"] = c.lattice_depth;
  j["alpha"] = c.alpha;
  j["grid_resolution"] = c.grid_resolution;
  j["translation_depth"] = c.translation_depth;
  j["paratangency_depth"] = c.paratangency_depth;
  j["max_period"] = c.max_period;
  j["max_steps"] = c.max_steps;
  j["seed_half_x"] = c.seed_half_x;
  j["seed_half_y"] = c.seed_half_y;
  j["coverage_threshold"] = c.coverage_threshold;
  j["seed"] = c.seed;
  j["control"] = c.control;
  j["disabled_windows"] = c.disabled_windows;
  j["csv_path"] = c.csv_path;
  j["json_path"] = c.json_path;
  j["svg_path"] = c.svg_path;
  return j;
}

template <class T>
void read_key(const ordered_json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

SweepConfig from_ordered(const ordered_json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::vector<std::string> known{
      "d", "k", "epsilon", "mu", "eta", "lattice_depth", "alpha", "grid_resolution",
      "translation_depth", "paratangency_depth", "max_period", "max_steps", "seed_half_x",
      "seed_half_y", "coverage_threshold", "seed", "control", "disabled_windows", "csv_path",
      "json_path", "svg_path"};
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown config key: " + key);
  SweepConfig c;
  try {
    read_key(j, "d", c.d);
    read_key(j, "k", c.k);
    read_key(j, "epsilon", c.epsilon);
    if (j.contains("mu") && !j.at("mu").is_null()) c.mu = j.at("mu").get<double>();
    if (j.contains("eta") && !j.at("eta").is_null()) c.eta = j.at("eta").get<double>();
    read_key(j, "lattice_depth", c.lattice_depth);
    read_key(j, "alpha", c.alpha);
    read_key(j, "grid_resolution", c.grid_resolution);
    read_key(j, "translation_depth", c.translation_depth);
    read_key(j, "paratangency_depth", c.paratangency_depth);
    read_key(j, "max_period", c.max_period);
    read_key(j, "max_steps", c.max_steps);
    read_key(j, "seed_half_x", c.seed_half_x);
    read_key(j, "seed_half_y", c.seed_half_y);
    read_key(j, "coverage_threshold", c.coverage_threshold);
    read_key(j, "seed", c.seed);
    read_key(j, "control", c.control);
    read_key(j, "disabled_windows", c.disabled_windows);
    read_key(j, "csv_path", c.csv_path);
    read_key(j, "json_path", c.json_path);
    read_key(j, "svg_path", c.svg_path);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return c;
}

ordered_json lattice_json(const LatticeRecord& l) {
  ordered_json j;
  j["index"] = l.index;
  j["point"] = l.point;
  j["status"] = l.status;
  j["perturbed"] = l.perturbed;
  j["paratangency_pass"] = l.paratangency_pass;
  j["paratangency_eta"] = l.paratangency_eta;
  j["flatten_norm"] = l.flatten_norm;
  j["shift_norm"] = l.shift_norm;
  j["trapping_ok"] = l.trapping_ok;
  j["trapping_norm"] = l.trapping_norm;
  return j;
}

LatticeRecord lattice_from(const ordered_json& j) {
  LatticeRecord l;
  l.index = j.at("index").get<int>();
  l.point = j.at("point").get<std::vector<double>>();
  l.status = j.at("status").get<std::string>();
  l.perturbed = j.at("perturbed").get<bool>();
  l.paratangency_pass = j.at("paratangency_pass").get<bool>();
  l.paratangency_eta = j.at("paratangency_eta").get<double>();
  l.flatten_norm = j.at("flatten_norm").get<double>();
  l.shift_norm = j.at("shift_norm").get<double>();
  l.trapping_ok = j.at("trapping_ok").get<bool>();
  l.trapping_norm = j.at("trapping_norm").get<double>();
  return l;
}

ordered_json grid_json(const GridRecord& g) {
  ordered_json j;
  j["point"] = g.point;
  j["sink_count"] = g.sink_count;
  j["min_period"] = g.min_period;
  j["max_period"] = g.max_period;
  ordered_json sinks = ordered_json::array();
  for (const auto& s : g.sinks) {
    ordered_json o;
    o["period"] = s.period;
    o["x"] = s.x;
    o["y"] = s.y;
    o["multiplier_modulus"] = s.multiplier_modulus;
    o["method"] = s.method;
    sinks.push_back(std::move(o));
  }
  j["sinks"] = std::move(sinks);
  return j;
}

GridRecord grid_from(const ordered_json& j) {
  GridRecord g;
  g.point = j.at("point").get<std::vector<double>>();
  g.sink_count = j.at("sink_count").get<int>();
  g.min_period = j.at("min_period").get<int>();
  g.max_period = j.at("max_period").get<int>();
  for (const auto& o : j.at("sinks"))
    g.sinks.push_back({o.at("period").get<int>(), o.at("x").get<double>(), o.at("y").get<double>(),
                       o.at("multiplier_modulus").get<double>(), o.at("method").get<std::string>()});
  return g;
}

std::string number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write to " + path.string() + " failed");
}

}  // namespace

std::string config_to_json(const SweepConfig& cfg) { return to_ordered(cfg).dump(2); }

SweepConfig config_from_json(const std::string& text) {
  try {
    return from_ordered(ordered_json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

std::string report_csv(const SweepReport& rep) {
  std::ostringstream os;
  for (int i = 0; i < rep.config.k; ++i) os << "a" << i + 1 << ",";
  os << "sink_count,min_period,max_period\n";
  for (const auto& g : rep.grid) {
    for (double v : g.point) os << number(v) << ",";
    os << g.sink_count << "," << g.min_period << "," << g.max_period << "\n";
  }
  return os.str();
}

std::vector<GridRecord> import_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty CSV");
  const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',') + 1);
  if (columns < 4) throw std::runtime_error("CSV header has too few columns");
  const std::size_t k = columns - 3;
  std::vector<GridRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != columns) throw std::runtime_error("CSV row has the wrong number of cells");
    GridRecord g;
    for (std::size_t i = 0; i < k; ++i) g.point.push_back(std::stod(cells[i]));
    g.sink_count = std::stoi(cells[k]);
    g.min_period = std::stoi(cells[k + 1]);
    g.max_period = std::stoi(cells[k + 2]);
    out.push_back(std::move(g));
  }
  return out;
}

std::string report_json(const SweepReport& rep) {
  ordered_json j;
  j["config"] = to_ordered(rep.config);
  ordered_json lattice = ordered_json::array();
  for (const auto& l : rep.lattice) lattice.push_back(lattice_json(l));
  j["lattice"] = std::move(lattice);
  ordered_json grid = ordered_json::array();
  for (const auto& g : rep.grid) grid.push_back(grid_json(g));
  j["grid"] = std::move(grid);
  j["coverage"] = rep.coverage;
  j["thickened_coverage"] = rep.thickened_coverage;
  j["certificates_pass"] = rep.certificates_pass ? ordered_json(*rep.certificates_pass) : ordered_json(nullptr);
  return j.dump(2);
}

SweepReport import_report_json(const std::string& text) {
  try {
    const auto j = ordered_json::parse(text);
    SweepReport rep;
    rep.config = from_ordered(j.at("config"));
    for (const auto& l : j.at("lattice")) rep.lattice.push_back(lattice_from(l));
    for (const auto& g : j.at("grid")) rep.grid.push_back(grid_from(g));
    rep.coverage = j.at("coverage").get<double>();
    rep.thickened_coverage = j.at("thickened_coverage").get<double>();
    if (!j.at("certificates_pass").is_null()) rep.certificates_pass = j.at("certificates_pass").get<bool>();
    return rep;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed report: ") + e.what());
  }
}

void export_report(const SweepReport& rep, ReportFormat format, const std::filesystem::path& path) {
  if (format == ReportFormat::json) {
    write_file(path, report_json(rep));
    return;
  }
  write_file(path, report_csv(rep));
  ordered_json side;
  side["config"] = to_ordered(rep.config);
  ordered_json lattice = ordered_json::array();
  for (const auto& l : rep.lattice) lattice.push_back(lattice_json(l));
  side["lattice"] = std::move(lattice);
  side["certificates_pass"] = rep.certificates_pass ? ordered_json(*rep.certificates_pass) : ordered_json(nullptr);
  write_file(std::filesystem::path(path.string() + ".certificates.json"), side.dump(2));
}

// ---- plots -------------------------------------------------------------------------------

std::string report_svg(const SweepReport& rep) {
  const int k = rep.config.k;
  if (k != 1 && k != 2) throw ConfigError("plots support k = 1 or k = 2 only");
  const double alpha = rep.config.alpha;
  const double W = 640, H = k == 1 ? 320 : 640, pad = 40;
  auto sx = [&](double a) { return pad + (a + alpha) / (2 * alpha) * (W - 2 * pad); };
  auto sy = [&](double a) { return H - pad - (a + alpha) / (2 * alpha) * (H - 2 * pad); };
  int max_count = 0;
  for (const auto& g : rep.grid) max_count = std::max(max_count, g.sink_count);
  std::ostringstream os;
  os << std::setprecision(6);
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" viewBox=\"0 0 " << W << " " << H << "\">\n"
     << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n"
     << "<rect x=\"" << pad << "\" y=\"" << pad << "\" width=\"" << W - 2 * pad << "\" height=\""
     << H - 2 * pad << "\" fill=\"none\" stroke=\"black\"/>\n";
  const double step = rep.config.grid_resolution;
  if (k == 1) {
    const double base = H - pad, top = pad;
    auto level = [&](int c) { return max_count == 0 ? base : base - (base - top) * c / max_count; };
    os << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (const auto& g : rep.grid) {
      const double lo = std::max(-alpha, g.point[0] - step / 2), hi = std::min(alpha, g.point[0] + step / 2);
      os << sx(lo) << "," << level(g.sink_count) << " " << sx(hi) << "," << level(g.sink_count) << " ";
    }
    os << "\"/>\n";
    for (const auto& l : rep.lattice)
      os << "<circle cx=\"" << sx(l.point[0]) << "\" cy=\"" << base << "\" r=\"4\" fill=\"crimson\"/>\n";
  } else {
    const double cw = step / (2 * alpha) * (W - 2 * pad), ch = step / (2 * alpha) * (H - 2 * pad);
    for (const auto& g : rep.grid) {
      if (g.sink_count == 0) continue;
      const double shade = max_count == 0 ? 0.0 : static_cast<double>(g.sink_count) / max_count;
      const int level = static_cast<int>(std::lround(255 * (1.0 - shade)));
      os << "<rect x=\"" << sx(g.point[0]) - cw / 2 << "\" y=\"" << sy(g.point[1]) - ch / 2 << "\" width=\""
         << cw << "\" height=\"" << ch << "\" fill=\"rgb(" << level << "," << level << ",255)\"/>\n";
    }
    for (const auto& l : rep.lattice)
      os << "<circle cx=\"" << sx(l.point[0]) << "\" cy=\"" << sy(l.point[1])
         << "\" r=\"3\" fill=\"crimson\"/>\n";
  }
  os << "<text x=\"" << pad << "\" y=\"" << pad / 2 << "\" font-family=\"sans-serif\" font-size=\"12\">"
     << "sink counts, N = " << rep.config.lattice_depth << ", max " << max_count << "</text>\n"
     << "</svg>\n";
  return os.str();
}

void emit_plots(const SweepReport& rep, const std::filesystem::path& path) {
  write_file(path, report_svg(rep));
}

}  // namespace parablend
