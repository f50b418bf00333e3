#pragma once

// Finite-depth lattice sweeps: every lattice point gets a paratangency trace
// and the flatten + sink-translation perturbations inside its own parameter
// window; sinks are then counted over a parameter grid.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "parablend/sink_forge.hpp"

namespace parablend {

struct SweepConfig {
  // construction
  int d = 1;
  int k = 1;
  double epsilon = 0.05;
  std::optional<double> mu;
  std::optional<double> eta;
  // lattice and grid
  int lattice_depth = 3;  // N
  double alpha = 1.0;
  double grid_resolution = 1.0 / 16.0;
  // pipeline
  int translation_depth = 12;  // n
  int paratangency_depth = 12;
  int max_period = 20;
  int max_steps = 10000;
  double seed_half_x = 1e-16;
  double seed_half_y = 1e-40;
  int coverage_threshold = 1;  // sinks needed for a grid point to count as covered
  std::uint64_t seed = 1;
  bool control = false;                // no perturbations at all
  std::vector<int> disabled_windows;   // lattice indices left unperturbed
  // outputs (empty: not written)
  std::string csv_path;
  std::string json_path;
  std::string svg_path;

  void validate() const;
  bool operator==(const SweepConfig&) const = default;
};

// alpha 2^(1-N) (Z^k \ {0}) inside [-alpha, alpha]^k, lexicographic order.
std::vector<std::vector<double>> lattice_points(double alpha, int lattice_depth, int k);

// Half-width of each lattice point's parameter window: alpha 2^-N.
double window_half_width(const SweepConfig& cfg);

struct LatticeRecord {
  int index = 0;
  std::vector<double> point;
  std::string status = "ok";  // stage error otherwise
  bool perturbed = false;
  bool paratangency_pass = false;
  double paratangency_eta = 0.0;  // largest |d^alpha eta|
  double flatten_norm = 0.0;
  double shift_norm = 0.0;
  bool trapping_ok = false;
  double trapping_norm = 0.0;
  bool operator==(const LatticeRecord&) const = default;
};

struct SinkSummary {
  int period = 0;
  double x = 0.0;
  double y = 0.0;
  double multiplier_modulus = 0.0;  // largest
  std::string method;
  bool operator==(const SinkSummary&) const = default;
};

struct GridRecord {
  std::vector<double> point;
  int sink_count = 0;
  int min_period = 0;  // 0 without sinks
  int max_period = 0;
  std::vector<SinkSummary> sinks;
  bool operator==(const GridRecord&) const = default;
};

struct SweepReport {
  SweepConfig config;
  std::vector<LatticeRecord> lattice;
  std::vector<GridRecord> grid;
  double coverage = 0.0;            // grid points with >= threshold sinks
  double thickened_coverage = 0.0;  // same, restricted to the thickened lattice
  std::optional<bool> certificates_pass;
  bool operator==(const SweepReport&) const = default;
};

std::vector<std::vector<double>> sweep_grid(const SweepConfig& cfg);

SweepReport run_sweep(const SweepConfig& cfg);

enum class ReportFormat { csv, json };

// csv: one row per grid point plus a certificates sidecar (<path>.certificates.json);
// json: the whole report.
void export_report(const SweepReport& rep, ReportFormat format, const std::filesystem::path& path);
std::string report_csv(const SweepReport& rep);
std::string report_json(const SweepReport& rep);
SweepReport import_report_json(const std::string& text);
// Grid rows only; the config's k is taken from the header.
std::vector<GridRecord> import_report_csv(const std::string& text);

SweepConfig config_from_json(const std::string& text);
std::string config_to_json(const SweepConfig& cfg);

// Step plot (k = 1) or heatmap (k = 2) of sink counts with lattice markers.
std::string report_svg(const SweepReport& rep);
void emit_plots(const SweepReport& rep, const std::filesystem::path& path);

}  // namespace parablend
