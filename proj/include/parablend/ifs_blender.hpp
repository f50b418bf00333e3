#pragma once

// One-dimensional models: the two-map blender IFS and the parablender IFS
// y -> 2y/3 + delta(0)/3 + eps P_delta(a).  Limit-set covers by exhaustive
// cylinder enumeration and grid certificates for the reachable jet set.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "parablend/jets.hpp"
#include "parablend/signed_polynomial.hpp"
#include "parablend/symbol_word.hpp"

namespace parablend {

inline constexpr std::uint64_t kEnumerationCap = std::uint64_t{1} << 24;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  [[nodiscard]] double width() const noexcept { return hi - lo; }
};

// y -> slope y + shift + wobble sin(y + phase); increasing when slope > |wobble|.
struct BranchMap {
  double slope = 2.0 / 3.0;
  double shift = 0.0;
  double wobble = 0.0;
  double phase = 0.0;

  [[nodiscard]] double operator()(double y) const;
  [[nodiscard]] double lipschitz() const noexcept;
};

struct LimitSetCover {
  std::vector<Interval> intervals;  // merged, sorted
  Interval invariant;               // forward-invariant interval the cylinders start from
  double max_cylinder_diameter = 0.0;
  double cover_distance = 0.0;      // Hausdorff distance from the union to the target
  double hausdorff_bound = 0.0;     // bound for the limit set: cover distance + diameter
  std::uint64_t cylinders = 0;
};

LimitSetCover limit_set_cover(std::span<const BranchMap> maps, int depth,
                              Interval target = {-1.0, 1.0});

// The parablender IFS at a fixed parameter a0, optionally with per-letter
// additive offsets.  Letters are indexed by their plus-mask.
struct ParablenderIfs {
  int k = 1;
  int d = 1;
  double epsilon = 0.05;
  std::vector<double> a0;       // empty means 0
  std::vector<double> offsets;  // empty means 0

  [[nodiscard]] int dprime() const { return dprime_for(k, d); }
  [[nodiscard]] std::size_t letter_count() const { return std::size_t{1} << (dprime() + 1); }
  [[nodiscard]] Letter letter(std::size_t index) const;
  // Taylor jets of the branch constants delta(0)/3 + eps P_delta(a) + offset at a0.
  [[nodiscard]] std::vector<Jet> branch_constants(int order) const;
  [[nodiscard]] std::vector<BranchMap> branch_maps() const;
};

LimitSetCover limit_set_cover(const ParablenderIfs& ifs, int depth);

struct SeriesValue {
  Jet value;
  std::vector<double> remainder;  // per Taylor coefficient
};

// Partial sum over the word's letters (letters[0] most recent) plus a bound
// on the tail of any infinite continuation.
SeriesValue y_series(const SymbolWord& word, double eps, std::span<const Jet> a);

struct JetReachableSet {
  int k = 1;
  int order = 0;
  int depth = 0;
  std::vector<std::vector<double>> points;  // Taylor coefficients, deduplicated
  std::vector<double> remainder;
  std::uint64_t raw_count = 0;
};

JetReachableSet jet_reachable_set(const ParablenderIfs& ifs, int depth);

// Axis-aligned box in Taylor coefficient coordinates (value first).
struct JetBox {
  std::vector<double> lo;
  std::vector<double> hi;
};

struct CoverageCertificate {
  bool covered = false;
  bool inconclusive = false;
  std::string reason;
  JetBox box;
  int depth = 0;
  double epsilon = 0.0;
  std::vector<int> cells_per_axis;
  std::uint64_t cells_total = 0;
  std::uint64_t cells_covered = 0;
  std::uint64_t points_examined = 0;
  std::optional<JetBox> witness;  // an uncovered cell
};

// A cell counts as covered when some point's remainder box fits inside it.
// Cells are about cell_factor remainders wide.
CoverageCertificate jet_coverage_certificate(const JetReachableSet& set, const JetBox& box,
                                             double epsilon = 0.0, double cell_factor = 5.0);

// Same check, enumerating every depth-N word without storing them; stops as
// soon as all cells are covered.
CoverageCertificate stream_jet_coverage(const ParablenderIfs& ifs, int depth, const JetBox& box,
                                        double cell_factor = 5.0, unsigned threads = 0);

}  // namespace parablend
