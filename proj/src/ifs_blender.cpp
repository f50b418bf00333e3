#include "parablend/ifs_blender.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "parablend/dynamics.hpp"
#include "parablend/errors.hpp"

namespace parablend {

namespace {

constexpr double kContraction = 2.0 / 3.0;

std::uint64_t word_count(std::size_t letters, int depth) {
  std::uint64_t total = 1;
  for (int i = 0; i < depth; ++i) {
    if (total > (std::numeric_limits<std::uint64_t>::max() / letters))
      return std::numeric_limits<std::uint64_t>::max();
    total *= letters;
  }
  return total;
}

void collect_cylinders(std::span<const BranchMap> maps, Interval cur, int remaining,
                       std::vector<Interval>& out) {
  if (remaining == 0) {
    out.push_back(cur);
    return;
  }
  for (const auto& g : maps) collect_cylinders(maps, {g(cur.lo), g(cur.hi)}, remaining - 1, out);
}

// Coefficient-wise tail bound for any continuation after `depth` letters.
std::vector<double> tail_bound(const std::vector<Jet>& constants, int depth) {
  std::vector<double> r(constants.front().size(), 0.0);
  for (const auto& c : constants)
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = std::max(r[i], std::abs(c.coeff(i)));
  const double weight = 3.0 * std::pow(kContraction, depth);
  for (auto& v : r) v *= weight;
  return r;
}

int infer_degree(int k, int letter_length) {
  for (int d = 0; d <= 30; ++d) {
    int dp = 0;
    try {
      dp = dprime_for(k, d);
    } catch (const std::runtime_error&) {
      break;
    }
    if (dp == letter_length - 1) return d;
    if (dp > letter_length - 1) break;
  }
  throw DimensionError("letter length does not match any degree for this k");
}

class CellGrid {
 public:
  CellGrid(const JetBox& box, std::span<const double> remainder, double cell_factor)
      : lo_(box.lo), r_(remainder.begin(), remainder.end()) {
    if (box.lo.size() != remainder.size() || box.hi.size() != remainder.size())
      throw DimensionError("target box and remainder have different dimensions");
    total_ = 1;
    for (std::size_t i = 0; i < lo_.size(); ++i) {
      const double w = box.hi[i] - box.lo[i];
      if (!(w > 0.0)) throw DimensionError("target box must have positive extent");
      int n = 1;
      if (r_[i] > 0.0) n = std::max(1, static_cast<int>(std::floor(w / (cell_factor * r_[i]))));
      n_.push_back(n);
      side_.push_back(w / n);
      if (side_.back() < 2.0 * r_[i]) inconclusive_ = true;
      total_ *= static_cast<std::uint64_t>(n);
    }
    if (total_ > (std::uint64_t{1} << 26)) throw BudgetError("coverage grid too fine");
  }

  [[nodiscard]] bool inconclusive() const noexcept { return inconclusive_; }
  [[nodiscard]] std::uint64_t total() const noexcept { return total_; }
  [[nodiscard]] const std::vector<int>& counts() const noexcept { return n_; }

  // Cell whose closure contains the point's remainder box, if any.
  [[nodiscard]] std::optional<std::uint64_t> cell_of(const double* p) const {
    std::uint64_t id = 0;
    for (std::size_t i = 0; i < lo_.size(); ++i) {
      const double u = (p[i] - lo_[i]) / side_[i];
      if (!(u >= 0.0)) return std::nullopt;
      const auto j = static_cast<std::int64_t>(std::floor(u));
      if (j >= n_[i]) return std::nullopt;
      const double cell_lo = lo_[i] + static_cast<double>(j) * side_[i];
      if (p[i] - r_[i] < cell_lo || p[i] + r_[i] > cell_lo + side_[i]) return std::nullopt;
      id = id * static_cast<std::uint64_t>(n_[i]) + static_cast<std::uint64_t>(j);
    }
    return id;
  }

  [[nodiscard]] JetBox cell_box(std::uint64_t id) const {
    JetBox b;
    b.lo.resize(lo_.size());
    b.hi.resize(lo_.size());
    for (std::size_t i = lo_.size(); i-- > 0;) {
      const auto j = static_cast<double>(id % static_cast<std::uint64_t>(n_[i]));
      id /= static_cast<std::uint64_t>(n_[i]);
      b.lo[i] = lo_[i] + j * side_[i];
      b.hi[i] = b.lo[i] + side_[i];
    }
    return b;
  }

 private:
  std::vector<double> lo_;
  std::vector<double> r_;
  std::vector<double> side_;
  std::vector<int> n_;
  std::uint64_t total_ = 1;
  bool inconclusive_ = false;
};

void finish_certificate(CoverageCertificate& cert, const CellGrid& grid,
                        const std::vector<std::uint8_t>& covered) {
  cert.cells_per_axis = grid.counts();
  cert.cells_total = grid.total();
  cert.cells_covered = static_cast<std::uint64_t>(std::count(covered.begin(), covered.end(), 1));
  cert.covered = cert.cells_covered == cert.cells_total;
  if (!cert.covered) {
    const auto it = std::find(covered.begin(), covered.end(), 0);
    cert.witness = grid.cell_box(static_cast<std::uint64_t>(it - covered.begin()));
    cert.reason = "uncovered cell";
  }
}

struct StreamState {
  const std::vector<std::vector<double>>* constants;
  std::size_t dims;
  int depth;
  const CellGrid* grid;
  std::vector<std::uint8_t>* covered;
  std::atomic<std::uint64_t>* count;
  std::atomic<bool>* done;
  std::uint64_t examined = 0;
};

void mark(StreamState& st, const double* v) {
  ++st.examined;
  const auto id = st.grid->cell_of(v);
  if (!id) return;
  std::atomic_ref<std::uint8_t> slot((*st.covered)[*id]);
  if (slot.load(std::memory_order_relaxed) == 0 && slot.exchange(1) == 0) {
    if (st.count->fetch_add(1) + 1 == st.grid->total()) st.done->store(true);
  }
}

void descend(StreamState& st, std::vector<double>& buf, int level) {
  if (st.done->load(std::memory_order_relaxed)) return;
  const std::size_t m = st.dims;
  const double* v = &buf[static_cast<std::size_t>(level) * m];
  double* nv = &buf[static_cast<std::size_t>(level + 1) * m];
  const bool leaf = level + 1 == st.depth;
  for (const auto& c : *st.constants) {
    for (std::size_t i = 0; i < m; ++i) nv[i] = kContraction * v[i] + c[i];
    if (leaf) mark(st, nv);
    else descend(st, buf, level + 1);
  }
}

}  // namespace

double BranchMap::operator()(double y) const {
  double out = slope * y + shift;
  if (wobble != 0.0) out += wobble * std::sin(y + phase);
  return out;
}

double BranchMap::lipschitz() const noexcept { return std::abs(slope) + std::abs(wobble); }

LimitSetCover limit_set_cover(std::span<const BranchMap> maps, int depth, Interval target) {
  if (maps.empty()) throw DimensionError("IFS needs at least one branch");
  if (depth < 1) throw DimensionError("depth must be at least 1");
  if (word_count(maps.size(), depth) > kEnumerationCap)
    throw BudgetError("cylinder enumeration exceeds 2^24 words");
  double lip = 0.0, reach = 0.0;
  for (const auto& g : maps) {
    if (!(g.slope > std::abs(g.wobble))) throw InvariantError("branch map is not increasing");
    lip = std::max(lip, g.lipschitz());
    reach = std::max(reach, std::abs(g.shift) + std::abs(g.wobble));
  }
  if (lip >= 1.0) throw InvariantError("branch maps are not contractions");
  LimitSetCover out;
  const double radius = reach / (1.0 - lip);
  out.invariant = {-radius, radius};
  std::vector<Interval> cyl;
  cyl.reserve(static_cast<std::size_t>(word_count(maps.size(), depth)));
  collect_cylinders(maps, out.invariant, depth, cyl);
  out.cylinders = cyl.size();
  for (const auto& c : cyl) out.max_cylinder_diameter = std::max(out.max_cylinder_diameter, c.width());
  std::sort(cyl.begin(), cyl.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
  for (const auto& c : cyl) {
    if (!out.intervals.empty() && c.lo <= out.intervals.back().hi)
      out.intervals.back().hi = std::max(out.intervals.back().hi, c.hi);
    else
      out.intervals.push_back(c);
  }
  const double umin = out.intervals.front().lo, umax = out.intervals.back().hi;
  double dist = std::max({0.0, target.lo - umin, umax - target.hi, umin - target.lo, target.hi - umax});
  for (std::size_t i = 1; i < out.intervals.size(); ++i) {
    const double a = std::max(out.intervals[i - 1].hi, target.lo);
    const double b = std::min(out.intervals[i].lo, target.hi);
    if (b <= a) continue;
    // farthest target point inside the gap from the union
    const double left = out.intervals[i - 1].hi, right = out.intervals[i].lo;
    const double mid = std::clamp(0.5 * (left + right), a, b);
    dist = std::max(dist, std::min(mid - left, right - mid));
  }
  out.cover_distance = dist;
  out.hausdorff_bound = dist + out.max_cylinder_diameter;
  return out;
}

Letter ParablenderIfs::letter(std::size_t index) const {
  return Letter(static_cast<std::uint32_t>(index), dprime() + 1);
}

std::vector<Jet> ParablenderIfs::branch_constants(int order) const {
  std::vector<double> a(static_cast<std::size_t>(k), 0.0);
  if (!a0.empty()) {
    if (static_cast<int>(a0.size()) != k) throw DimensionError("a0 must have k entries");
    a = a0;
  }
  if (!offsets.empty() && offsets.size() != letter_count())
    throw DimensionError("one offset per letter expected");
  const auto aj = parameter_jets(a, order);
  std::vector<Jet> out;
  for (std::size_t i = 0; i < letter_count(); ++i) {
    const Letter l = letter(i);
    const SignedPolynomial poly(k, d, l);
    Jet c = eval_P_delta(poly, aj) * epsilon + l.sign(0) / 3.0;
    if (!offsets.empty()) c += offsets[i];
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<BranchMap> ParablenderIfs::branch_maps() const {
  std::vector<BranchMap> out;
  for (const auto& c : branch_constants(0)) out.push_back({kContraction, c.value(), 0.0, 0.0});
  return out;
}

LimitSetCover limit_set_cover(const ParablenderIfs& ifs, int depth) {
  const auto maps = ifs.branch_maps();
  return limit_set_cover(maps, depth);
}

SeriesValue y_series(const SymbolWord& word, double eps, std::span<const Jet> a) {
  if (word.empty()) throw DimensionError("y_series needs a non-empty word");
  if (a.empty()) throw DimensionError("y_series needs parameter jets");
  const int k = static_cast<int>(a.size());
  const int len = word.letters.front().length();
  const int d = infer_degree(k, len);
  ParablenderIfs ifs{k, d, eps, {}, {}};
  SeriesValue out{Jet(a[0].space()), {}};
  double weight = 1.0;
  for (const auto& l : word.letters) {
    if (l.length() != len) throw DimensionError("word letters have different lengths");
    const SignedPolynomial poly(k, d, l);
    out.value += (eval_P_delta(poly, a) * eps + l.sign(0) / 3.0) * weight;
    weight *= kContraction;
  }
  // tail over the whole alphabet, measured at the jet's base point
  std::vector<double> base(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) base[static_cast<std::size_t>(i)] = a[static_cast<std::size_t>(i)].value();
  ifs.a0 = base;
  out.remainder = tail_bound(ifs.branch_constants(a[0].order()), static_cast<int>(word.depth()));
  return out;
}

JetReachableSet jet_reachable_set(const ParablenderIfs& ifs, int depth) {
  if (depth < 1) throw DimensionError("depth must be at least 1");
  const auto total = word_count(ifs.letter_count(), depth);
  if (total > kEnumerationCap) throw BudgetError("jet enumeration exceeds 2^24 words");
  const auto constants = ifs.branch_constants(ifs.d);
  JetReachableSet out;
  out.k = ifs.k;
  out.order = ifs.d;
  out.depth = depth;
  out.raw_count = total;
  out.remainder = tail_bound(constants, depth);

  const std::size_t m = constants.front().size();
  std::vector<std::vector<double>> cs;
  for (const auto& c : constants) cs.emplace_back(c.coeffs().begin(), c.coeffs().end());
  std::vector<std::vector<double>> level{std::vector<double>(m, 0.0)};
  for (int l = 0; l < depth; ++l) {
    std::vector<std::vector<double>> next;
    next.reserve(level.size() * cs.size());
    for (const auto& v : level)
      for (const auto& c : cs) {
        std::vector<double> w(m);
        for (std::size_t i = 0; i < m; ++i) w[i] = kContraction * v[i] + c[i];
        next.push_back(std::move(w));
      }
    level = std::move(next);
  }
  // deduplicate on a 1e-12 lattice
  std::vector<std::pair<std::vector<long long>, std::size_t>> keys;
  keys.reserve(level.size());
  for (std::size_t i = 0; i < level.size(); ++i) {
    std::vector<long long> key(m);
    for (std::size_t j = 0; j < m; ++j) key[j] = std::llround(level[i][j] * 1e12);
    keys.emplace_back(std::move(key), i);
  }
  std::sort(keys.begin(), keys.end());
  for (std::size_t i = 0; i < keys.size(); ++i)
    if (i == 0 || keys[i].first != keys[i - 1].first) out.points.push_back(level[keys[i].second]);
  return out;
}

CoverageCertificate jet_coverage_certificate(const JetReachableSet& set, const JetBox& box,
                                             double epsilon, double cell_factor) {
  CoverageCertificate cert;
  cert.box = box;
  cert.depth = set.depth;
  cert.epsilon = epsilon;
  const CellGrid grid(box, set.remainder, cell_factor);
  if (grid.inconclusive()) {
    cert.inconclusive = true;
    cert.reason = "cells narrower than the remainder bounds";
    cert.cells_per_axis = grid.counts();
    cert.cells_total = grid.total();
    return cert;
  }
  std::vector<std::uint8_t> covered(grid.total(), 0);
  for (const auto& p : set.points) {
    if (p.size() != box.lo.size()) throw DimensionError("point and box dimensions differ");
    ++cert.points_examined;
    if (auto id = grid.cell_of(p.data())) covered[*id] = 1;
  }
  finish_certificate(cert, grid, covered);
  return cert;
}

CoverageCertificate stream_jet_coverage(const ParablenderIfs& ifs, int depth, const JetBox& box,
                                        double cell_factor, unsigned threads) {
  if (depth < 1 || depth > 40 * (ifs.dprime() + 1)) throw DimensionError("depth out of range");
  const auto constants = ifs.branch_constants(ifs.d);
  CoverageCertificate cert;
  cert.box = box;
  cert.depth = depth;
  cert.epsilon = ifs.epsilon;
  const auto remainder = tail_bound(constants, depth);
  const CellGrid grid(box, remainder, cell_factor);
  if (grid.inconclusive()) {
    cert.inconclusive = true;
    cert.reason = "cells narrower than the remainder bounds";
    cert.cells_per_axis = grid.counts();
    cert.cells_total = grid.total();
    return cert;
  }
  std::vector<std::vector<double>> cs;
  for (const auto& c : constants) cs.emplace_back(c.coeffs().begin(), c.coeffs().end());
  const std::size_t m = cs.front().size();
  std::vector<std::uint8_t> covered(grid.total(), 0);
  std::atomic<std::uint64_t> count{0};
  std::atomic<bool> done{false};

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(cs.size()));
  std::vector<std::uint64_t> examined(threads, 0);
  auto worker = [&](unsigned t) {
    StreamState st{&cs, m, depth, &grid, &covered, &count, &done};
    std::vector<double> buf(static_cast<std::size_t>(depth + 1) * m, 0.0);
    for (std::size_t first = t; first < cs.size(); first += threads) {
      for (std::size_t i = 0; i < m; ++i) buf[m + i] = cs[first][i];
      if (depth == 1) mark(st, &buf[m]);
      else descend(st, buf, 1);
    }
    examined[t] = st.examined;
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker, t);
  }
  for (auto e : examined) cert.points_examined += e;
  finish_certificate(cert, grid, covered);
  return cert;
}

}  // namespace parablend
