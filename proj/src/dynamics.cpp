#include "parablend/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace parablend {

double CircleValue::distance(CircleValue a, CircleValue b) {
  const double d = std::abs(a.x_ - b.x_);
  return std::min(d, 6.0 - d);
}

CircleValue eval_Q(CircleValue x, int power) {
  if (power < 1) throw DimensionError("eval_Q: power must be at least 1");
  double v = x.value();
  for (int i = 0; i < power; ++i) v = reduce_circle(4.0 * v - 3.0);
  return CircleValue(v);
}

namespace {

double binomial(int n, int r) {
  double c = 1.0;
  for (int i = 1; i <= r; ++i) c = c * (n - r + i) / i;
  return c;
}

// t^(m+1) * sum_j C(m+j, j) (1-t)^j, expanded into monomials.
std::vector<double> smoothstep_coefficients(int m) {
  std::vector<double> poly(static_cast<std::size_t>(2 * m + 2), 0.0);
  for (int j = 0; j <= m; ++j) {
    const double c = binomial(m + j, j);
    for (int i = 0; i <= j; ++i) {
      const double term = c * binomial(j, i) * ((i % 2) ? -1.0 : 1.0);
      poly[static_cast<std::size_t>(m + 1 + i)] += term;
    }
  }
  return poly;
}

double poly_derivative(const std::vector<double>& poly, double s, int order) {
  double acc = 0.0;
  for (std::size_t i = poly.size(); i-- > static_cast<std::size_t>(order);) {
    double falling = 1.0;
    for (int q = 0; q < order; ++q) falling *= static_cast<double>(i) - q;
    acc = acc * s + poly[i] * falling;
  }
  return acc;
}

}  // namespace

BumpProfile::BumpProfile(double support_lo, double plateau_lo, double plateau_hi,
                         double support_hi, int smoothness)
    : lo_(support_lo), plo_(plateau_lo), phi_(plateau_hi), hi_(support_hi), m_(smoothness) {
  if (!(lo_ < plo_ && plo_ <= phi_ && phi_ < hi_))
    throw ConfigError("bump profile needs support_lo < plateau_lo <= plateau_hi < support_hi");
  if (m_ < 1) throw ConfigError("bump profile smoothness must be at least 1");
  poly_ = smoothstep_coefficients(m_);
}

BumpProfile BumpProfile::centered(double plateau_half, double support_half, int smoothness) {
  return BumpProfile(-support_half, -plateau_half, plateau_half, support_half, smoothness);
}

double BumpProfile::derivative(double t, int order) const {
  if (order == 0) return (*this)(t);
  if (t <= lo_ || t >= hi_ || (t >= plo_ && t <= phi_)) return 0.0;
  if (t < plo_) {
    const double w = 1.0 / (plo_ - lo_);
    return poly_derivative(poly_, (t - lo_) * w, order) * std::pow(w, order);
  }
  const double w = 1.0 / (hi_ - phi_);
  return poly_derivative(poly_, (hi_ - t) * w, order) * std::pow(-w, order);
}

std::string to_string(ConstructionKind kind) {
  switch (kind) {
    case ConstructionKind::base: return "base";
    case ConstructionKind::dissipative: return "dissipative";
    case ConstructionKind::coupled: return "coupled";
  }
  return "?";
}

ConstructionKind parse_construction_kind(const std::string& text) {
  if (text == "base") return ConstructionKind::base;
  if (text == "dissipative") return ConstructionKind::dissipative;
  if (text == "coupled") return ConstructionKind::coupled;
  throw ConfigError("unknown construction '" + text + "' (base | dissipative | coupled)");
}

namespace {

std::vector<BranchRegion> build_regions(int dprime) {
  std::vector<BranchRegion> out;
  const int len = dprime + 1;
  for (std::uint32_t mask = 0; mask < (1u << len); ++mask) {
    Letter l(mask, len);
    double lo = -1.0, hi = 1.0;
    for (int i = dprime; i >= 0; --i) {
      const double s = l.sign(i);
      lo = (lo + 3.0 * s) / 4.0;
      hi = (hi + 3.0 * s) / 4.0;
    }
    out.push_back({l, lo, hi});
  }
  std::sort(out.begin(), out.end(),
            [](const BranchRegion& a, const BranchRegion& b) { return a.delta < b.delta; });
  return out;
}

double min_gap(const std::vector<BranchRegion>& regions) {
  std::vector<std::pair<double, double>> iv;
  for (const auto& r : regions) iv.emplace_back(r.lo, r.hi);
  std::sort(iv.begin(), iv.end());
  double g = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < iv.size(); ++i) g = std::min(g, iv[i].first - iv[i - 1].second);
  return g;
}

}  // namespace

Construction::Construction(const ConstructionParams& params)
    : params_(params),
      dprime_(dprime_for(params.k, params.d)),
      profile_order_(std::max(params.smoothness, params.d)),
      rho_(0.25, 0.4, 1.1, 1.5, 1),
      saddle_(BumpProfile::centered(0.5, 1.0, 1)),
      blend_(BumpProfile::centered(0.1, 0.2, 1)) {
  const int r = params.smoothness, d = params.d;
  if (!(r > d || (r == d && d >= 2)))
    throw ConfigError("smoothness r and order d must satisfy r > d or r = d >= 2");
  if (!(params.epsilon >= 0.0 && params.epsilon < 0.25))
    throw ConfigError("epsilon must lie in [0, 0.25)");
  regions_ = build_regions(dprime_);
  const double gap = regions_.size() > 1 ? min_gap(regions_) : 1.0;
  mu_ = params.mu.value_or(std::min(0.02, gap / 5.0));
  if (!(mu_ > 0.0 && 4.0 * mu_ < gap && mu_ <= 0.02))
    throw ConfigError("mu must be positive, at most 0.02 and below a quarter of the strip gaps");
  sigma_ = std::pow(4.0, dprime_ + 1);
  lambda_ = std::pow(4.0, -(dprime_ + 2) * (dprime_ + 2));
  const double eta_cap = std::pow(4.0, -d - 2);
  eta_ = params.eta.value_or(std::pow(4.0, -dprime_ - 2) / 2.0);
  if (!(eta_ > 0.0 && eta_ < eta_cap))
    throw ConfigError("eta must lie in (0, 4^(-d-2))");
  approach_ = dprime_ >= 1 ? 1 : 2;
  fold_ = 1.0 / (8.0 * std::pow(sigma_, 2 * approach_));

  const int m = profile_order_;
  rho_ = BumpProfile(0.25, 0.5 - 3.0 * mu_, 1.0 + 3.0 * mu_, 1.5, m);
  saddle_ = BumpProfile::centered(0.5, 1.0, m);
  blend_ = BumpProfile::centered(eta_, 2.0 * eta_, m);
  for (const auto& reg : regions_) {
    polys_.emplace_back(params.k, params.d, reg.delta);
    eps_profiles_.emplace_back(reg.lo - 2.0 * mu_, reg.lo - mu_, reg.hi + mu_, reg.hi + 2.0 * mu_,
                               m);
  }
}

PlanePoint Construction::homoclinic_point() const noexcept {
  return {3.0 - 3.0 / std::pow(sigma_, approach_), 0.0};
}

std::size_t Construction::region_index(const Letter& delta) const {
  for (std::size_t i = 0; i < regions_.size(); ++i)
    if (regions_[i].delta == delta) return i;
  throw DimensionError("letter " + delta.to_string() + " does not belong to this construction");
}

std::optional<std::size_t> Construction::branch_at(double x) const {
  // regions_ is sorted by delta, so the first hit is the lowest delta.
  for (std::size_t i = 0; i < regions_.size(); ++i)
    if (x >= regions_[i].lo - mu_ && x <= regions_[i].hi + mu_) return i;
  return std::nullopt;
}

std::optional<std::size_t> Construction::epsilon_region_at(double x) const {
  if (params_.epsilon == 0.0) return std::nullopt;
  for (std::size_t i = 0; i < regions_.size(); ++i)
    if (x > regions_[i].lo - 2.0 * mu_ && x < regions_[i].hi + 2.0 * mu_) return i;
  return std::nullopt;
}

bool Construction::in_partial_domain(double x, double y) const {
  return branch_at(x).has_value() && std::abs(y) <= 1.5 + mu_;
}

bool Construction::on_partial_seam(double x, double y) const {
  if (std::abs(y) == 1.5 + mu_) return true;
  for (const auto& r : regions_)
    if (x == r.lo - mu_ || x == r.hi + mu_) return true;
  return false;
}

double Construction::branch_inverse_x(std::size_t region, double x_image) const {
  const auto& r = regions_.at(region);
  double x = x_image;
  for (int i = dprime_; i >= 0; --i) x = (x + 3.0 * r.delta.sign(i)) / 4.0;
  return x;
}

int Construction::chart_region_of_arc(double lo, double hi) const {
  // Arcs are given by endpoints in the lift; compare against each region's lift.
  auto classify = [&](double a, double b, double rlo, double rhi) {
    // shift [a, b] by whole turns to sit nearest to [rlo, rhi]
    const double mid = 0.5 * (rlo + rhi);
    const double shift = 6.0 * std::round(((a + b) / 2.0 - mid) / 6.0);
    a -= shift;
    b -= shift;
    if (b <= rlo || a >= rhi) return 0;   // disjoint
    if (a >= rlo && b <= rhi) return 1;   // inside
    return 2;                             // straddles
  };
  struct Zone {
    double lo, hi;
  };
  std::vector<Zone> zones;
  for (const auto& r : regions_) zones.push_back({r.lo - 2.0 * mu_, r.hi + 2.0 * mu_});
  zones.push_back({-0.25, 0.25});  // coupling strip
  zones.push_back({2.0, 4.0});     // saddle strip
  int found = -1;
  for (std::size_t i = 0; i < zones.size(); ++i) {
    const int c = classify(lo, hi, zones[i].lo, zones[i].hi);
    if (c == 2) throw SupportError("perturbation support straddles the boundary of a chart region");
    if (c == 1) found = static_cast<int>(i);
  }
  return found;
}

FamilyHandle::FamilyHandle(const ConstructionParams& params)
    : FamilyHandle(std::make_shared<const Construction>(params)) {}

FamilyHandle::FamilyHandle(std::shared_ptr<const Construction> base)
    : base_(std::move(base)),
      window_(BumpProfile::centered(0.5, 1.0, base_->smoothness_order())),
      spatial_(BumpProfile::centered(0.25, 1.0, base_->smoothness_order())) {}

void FamilyHandle::check_support(const PlanePoint& c, double radius,
                                 const ParameterWindow& w) const {
  if (!(radius > 0.0 && radius <= 1.0)) throw SupportError("spatial radius must lie in (0, 1]");
  if (!(w.alpha > 0.0)) throw SupportError("parameter window needs alpha > 0");
  if (static_cast<int>(w.center.size()) != k())
    throw SupportError("parameter window center must have k entries");
  (void)base_->chart_region_of_arc(c.x - radius, c.x + radius);
}

FamilyHandle FamilyHandle::push_perturbation(Perturbation p) const {
  if (const auto* add = std::get_if<AdditivePerturbation>(&p)) {
    check_support(add->center, add->radius, add->window);
    for (const auto& amp : add->amplitude)
      if (amp.empty() || amp.vars() != k())
        throw DimensionError("perturbation amplitude must be a jet in the k parameters");
  } else {
    const auto& snap = std::get<SnapPerturbation>(p);
    check_support(snap.center, snap.radius, snap.window);
    for (const auto& c : snap.shift)
      if (c.empty() || c.vars() != k())
        throw DimensionError("snap shift coefficients must be jets in the k parameters");
  }
  FamilyHandle out = *this;
  out.stack_.push_back(std::move(p));
  return out;
}

FamilyHandle FamilyHandle::without_perturbation(std::size_t index) const {
  if (index >= stack_.size()) throw DimensionError("no perturbation at that index");
  FamilyHandle out = *this;
  out.stack_.erase(out.stack_.begin() + static_cast<std::ptrdiff_t>(index));
  return out;
}

Point<Jet> eval_family(const FamilyHandle& h, const PlanePoint& z, std::span<const Jet> a) {
  if (static_cast<int>(a.size()) != h.k()) throw DimensionError("eval_family: need k parameter jets");
  const auto& sp = a[0].space();
  for (const auto& j : a)
    if (j.space() != sp) throw DimensionError("eval_family: parameter jets must share a space");
  const Point<Jet> zj{Jet::constant(sp, z.x), Jet::constant(sp, z.y)};
  return h.eval(zj, a);
}

SpatialDerivatives jacobian(const FamilyHandle& h, const PlanePoint& z, std::span<const Jet> a,
                            int spatial_order) {
  if (a.empty()) throw DimensionError("jacobian: need k parameter jets");
  const auto& c = h.construction();
  if (c.params().restrict_to_regions && c.on_partial_seam(reduce_circle(z.x), z.y))
    throw SeamError("jacobian requested on a strip boundary");
  const auto& sp = a[0].space();
  return jacobian(h, Point<Jet>{Jet::constant(sp, z.x), Jet::constant(sp, z.y)}, a, spatial_order);
}

SpatialDerivatives jacobian(const FamilyHandle& h, const Point<Jet>& z, std::span<const Jet> a,
                            int spatial_order) {
  if (spatial_order != 1 && spatial_order != 2)
    throw DimensionError("jacobian: spatial order must be 1 or 2");
  const int k = h.k();
  if (static_cast<int>(a.size()) != k) throw DimensionError("jacobian: need k parameter jets");
  const auto& c = h.construction();
  if (c.params().restrict_to_regions && c.on_partial_seam(reduce_circle(z.x.value()), z.y.value()))
    throw SeamError("jacobian requested on a strip boundary");
  const auto& small = a[0].space();
  const int order = small->order();
  const auto big = JetSpace::get(k + 2, order + spatial_order);
  std::vector<Jet> ab;
  for (const auto& j : a) ab.push_back(resize(j, big));
  const Point<Jet> zb{resize(z.x, big) + Jet::variable(big, k, 0.0),
                      resize(z.y, big) + Jet::variable(big, k + 1, 0.0)};
  const Point<Jet> img = h.eval(zb, std::span<const Jet>(ab));
  const std::array<const Jet*, 2> comp{&img.x, &img.y};

  SpatialDerivatives out;
  const int zero[] = {0, 0};
  out.value = {slice(img.x, zero, small), slice(img.y, zero, small)};
  for (int ci = 0; ci < 2; ++ci)
    for (int v = 0; v < 2; ++v) {
      int e[2] = {0, 0};
      e[v] = 1;
      out.first[ci][v] = slice(*comp[ci], e, small);
    }
  if (spatial_order == 2) {
    std::array<std::array<std::array<Jet, 2>, 2>, 2> second;
    for (int ci = 0; ci < 2; ++ci)
      for (int v = 0; v < 2; ++v)
        for (int w = 0; w < 2; ++w) {
          int e[2] = {0, 0};
          ++e[v];
          ++e[w];
          Jet s = slice(*comp[ci], e, small);
          if (v == w) s *= 2.0;
          second[ci][v][w] = std::move(s);
        }
    out.second = std::move(second);
  }
  return out;
}

std::vector<Jet> parameter_jets(std::span<const double> a0, int order) {
  const auto sp = JetSpace::get(static_cast<int>(a0.size()), order);
  std::vector<Jet> out;
  for (std::size_t i = 0; i < a0.size(); ++i)
    out.push_back(Jet::variable(sp, static_cast<int>(i), a0[i]));
  return out;
}

}  // namespace parablend
