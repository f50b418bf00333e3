#pragma once

// The annulus R/6Z x R, the plateau functions, the three explicit maps
// (blender model, dissipative saddle deformation, saddle coupled to the
// blender through a fold) and stacks of localized perturbations on top of
// them.  Every map is written once as a template over the scalar type; see
// scalar.hpp for the scalars it is instantiated with.

#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "parablend/errors.hpp"
#include "parablend/jets.hpp"
#include "parablend/scalar.hpp"
#include "parablend/signed_polynomial.hpp"

namespace parablend {

// Canonical representative in [-3, 3).
template <class S>
S reduce_circle(const S& x) {
  const double turns = circle_turns(x);
  if (turns == 0.0) return x;
  return x - 6.0 * turns;
}

class CircleValue {
 public:
  CircleValue() = default;
  explicit CircleValue(double x) : x_(reduce_circle(x)) {}

  [[nodiscard]] double value() const noexcept { return x_; }
  // Length of the shorter arc between the two points.
  [[nodiscard]] static double distance(CircleValue a, CircleValue b);
  bool operator==(const CircleValue&) const = default;

 private:
  double x_ = 0.0;
};

// x -> 4x - 3 iterated `power` times.
CircleValue eval_Q(CircleValue x, int power);

template <class S>
struct Point {
  S x;
  S y;
};
using PlanePoint = Point<double>;

// 0 outside [support_lo, support_hi], 1 on [plateau_lo, plateau_hi], and the
// degree 2m+1 smoothstep on the two ramps, so m derivatives are continuous at
// every knot.
class BumpProfile {
 public:
  BumpProfile(double support_lo, double plateau_lo, double plateau_hi, double support_hi,
              int smoothness);
  static BumpProfile centered(double plateau_half, double support_half, int smoothness);

  template <class S>
  S operator()(const S& t) const {
    const double v = value_of(t);
    if (v <= lo_ || v >= hi_) return constant_like(t, 0.0);
    if (v >= plo_ && v <= phi_) return constant_like(t, 1.0);
    if (v < plo_) return ramp((t - lo_) * (1.0 / (plo_ - lo_)));
    return ramp((hi_ - t) * (1.0 / (hi_ - phi_)));
  }

  [[nodiscard]] double derivative(double t, int order) const;
  [[nodiscard]] double support_lo() const noexcept { return lo_; }
  [[nodiscard]] double plateau_lo() const noexcept { return plo_; }
  [[nodiscard]] double plateau_hi() const noexcept { return phi_; }
  [[nodiscard]] double support_hi() const noexcept { return hi_; }
  [[nodiscard]] int smoothness() const noexcept { return m_; }

 private:
  template <class S>
  S ramp(const S& s) const {
    S acc = constant_like(s, poly_.back());
    for (std::size_t i = poly_.size() - 1; i-- > 0;) acc = acc * s + poly_[i];
    return acc;
  }

  double lo_, plo_, phi_, hi_;
  int m_;
  std::vector<double> poly_;  // ascending monomial coefficients of the smoothstep
};

enum class ConstructionKind { base, dissipative, coupled };
std::string to_string(ConstructionKind kind);
ConstructionKind parse_construction_kind(const std::string& text);

struct ConstructionParams {
  ConstructionKind kind = ConstructionKind::coupled;
  int d = 1;
  int k = 1;
  double epsilon = 0.05;
  std::optional<double> mu;
  std::optional<double> eta;
  int smoothness = 3;
  // Only the blender strips are part of the domain; anything else throws.
  bool restrict_to_regions = false;
};

struct BranchRegion {
  Letter delta;
  double lo;  // I_delta = [lo, hi]
  double hi;
};

class Construction {
 public:
  explicit Construction(const ConstructionParams& params);

  [[nodiscard]] const ConstructionParams& params() const noexcept { return params_; }
  [[nodiscard]] ConstructionKind kind() const noexcept { return params_.kind; }
  [[nodiscard]] int d() const noexcept { return params_.d; }
  [[nodiscard]] int k() const noexcept { return params_.k; }
  [[nodiscard]] int dprime() const noexcept { return dprime_; }
  [[nodiscard]] double epsilon() const noexcept { return params_.epsilon; }
  [[nodiscard]] double mu() const noexcept { return mu_; }
  [[nodiscard]] double eta() const noexcept { return eta_; }
  [[nodiscard]] int smoothness_order() const noexcept { return profile_order_; }

  // 4^(d'+1): slope of the x-map on each strip and at the saddle.
  [[nodiscard]] double expansion() const noexcept { return sigma_; }
  // 4^(-(d'+2)^2): vertical factor at the saddle of the dissipative map.
  [[nodiscard]] double saddle_contraction() const noexcept { return lambda_; }
  [[nodiscard]] double fold_scale() const noexcept { return fold_; }
  [[nodiscard]] double fold_slope() const noexcept { return slope_; }
  // The homoclinic point on the local unstable axis is 3 - 3 / sigma^m;
  // m forward steps bring it to (0, 0), one more step to (3, 1).
  [[nodiscard]] int approach_steps() const noexcept { return approach_; }

  [[nodiscard]] PlanePoint saddle() const noexcept { return {reduce_circle(3.0), 0.0}; }
  [[nodiscard]] PlanePoint homoclinic_point() const noexcept;
  [[nodiscard]] PlanePoint fold_point() const noexcept { return {0.0, 0.0}; }
  [[nodiscard]] PlanePoint tangency_image() const noexcept { return {reduce_circle(3.0), 1.0}; }

  [[nodiscard]] std::span<const BranchRegion> regions() const noexcept { return regions_; }
  [[nodiscard]] const SignedPolynomial& polynomial(std::size_t region) const {
    return polys_.at(region);
  }
  [[nodiscard]] std::size_t region_index(const Letter& delta) const;
  // Branch whose mu-neighbourhood of I_delta contains x.
  [[nodiscard]] std::optional<std::size_t> branch_at(double x) const;
  // Branch whose epsilon term is nonzero somewhere near x (2 mu neighbourhood).
  [[nodiscard]] std::optional<std::size_t> epsilon_region_at(double x) const;
  [[nodiscard]] bool in_partial_domain(double x, double y) const;
  [[nodiscard]] bool on_partial_seam(double x, double y) const;
  // Inverse of the x-map restricted to the strip of `region`.
  [[nodiscard]] double branch_inverse_x(std::size_t region, double x_image) const;
  // Identifier of the chart region containing [lo, hi] (a circle arc), or -1
  // when the arc avoids all of them.  Throws SupportError when the arc
  // straddles a region boundary.
  [[nodiscard]] int chart_region_of_arc(double lo, double hi) const;

  // The smooth plateau functions, exposed for tests.
  [[nodiscard]] const BumpProfile& rho_profile() const noexcept { return rho_; }
  [[nodiscard]] const BumpProfile& saddle_profile() const noexcept { return saddle_; }
  [[nodiscard]] const BumpProfile& blend_profile() const noexcept { return blend_; }

  template <class S>
  S odd_plateau(const S& u) const {
    const double v = value_of(u);
    if (v > 0.0) return rho_(u);
    if (v < 0.0) return -rho_(-u);
    return constant_like(u, 0.0);
  }

  template <class S>
  Point<S> eval(const Point<S>& z, std::span<const S> a) const {
    const S u = reduce_circle(z.x);
    const double uv = value_of(u);
    if (params_.restrict_to_regions && !in_partial_domain(uv, value_of(z.y)))
      throw DomainError("point outside the blender strips of a partial construction");
    S X = reduce_circle((u - 1.0) * sigma_ + 1.0);
    S Y = z.y * (2.0 / 3.0) + odd_plateau(u) * (1.0 / 3.0);
    if (params_.kind != ConstructionKind::base) {
      const S s = reduce_circle(u - 3.0);
      // convex form: on the plateau the strip term drops out exactly, so tiny lambda survives
      if (std::abs(value_of(s)) < saddle_.support_hi()) {
        const S w = saddle_(s);
        Y = Y * (1.0 - w) + z.y * lambda_ * w;
      }
    }
    if (params_.kind == ConstructionKind::coupled && std::abs(uv) < blend_.support_hi()) {
      const S b = blend_(u);
      X = reduce_circle(X + b * (u * (-sigma_) + (u * u * 2.0 - z.y) * fold_));
      Y = Y + b * (u * slope_ + 1.0);
    }
    if (auto idx = epsilon_region_at(uv)) {
      const S chi = eps_profiles_[*idx](u);
      Y = Y + chi * polys_[*idx].evaluate<S>(a) * params_.epsilon;
    }
    return {X, Y};
  }

 private:
  ConstructionParams params_;
  int dprime_;
  int profile_order_;
  double mu_;
  double eta_;
  double sigma_;
  double lambda_;
  double fold_;
  double slope_ = 1.0;
  int approach_;
  std::vector<BranchRegion> regions_;
  std::vector<SignedPolynomial> polys_;
  std::vector<BumpProfile> eps_profiles_;
  BumpProfile rho_;
  BumpProfile saddle_;
  BumpProfile blend_;
};

// prod_i phi((a_i - center_i) / (2 alpha)) with phi = 1 on [-1/2, 1/2] and
// supported in [-1, 1].
struct ParameterWindow {
  std::vector<double> center;
  double alpha = 0.0;
};

// z -> z + phi(|z - center|^2 / radius^2) * window(a) * amplitude(a).
// Amplitudes are Taylor polynomials in (a - window.center) over k variables.
struct AdditivePerturbation {
  PlanePoint center;
  double radius = 0.0;
  ParameterWindow window;
  std::array<Jet, 2> amplitude;
};

// z -> f(z) + window(a) * (f(tau(z)) - f(z)) where tau lifts points near
// `center` vertically by sum_j shift[j](a) * (x - center.x)^j.
struct SnapPerturbation {
  PlanePoint center;
  double radius = 0.0;
  ParameterWindow window;
  std::vector<Jet> shift;
};

using Perturbation = std::variant<AdditivePerturbation, SnapPerturbation>;

class FamilyHandle {
 public:
  explicit FamilyHandle(const ConstructionParams& params);
  explicit FamilyHandle(std::shared_ptr<const Construction> base);

  [[nodiscard]] const Construction& construction() const noexcept { return *base_; }
  [[nodiscard]] std::shared_ptr<const Construction> construction_ptr() const noexcept {
    return base_;
  }
  [[nodiscard]] int k() const noexcept { return base_->k(); }
  [[nodiscard]] std::span<const Perturbation> perturbations() const noexcept { return stack_; }

  // Returns a new handle; this one is left untouched.
  [[nodiscard]] FamilyHandle push_perturbation(Perturbation p) const;
  [[nodiscard]] FamilyHandle without_perturbation(std::size_t index) const;

  template <class S>
  Point<S> eval(const Point<S>& z, std::span<const S> a) const {
    return eval_layers(z, a, stack_.size());
  }

  template <class S>
  Point<S> eval_layers(const Point<S>& z, std::span<const S> a, std::size_t layers) const {
    Point<S> out = base_->eval(z, a);
    for (std::size_t i = 0; i < layers; ++i) {
      if (const auto* add = std::get_if<AdditivePerturbation>(&stack_[i]))
        apply_additive(*add, z, a, out);
      else
        apply_snap(std::get<SnapPerturbation>(stack_[i]), z, a, i, out);
    }
    return out;
  }

  // phi on [-1, 1] used for windows and spatial bumps.
  [[nodiscard]] const BumpProfile& window_profile() const noexcept { return window_; }

  template <class S>
  std::optional<S> window_factor(const ParameterWindow& w, std::span<const S> a) const {
    S f = unit_like(a[0]);
    const double scale = 1.0 / (2.0 * w.alpha);
    for (std::size_t i = 0; i < w.center.size(); ++i) {
      const S t = (a[i] - w.center[i]) * scale;
      if (std::abs(value_of(t)) >= 1.0) return std::nullopt;
      f = f * window_(t);
    }
    return f;
  }

  template <class S>
  std::optional<S> spatial_factor(const PlanePoint& c, double radius, const Point<S>& z) const {
    const S dx = reduce_circle(z.x - c.x);
    const S dy = z.y - c.y;
    const S r2 = (dx * dx + dy * dy) * (1.0 / (radius * radius));
    if (value_of(r2) >= 1.0) return std::nullopt;
    return spatial_(r2);
  }

 private:
  template <class S>
  static std::vector<S> offsets(const ParameterWindow& w, std::span<const S> a) {
    std::vector<S> o;
    o.reserve(w.center.size());
    for (std::size_t i = 0; i < w.center.size(); ++i) o.push_back(a[i] - w.center[i]);
    return o;
  }

  template <class S>
  void apply_additive(const AdditivePerturbation& p, const Point<S>& z, std::span<const S> a,
                      Point<S>& out) const {
    if (p.amplitude[0].max_abs() == 0.0 && p.amplitude[1].max_abs() == 0.0) return;
    auto w = window_factor(p.window, a);
    if (!w) return;
    auto s = spatial_factor(p.center, p.radius, z);
    if (!s) return;
    const S weight = *w * *s;
    const auto o = offsets(p.window, a);
    const S unit = unit_like(a[0]);
    std::span<const S> os(o);
    if (p.amplitude[0].max_abs() != 0.0)
      out.x = reduce_circle(out.x + weight * taylor_polynomial<S>(p.amplitude[0], os, unit));
    if (p.amplitude[1].max_abs() != 0.0)
      out.y = out.y + weight * taylor_polynomial<S>(p.amplitude[1], os, unit);
  }

  template <class S>
  void apply_snap(const SnapPerturbation& p, const Point<S>& z, std::span<const S> a,
                  std::size_t layer, Point<S>& out) const {
    bool zero = true;
    for (const auto& c : p.shift) zero = zero && c.max_abs() == 0.0;
    if (zero) return;
    auto w = window_factor(p.window, a);
    if (!w) return;
    auto s = spatial_factor(p.center, p.radius, z);
    if (!s) return;
    const auto o = offsets(p.window, a);
    const S unit = unit_like(a[0]);
    std::span<const S> os(o);
    const S dx = reduce_circle(z.x - p.center.x);
    S lift = constant_like(unit, 0.0);
    S power = unit;
    for (const auto& c : p.shift) {
      lift = lift + power * taylor_polynomial<S>(c, os, unit);
      power = power * dx;
    }
    const Point<S> moved{z.x, z.y + *s * lift};
    const Point<S> image = eval_layers(moved, a, layer);
    out.x = reduce_circle(out.x + *w * reduce_circle(image.x - out.x));
    out.y = out.y + *w * (image.y - out.y);
  }

  void check_support(const PlanePoint& c, double radius, const ParameterWindow& w) const;

  std::shared_ptr<const Construction> base_;
  std::vector<Perturbation> stack_;
  BumpProfile window_;
  BumpProfile spatial_;
};

// Image of z as jets in a (a holds k jets over one common space).
Point<Jet> eval_family(const FamilyHandle& h, const PlanePoint& z, std::span<const Jet> a);

struct SpatialDerivatives {
  Point<Jet> value;
  // first[c][v]: derivative of component c (0 = x, 1 = y) in variable v.
  std::array<std::array<Jet, 2>, 2> first;
  // second[c][v][w], present when spatial_order == 2.
  std::optional<std::array<std::array<std::array<Jet, 2>, 2>, 2>> second;
};

SpatialDerivatives jacobian(const FamilyHandle& h, const PlanePoint& z, std::span<const Jet> a,
                            int spatial_order);

// Same at a point that itself depends on the parameters.
SpatialDerivatives jacobian(const FamilyHandle& h, const Point<Jet>& z, std::span<const Jet> a,
                            int spatial_order);

// Value and spatial Jacobian at fixed parameters, T = double or quad.
template <class T>
struct MapJacobian {
  Point<T> value;
  std::array<std::array<T, 2>, 2> m;  // m[component][variable]
};

template <class T>
MapJacobian<T> jacobian_value(const FamilyHandle& h, const Point<T>& z, std::span<const T> a) {
  using D = Dual<T, 2>;
  const std::vector<D> ad(a.begin(), a.end());
  const Point<D> zd{D::variable(z.x, 0), D::variable(z.y, 1)};
  const Point<D> img = h.eval<D>(zd, std::span<const D>(ad));
  return {{img.x.v, img.y.v}, {{{img.x.d[0], img.x.d[1]}, {img.y.d[0], img.y.d[1]}}}};
}

// The coordinate jets a_i expanded at a0, over (k = a0.size(), order).
std::vector<Jet> parameter_jets(std::span<const double> a0, int order);

}  // namespace parablend
