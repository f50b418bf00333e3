#pragma once

// Parabola families, the jet of their minimum, backward preimages through the
// blender strips and the greedy choice of a past whose unstable manifold is
// paratangent to the family.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "parablend/dynamics.hpp"
#include "parablend/hyperbolic.hpp"
#include "parablend/ifs_blender.hpp"
#include "parablend/symbol_word.hpp"

namespace parablend {

// x = offset + scale * t: where the curve's parameter t sits on the circle.
struct ParabolaChart {
  double offset = 0.0;
  double scale = 1.0;
  [[nodiscard]] double x(double t) const noexcept { return offset + scale * t; }
};

struct ParabolaCertificate {
  bool ok = false;
  std::string violated;  // empty when ok
  double endpoint_lo = 0.0;
  double endpoint_hi = 0.0;
  double min_value = 0.0;
  double min_location = 0.0;
  double curvature = 0.0;  // lower bound of d^2 gamma / dt^2 over the sampled domain
};

// gamma_a(t) for t in a segment, a in R^k.  Cheap to copy; preimages share
// their ancestors.
class ParabolaFamily {
 public:
  enum class Kind { analytic, transformed, sampled };
  using ValueFn = std::function<double(double, std::span<const double>)>;
  using JetFn = std::function<Jet(const Jet&, std::span<const Jet>)>;

  // f must be callable as f(double, span<const double>) and f(Jet, span<const Jet>).
  template <class F>
  static ParabolaFamily analytic(int k, Interval domain, F f) {
    return from_functions(k, domain, ValueFn(f), JetFn(f));
  }
  static ParabolaFamily from_functions(int k, Interval domain, ValueFn value, JetFn jet);

  // sum_j coeffs[j](a) t^j, each coefficient a Taylor polynomial in a around 0.
  static ParabolaFamily polynomial(int k, Interval domain, std::vector<Jet> coeffs);

  // Chebyshev interpolant of `source` at `nodes` points over its domain,
  // keeping parameter jets of the given order at a0.
  static ParabolaFamily sampled(const ParabolaFamily& source, std::span<const double> a0,
                                int order, int nodes = 64);

  [[nodiscard]] Kind kind() const;
  [[nodiscard]] int k() const noexcept { return k_; }
  [[nodiscard]] const Interval& domain() const noexcept { return domain_; }
  [[nodiscard]] const ParabolaChart& chart() const noexcept { return chart_; }
  // Number of preimage steps between this family and its root.
  [[nodiscard]] int generation() const noexcept { return generation_; }

  [[nodiscard]] double value(double t, std::span<const double> a) const;
  // t and a live in one jet space.
  [[nodiscard]] Jet value(const Jet& t, std::span<const Jet> a) const;
  // First and second t-derivatives at fixed a.
  [[nodiscard]] std::array<double, 3> t_derivatives(double t, std::span<const double> a) const;

  [[nodiscard]] ParabolaCertificate certify(std::span<const double> a0, double mu,
                                            int samples = 33, double slack = 0.0) const;

  // Same curve with the domain replaced (used after sublevel cuts).
  [[nodiscard]] ParabolaFamily restricted(Interval domain) const;

  struct Node;

 private:
  ParabolaFamily() = default;

  std::shared_ptr<const Node> node_;
  int k_ = 1;
  Interval domain_;
  ParabolaChart chart_;
  int generation_ = 0;
  double curvature_floor_ = 0.0;  // inherited curvature bound, 0 if unknown

  friend ParabolaFamily model_preimage(const Construction&, const ParabolaFamily&,
                                       const Letter&, std::span<const double>);
  friend ParabolaFamily sampled_preimage(const FamilyHandle&, const ParabolaFamily&,
                                         const Letter&, std::span<const double>, int, int);
};

struct MinJet {
  double c = 0.0;      // critical point at a0, in the family's t coordinate
  Jet m;               // min gamma as a Taylor jet in a at a0
  double residual = 0.0;  // d gamma / dt at c
  double curvature = 0.0;
  [[nodiscard]] double derivative(std::size_t pos) const { return m.derivative_at(pos); }
};

// Critical point by Newton on d gamma / dt, then the jet of a -> gamma(c_a, a)
// with c_a continued implicitly.
MinJet min_gamma_jet(const ParabolaFamily& p, std::span<const double> a0, int order);

// Exact preimage through the affine strip of delta of the unperturbed maps:
// gamma'(t) = 3/2 (gamma(t) - delta(0)/3 - eps P_delta(a)) cut to the part
// below 3/2 + mu.
ParabolaFamily model_preimage(const Construction& c, const ParabolaFamily& p,
                              const Letter& delta, std::span<const double> a0);

// Preimage through an arbitrary family, solved pointwise at Chebyshev nodes.
ParabolaFamily sampled_preimage(const FamilyHandle& h, const ParabolaFamily& p,
                                const Letter& delta, std::span<const double> a0, int order,
                                int nodes = 64);

// Dispatches to the exact model preimage when the handle carries no
// perturbation, otherwise samples.
ParabolaFamily parabola_preimage(const FamilyHandle& h, const ParabolaFamily& p,
                                 const Letter& delta, std::span<const double> a0);

struct DaggerMargins {
  double value = 0.0;                // 2/3 - |m_0|
  std::vector<double> derivatives;   // 2 eps - |d^alpha m| for each monomial of degree >= 1
  [[nodiscard]] bool holds() const;
};

DaggerMargins dagger_margins(const MinJet& m, double eps);

// Sign of each derivative of the minimum (sign 0 = +1).  Throws
// InvariantError when the margins are violated.
Letter greedy_step(const MinJet& m, double eps);

// A parameter-dependent affine map z -> z + A(a) z + b(a), every entry a
// Taylor polynomial around 0.
struct AffineChart {
  std::array<std::array<Jet, 2>, 2> linear;  // A, small
  std::array<Jet, 2> shift;

  static AffineChart identity(int k, int order);
  // Entries drawn uniformly with total C^d size about `size`.
  static AffineChart random(int k, int order, double size, std::uint64_t seed);
};

// The curve h_a(Graph gamma_a) as a graph over the new x coordinate.
ParabolaFamily image_under(const ParabolaFamily& p, const AffineChart& h,
                           std::span<const double> a0);

struct GreedyOptions {
  int sampled_charts = 8;  // random eps^2 charts checked at every step
  std::uint64_t seed = 1;
  double certificate_slack = 1e-6;
};

struct GreedyTrace {
  SymbolWord word;                            // letters[0] chosen first
  std::vector<MinJet> mins;                   // depth + 1 entries
  std::vector<DaggerMargins> margins;         // depth + 1 entries
  std::vector<ParabolaCertificate> certificates;
  int sampled_charts = 0;
  bool charts_ok = true;
  std::string chart_failure;
  Jet eta;
  std::optional<ParabolaFamily> final_parabola;
};

GreedyTrace greedy_code(const FamilyHandle& h, const ParabolaFamily& p,
                        std::span<const double> a0, int depth, const GreedyOptions& opts = {});

// min gamma(a) minus the height of the unstable manifold of the periodic
// continuation of `word`, as a jet of the construction's order d.
Jet eta_jet(const FamilyHandle& h, const ParabolaFamily& p, const SymbolWord& word,
            std::span<const double> a0);

double default_paratangency_tolerance(int depth);

struct ParatangencyVerdict {
  std::vector<bool> pass;        // one per jet degree 0..order
  std::vector<double> measured;  // largest |d^alpha eta| with |alpha| = degree
  std::vector<double> tolerance;
  [[nodiscard]] bool all() const;
};

// tol holds one tolerance per degree; a single entry applies to every degree.
ParatangencyVerdict paratangency_verdict(const Jet& eta, std::span<const double> tol);

}  // namespace parablend
