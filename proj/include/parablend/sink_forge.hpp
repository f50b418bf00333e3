#pragma once

// Homoclinic tangency normal forms for the coupled construction, the two
// localized perturbations that flatten the unfolding and push the critical
// value onto a curve of the stable foliation, sink detection by iteration in
// quad precision and the trapping-box contraction certificate.

#include <complex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "parablend/dynamics.hpp"
#include "parablend/hyperbolic.hpp"

namespace parablend {

// (u, v) = (dx - across(dv), dv - along(du)) around `center`, where dx, dy
// are offsets from the center (x on the circle), `along` is the graph of the
// curve straightened to the u axis and `across` the graph of the curve
// straightened to the v axis (empty: the v axis is vertical).  All
// coefficients are Taylor jets in a at `parameter`.
struct GraphChart {
  Point<Jet> center;
  std::vector<Jet> along;
  std::vector<Jet> across;
  std::vector<double> parameter;

  [[nodiscard]] PlanePoint to_chart(const PlanePoint& z) const;
  [[nodiscard]] Point<quad> to_chart(const Point<quad>& z) const;
  [[nodiscard]] Point<quad> from_chart(const Point<quad>& w) const;
  [[nodiscard]] PlanePoint from_chart(const PlanePoint& w) const;
  // Derivative of to_chart at z (rows: u, v).
  [[nodiscard]] std::array<std::array<double, 2>, 2> derivative(const PlanePoint& z) const;
};

// Where the construction places its homoclinic orbit.
struct TangencyGuess {
  PlanePoint saddle;      // the fixed point
  PlanePoint homoclinic;  // P on the local unstable manifold of the saddle
  int steps = 1;          // f^steps(P) lies on the local stable manifold
};

TangencyGuess coupled_tangency_guess(const Construction& c);

struct TangencyOptions {
  int order = -1;  // jet order in a; -1 means d + 1
  int manifold_degree = 5;
  double piece_half_width = 0.05;  // of the unstable piece at the pre-tangency point
  // Replaces the unstable piece obtained by pushing the saddle's local
  // unstable manifold (used for snapped quasi-homoclinic pieces).
  std::optional<GraphPiece> unstable_piece;
  double residual_tolerance = 1e-8;
  double curvature_margin = 1e-3;
  double angle_tolerance = 1e-4;
};

// A_a, B_a with their spatial and parameter derivatives at one grid offset;
// jets over (a_1..a_k, x, y).
struct TransitionSample {
  PlanePoint offset;
  Jet A;
  Jet B;
};

// Normal form at a homoclinic tangency: phi o f o psi^-1 = (0, q0) + (A, B)
// near the point before the tangency, phi straightening the saddle's
// manifolds and psi the unstable curve through the pre-tangency point.
struct TangencyData {
  std::vector<double> parameter;
  int order = 0;
  TangencyGuess guess;
  HyperbolicPointData saddle;
  GraphChart saddle_chart;     // phi
  GraphChart prefold_chart;    // psi, centered at the located tangency preimage
  std::vector<PlanePoint> approach;  // P, f(P), ..., the tangency preimage
  quad q0 = 0;                 // v coordinate of the tangency image

  Jet critical_point;          // c_a in psi coordinates
  Jet critical_value;          // C(a) = A_a(c_a, 0)
  quad critical_point0 = 0;    // both at a0 in quad
  quad critical_value0 = 0;
  double curvature = 0.0;      // d^2 A / dx^2 at (c, 0)
  double residual_value = 0.0;     // |A_0(0)|
  double residual_height = 0.0;    // |B_0(0)|
  double residual_slope = 0.0;     // |d_x A_0(0)|
  double primed_residual = 0.0;    // largest d_x A_a(c_a, 0) coefficient of order <= d - 1
  double angle = 0.0;              // between f(W^u) and W^s at the tangency image

  double theta = 0.0;          // separation of the preimage from its orbit and the approach
  double ball_radius = 0.0;    // support radius used by the perturbations
  double norm_bound = 0.0;     // U
  std::vector<double> nu_radius;
  std::vector<double> nu;      // envelope of |d^d C| over a0 +- radius
  std::vector<TransitionSample> samples;

  [[nodiscard]] PlanePoint prefold() const { return {prefold_chart.center.x.value(), prefold_chart.center.y.value()}; }
  [[nodiscard]] PlanePoint homoclinic() const { return approach.front(); }
  [[nodiscard]] int steps() const noexcept { return guess.steps; }
};

TangencyData tangency_normal_form(const FamilyHandle& h, const TangencyGuess& guess,
                                  std::span<const double> a0, const TangencyOptions& opts = {});

// (A, B) at psi offset xy and parameter a, through h.
PlanePoint transition(const FamilyHandle& h, const TangencyData& td, const PlanePoint& xy,
                      std::span<const double> a);
Point<quad> transition(const FamilyHandle& h, const TangencyData& td, const Point<quad>& xy,
                       std::span<const double> a);

struct DissipationReport {
  double determinant = 0.0;
  double determinant_margin = 0.0;  // 1 - |det|
  double condition = 0.0;           // |lambda| |sigma|^(d-1)
  double condition_margin = 0.0;    // 1 - condition
  [[nodiscard]] bool holds() const { return determinant_margin > 0.0 && condition_margin > 0.0; }
};

DissipationReport dissipation_check(double unstable_multiplier, double stable_multiplier, int d);
DissipationReport dissipation_check(const HyperbolicPointData& saddle, int d);

// sup over a in a0 + [-2 alpha, 2 alpha]^k of the largest |d^beta| (|beta| <= d)
// of window(a) * amplitude(a).
double windowed_parameter_norm(const FamilyHandle& h, const ParameterWindow& w,
                               const Jet& amplitude, int d);

// Largest dyadic alpha <= 1/4 whose flattening term has measured C^d norm
// at most mu / 2.
double flatten_alpha_zero(const FamilyHandle& h, const TangencyData& td, double mu);

// Subtracts the critical value inside the ball around the tangency preimage
// for a within the window of half-width 2 alpha.
FamilyHandle flatten_perturbation(const FamilyHandle& h, const TangencyData& td, double alpha,
                                  std::optional<double> mu = std::nullopt);

// The stable-foliation curve W^n through the n-th backward image of the
// homoclinic point along the local unstable manifold, in saddle-chart
// coordinates: u = shift at v = height.
struct FoliationShift {
  int n = 0;
  quad backward_point0 = 0;  // p^n at a0
  Jet backward_point;        // p^n_a
  Jet height;                // v where the curve is read (B'(c', 0) + q0)
  Jet shift;                 // w^n_a(height)
  quad shift0 = 0;
  double slope_integral = 0.0;  // |w^n - p^n| at a0
};

FoliationShift foliation_shift(const FamilyHandle& h, const TangencyData& td, int n);

FamilyHandle sink_translation_perturbation(const FamilyHandle& h, const TangencyData& td,
                                           double alpha, int n,
                                           std::optional<double> mu = std::nullopt);

enum class SinkMethod { iteration, trapping_box };
std::string to_string(SinkMethod m);

struct SinkRecord {
  int period = 0;
  PlanePoint representative;
  std::vector<Point<quad>> orbit;
  std::array<std::complex<double>, 2> multipliers;
  double determinant = 0.0;  // of the period map Jacobian
  double closing_error = 0.0;
  std::vector<double> parameter_lo;
  std::vector<double> parameter_hi;
  SinkMethod method = SinkMethod::iteration;
};

// Seeds on an nx x ny grid of center + [-half, half]^2 (offsets applied in quad).
struct SeedRegion {
  PlanePoint center;
  double half_x = 0.0;
  double half_y = 0.0;
  int nx = 3;
  int ny = 3;
};

struct SinkSearchOptions {
  int max_steps = 10000;
  double convergence = 1e-22;
  bool parallel = true;
};

std::vector<SinkRecord> detect_sinks(const FamilyHandle& h, const SeedRegion& region,
                                     std::span<const std::vector<double>> a_grid, int max_period,
                                     const SinkSearchOptions& opts = {});

// x within [3.5, 4.5] on the circle.
bool in_excluded_strip(double x);

struct TrappingOptions {
  int grid = 9;
  std::optional<double> constant;  // checks the entry bounds against this C when given
};

struct TrappingBoxCertificate {
  bool ok = false;
  std::string violation;
  int n = 0;
  int period = 0;
  double kappa = 0.0;
  double sigma_prime = 0.0;
  double lambda_prime = 0.0;
  double half_x = 0.0;  // |sigma'|^-n
  double half_y = 0.0;  // |sigma'|^-3n
  double measured_constant = 0.0;
  double max_entries[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
  double max_norm = 0.0;    // subordinate N-norm of the return map Jacobian over the grid
  double norm_bound = 0.0;  // C kappa^-n (1 + C n |sigma' lambda'|^n)
  bool maps_into = false;
  std::optional<SinkRecord> sink;  // fixed point of the return map inside the box
};

TrappingBoxCertificate trapping_box_check(const FamilyHandle& h, const TangencyData& td, int n,
                                          std::span<const double> a,
                                          const TrappingOptions& opts = {});

// Lifts W^u_loc(P_j) (`approx`) onto W^u_loc(P_inf) (`limit`) inside the
// theta-ball around limit.center, for a in the window of half-width 2 alpha.
FamilyHandle quasi_snap_perturbation(const FamilyHandle& h, const GraphPiece& approx,
                                     const GraphPiece& limit, std::span<const double> a0,
                                     double theta, double alpha);

// C^d distance between two unstable-type pieces over |t| <= half_width
// around limit.center, from coefficient jets.
double piece_distance(const GraphPiece& approx, const GraphPiece& limit, double half_width);

}  // namespace parablend
