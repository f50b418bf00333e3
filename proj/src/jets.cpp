#include "parablend/jets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <string>
#include <utility>

#include "parablend/errors.hpp"

namespace parablend {

int MultiIndex::order() const noexcept {
  int s = 0;
  for (int e : exponents) s += e;
  return s;
}

double MultiIndex::factorial() const noexcept {
  double f = 1.0;
  for (int e : exponents)
    for (int i = 2; i <= e; ++i) f *= i;
  return f;
}

namespace {

void enumerate_degree(int vars, int degree, std::vector<int>& cur, int slot,
                      std::vector<MultiIndex>& out) {
  if (slot == vars - 1) {
    cur[static_cast<std::size_t>(slot)] = degree;
    out.push_back(MultiIndex{cur});
    return;
  }
  for (int e = degree; e >= 0; --e) {
    cur[static_cast<std::size_t>(slot)] = e;
    enumerate_degree(vars, degree - e, cur, slot + 1, out);
  }
}

}  // namespace

JetSpace::JetSpace(int vars, int order) : vars_(vars), order_(order) {
  if (vars < 1 || order < 0) throw DimensionError("jet space needs vars >= 1 and order >= 0");
  std::vector<int> cur(static_cast<std::size_t>(vars), 0);
  for (int g = 0; g <= order; ++g) {
    degree_offsets_.push_back(indices_.size());
    enumerate_degree(vars, g, cur, 0, indices_);
  }
  degree_offsets_.push_back(indices_.size());

  degree_.reserve(indices_.size());
  factorial_.reserve(indices_.size());
  for (const auto& m : indices_) {
    degree_.push_back(m.order());
    factorial_.push_back(m.factorial());
  }

  predecessor_.assign(indices_.size(), {0, 0});
  for (std::size_t pos = 1; pos < indices_.size(); ++pos) {
    std::vector<int> e = indices_[pos].exponents;
    int var = 0;
    while (e[static_cast<std::size_t>(var)] == 0) ++var;
    --e[static_cast<std::size_t>(var)];
    predecessor_[pos] = {position(e), var};
  }

  std::vector<int> sum(static_cast<std::size_t>(vars));
  for (std::size_t i = 0; i < indices_.size(); ++i) {
    for (std::size_t j = i; j < indices_.size(); ++j) {
      if (degree_[i] + degree_[j] > order_) break;  // j sorted by degree
      for (std::size_t v = 0; v < sum.size(); ++v)
        sum[v] = indices_[i].exponents[v] + indices_[j].exponents[v];
      products_.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                           static_cast<std::uint32_t>(position(sum))});
    }
  }
}

std::shared_ptr<const JetSpace> JetSpace::get(int vars, int order) {
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::shared_ptr<const JetSpace>> registry;
  std::lock_guard lock(mutex);
  auto& slot = registry[{vars, order}];
  if (!slot) slot = std::make_shared<const JetSpace>(vars, order);
  return slot;
}

std::size_t JetSpace::position(const MultiIndex& m) const { return position(m.exponents); }

std::size_t JetSpace::position(std::span<const int> e) const {
  if (static_cast<int>(e.size()) != vars_) throw DimensionError("multi-index has wrong length");
  int g = 0;
  for (int x : e) {
    if (x < 0) throw DimensionError("negative exponent");
    g += x;
  }
  if (g > order_) throw DimensionError("multi-index order exceeds jet order");
  // Rank within the degree block: count tuples that come earlier in the
  // lexicographic-descending enumeration.
  std::size_t rank = 0;
  int remaining = g;
  for (int slot = 0; slot + 1 < vars_; ++slot) {
    const int here = e[static_cast<std::size_t>(slot)];
    const int free_vars = vars_ - slot - 1;
    for (int bigger = remaining; bigger > here; --bigger) {
      // tuples of the remaining free variables summing to remaining - bigger
      const int n = remaining - bigger;
      double c = 1.0;
      for (int i = 1; i < free_vars; ++i) c = c * (n + i) / i;
      rank += static_cast<std::size_t>(std::llround(c));
    }
    remaining -= here;
  }
  return degree_offsets_[static_cast<std::size_t>(g)] + rank;
}

std::size_t JetSpace::degree_begin(int degree) const {
  if (degree < 0 || degree > order_ + 1) throw DimensionError("degree out of range");
  return degree_offsets_[static_cast<std::size_t>(degree)];
}

// ---------------------------------------------------------------------------

Jet::Jet(JetSpacePtr space) : space_(std::move(space)) {
  if (!space_) throw DimensionError("null jet space");
  c_.assign(space_->size(), 0.0);
}

Jet::Jet(JetSpacePtr space, std::vector<double> coeffs)
    : space_(std::move(space)), c_(std::move(coeffs)) {
  if (!space_) throw DimensionError("null jet space");
  if (c_.size() != space_->size()) throw DimensionError("coefficient count does not match jet space");
}

Jet Jet::constant(JetSpacePtr space, double c) {
  Jet j(std::move(space));
  j.c_[0] = c;
  return j;
}

Jet Jet::variable(JetSpacePtr space, int var, double base) {
  if (var < 0 || var >= space->vars()) throw DimensionError("variable index out of range");
  Jet j(std::move(space));
  j.c_[0] = base;
  if (j.order() >= 1) j.c_[1 + static_cast<std::size_t>(var)] = 1.0;
  return j;
}

double Jet::coeff(const MultiIndex& m) const { return c_[space_->position(m)]; }

double Jet::derivative(const MultiIndex& m) const {
  const std::size_t pos = space_->position(m);
  return c_[pos] * space_->factorial(pos);
}

double Jet::derivative_at(std::size_t pos) const { return c_.at(pos) * space_->factorial(pos); }

bool Jet::is_finite() const noexcept {
  return std::all_of(c_.begin(), c_.end(), [](double v) { return std::isfinite(v); });
}

double Jet::max_abs() const noexcept {
  double m = 0.0;
  for (double v : c_) m = std::max(m, std::abs(v));
  return m;
}

void Jet::require_same(const Jet& o, const char* op) const {
  if (space_ != o.space_) {
    if (!space_ || !o.space_) throw DimensionError(std::string(op) + ": empty jet operand");
    throw DimensionError(std::string(op) + ": jets over (" + std::to_string(vars()) + "," +
                         std::to_string(order()) + ") and (" + std::to_string(o.vars()) + "," +
                         std::to_string(o.order()) + ")");
  }
}

Jet& Jet::operator+=(const Jet& o) {
  require_same(o, "jet_add");
  for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
  return *this;
}

Jet& Jet::operator-=(const Jet& o) {
  require_same(o, "jet_sub");
  for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
  return *this;
}

Jet& Jet::operator*=(const Jet& o) {
  *this = jet_mul(*this, o);
  return *this;
}

Jet& Jet::operator+=(double s) noexcept {
  c_[0] += s;
  return *this;
}

Jet& Jet::operator-=(double s) noexcept {
  c_[0] -= s;
  return *this;
}

Jet& Jet::operator*=(double s) noexcept {
  for (double& v : c_) v *= s;
  return *this;
}

Jet& Jet::operator/=(double s) noexcept {
  for (double& v : c_) v /= s;
  return *this;
}

Jet Jet::operator-() const {
  Jet r = *this;
  for (double& v : r.c_) v = -v;
  return r;
}

Jet operator+(Jet x, const Jet& y) { return x += y; }
Jet operator-(Jet x, const Jet& y) { return x -= y; }
Jet operator*(const Jet& x, const Jet& y) { return jet_mul(x, y); }
Jet operator/(const Jet& x, const Jet& y) { return jet_mul(x, reciprocal(y)); }
Jet operator+(Jet x, double s) { return x += s; }
Jet operator+(double s, Jet x) { return x += s; }
Jet operator-(Jet x, double s) { return x -= s; }
Jet operator-(double s, const Jet& x) { return (-x) += s; }
Jet operator*(Jet x, double s) { return x *= s; }
Jet operator*(double s, Jet x) { return x *= s; }
Jet operator/(Jet x, double s) { return x /= s; }
Jet operator/(double s, const Jet& x) { return reciprocal(x) *= s; }

Jet jet_add(const Jet& x, const Jet& y) { return x + y; }

Jet jet_mul(const Jet& x, const Jet& y) {
  if (x.space() != y.space()) {
    if (x.empty() || y.empty()) throw DimensionError("jet_mul: empty jet operand");
    throw DimensionError("jet_mul: jets live in different spaces");
  }
  Jet r(x.space());
  const auto xc = x.coeffs();
  const auto yc = y.coeffs();
  auto rc = r.mutable_coeffs();
  // pairs are stored once with lhs <= rhs; the symmetric sum keeps x*y == y*x bitwise
  for (const auto& t : x.space()->product_terms()) {
    if (t.lhs == t.rhs)
      rc[t.target] += xc[t.lhs] * yc[t.rhs];
    else
      rc[t.target] += xc[t.lhs] * yc[t.rhs] + xc[t.rhs] * yc[t.lhs];
  }
  return r;
}

Jet jet_compose_scalar(std::span<const double> f_derivs, const Jet& x) {
  if (x.empty()) throw DimensionError("jet_compose_scalar: empty jet");
  const int d = x.order();
  if (static_cast<int>(f_derivs.size()) < d + 1)
    throw DimensionError("jet_compose_scalar: need derivatives up to the jet order");
  Jet h = x;
  h.set_coeff(0, 0.0);
  // Horner on sum f^(n)(x0)/n! h^n; h has no constant term so h^(d+1) = 0.
  double fact = 1.0;
  for (int n = 2; n <= d; ++n) fact *= n;
  Jet r = Jet::constant(x.space(), f_derivs[static_cast<std::size_t>(d)] / fact);
  for (int n = d - 1; n >= 0; --n) {
    fact /= (n + 1);
    r = jet_mul(r, h);
    r += f_derivs[static_cast<std::size_t>(n)] / fact;
  }
  return r;
}

namespace {

std::vector<double> derivs_buffer(const Jet& x) {
  return std::vector<double>(static_cast<std::size_t>(x.order()) + 1, 0.0);
}

}  // namespace

Jet reciprocal(const Jet& x) {
  const double t = x.value();
  if (t == 0.0) throw DomainError("reciprocal of a jet with zero constant term");
  auto f = derivs_buffer(x);
  double p = 1.0 / t;
  for (std::size_t n = 0; n < f.size(); ++n) {
    f[n] = p;
    p *= -static_cast<double>(n + 1) / t;
  }
  return jet_compose_scalar(f, x);
}

Jet pow(const Jet& x, double p) {
  const double t = x.value();
  if (t <= 0.0) throw DomainError("real power of a jet with non-positive constant term");
  auto f = derivs_buffer(x);
  double coef = 1.0;
  for (std::size_t n = 0; n < f.size(); ++n) {
    f[n] = coef * std::pow(t, p - static_cast<double>(n));
    coef *= (p - static_cast<double>(n));
  }
  return jet_compose_scalar(f, x);
}

Jet sqrt(const Jet& x) { return pow(x, 0.5); }

Jet exp(const Jet& x) {
  auto f = derivs_buffer(x);
  std::fill(f.begin(), f.end(), std::exp(x.value()));
  return jet_compose_scalar(f, x);
}

Jet log(const Jet& x) {
  const double t = x.value();
  if (t <= 0.0) throw DomainError("log of a jet with non-positive constant term");
  auto f = derivs_buffer(x);
  f[0] = std::log(t);
  double p = 1.0 / t;
  for (std::size_t n = 1; n < f.size(); ++n) {
    f[n] = p;
    p *= -static_cast<double>(n) / t;
  }
  return jet_compose_scalar(f, x);
}

Jet sin(const Jet& x) {
  const double s = std::sin(x.value());
  const double c = std::cos(x.value());
  auto f = derivs_buffer(x);
  const double cycle[4] = {s, c, -s, -c};
  for (std::size_t n = 0; n < f.size(); ++n) f[n] = cycle[n % 4];
  return jet_compose_scalar(f, x);
}

Jet cos(const Jet& x) {
  const double s = std::sin(x.value());
  const double c = std::cos(x.value());
  auto f = derivs_buffer(x);
  const double cycle[4] = {c, -s, -c, s};
  for (std::size_t n = 0; n < f.size(); ++n) f[n] = cycle[n % 4];
  return jet_compose_scalar(f, x);
}

Jet atan(const Jet& x) {
  // atan' = 1/(1+t^2); integrate the jet of the derivative term by term in t.
  // Derivatives of 1/(1+t^2) come from the recursion on the polynomial
  // numerators p_n(t) / (1+t^2)^(n+1).
  const double t = x.value();
  auto f = derivs_buffer(x);
  f[0] = std::atan(t);
  std::vector<double> p{1.0};  // numerator coefficients in t
  const double q = 1.0 + t * t;
  for (std::size_t n = 1; n < f.size(); ++n) {
    double num = 0.0;
    double tp = 1.0;
    for (double c : p) {
      num += c * tp;
      tp *= t;
    }
    f[n] = num / std::pow(q, static_cast<double>(n));
    // d/dt [p / q^n] = (p' q - 2 n t p) / q^(n+1)
    std::vector<double> next(p.size() + 2, 0.0);
    for (std::size_t i = 1; i < p.size(); ++i) {
      next[i - 1] += i * p[i];
      next[i + 1] += i * p[i];
    }
    for (std::size_t i = 0; i < p.size(); ++i) next[i + 1] -= 2.0 * static_cast<double>(n) * p[i];
    p = std::move(next);
  }
  return jet_compose_scalar(f, x);
}

Jet pow(const Jet& x, int n) {
  if (n < 0) return reciprocal(pow(x, -n));
  Jet r = Jet::constant(x.space(), 1.0);
  Jet base = x;
  while (n > 0) {
    if (n & 1) r = jet_mul(r, base);
    n >>= 1;
    if (n > 0) base = jet_mul(base, base);
  }
  return r;
}

double evaluate(const Jet& j, std::span<const double> offset) {
  if (static_cast<int>(offset.size()) != j.vars()) throw DimensionError("evaluate: offset dimension");
  return taylor_polynomial<double>(j, offset, 1.0);
}

Jet resize(const Jet& j, const JetSpacePtr& target) {
  Jet r(target);
  const JetSpace& src = *j.space();
  std::vector<int> e(static_cast<std::size_t>(target->vars()), 0);
  for (std::size_t pos = 0; pos < src.size(); ++pos) {
    if (src.degree(pos) > target->order()) break;
    const auto& ex = src.index(pos).exponents;
    bool keep = true;
    std::fill(e.begin(), e.end(), 0);
    for (std::size_t v = 0; v < ex.size(); ++v) {
      if (v < e.size()) {
        e[v] = ex[v];
      } else if (ex[v] != 0) {
        keep = false;
        break;
      }
    }
    if (keep) r.set_coeff(target->position(e), j.coeff(pos));
  }
  return r;
}

Jet slice(const Jet& j, std::span<const int> trailing, const JetSpacePtr& target) {
  const int inner = static_cast<int>(trailing.size());
  if (target->vars() + inner != j.vars()) throw DimensionError("slice: variable count mismatch");
  Jet r(target);
  const JetSpace& src = *j.space();
  std::vector<int> e(static_cast<std::size_t>(target->vars()));
  for (std::size_t pos = 0; pos < src.size(); ++pos) {
    const auto& ex = src.index(pos).exponents;
    bool match = true;
    for (int i = 0; i < inner; ++i) {
      if (ex[static_cast<std::size_t>(target->vars() + i)] != trailing[static_cast<std::size_t>(i)]) {
        match = false;
        break;
      }
    }
    if (!match) continue;
    int g = 0;
    for (std::size_t v = 0; v < e.size(); ++v) {
      e[v] = ex[v];
      g += ex[v];
    }
    if (g > target->order()) continue;
    r.set_coeff(target->position(e), j.coeff(pos));
  }
  return r;
}

Jet compose_polynomial(const Jet& poly, std::span<const Jet> at) {
  if (static_cast<int>(at.size()) != poly.vars()) throw DimensionError("compose_polynomial: arity");
  if (at.empty()) throw DimensionError("compose_polynomial: no arguments");
  return taylor_polynomial<Jet>(poly, at, Jet::constant(at[0].space(), 1.0));
}

}  // namespace parablend
