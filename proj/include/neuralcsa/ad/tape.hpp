#pragma once

// Minimal reverse-mode automatic differentiation over scalar nodes.
//
// A Var is either a constant (id < 0, never recorded) or a node on the tape
// that is active for the current thread. Operations on constants stay plain
// arithmetic, so frozen parameters cost nothing to mix into a recording.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace ncsa::ad {

class Tape;

namespace detail {
inline thread_local Tape* active_tape = nullptr;
}  // namespace detail

struct Var {
  double v = 0.0;
  std::int32_t id = -1;

  Var() = default;
  Var(double value) : v(value) {}  // NOLINT: constants convert implicitly
  Var(double value, std::int32_t node) : v(value), id(node) {}

  [[nodiscard]] double value() const { return v; }
  [[nodiscard]] bool is_constant() const { return id < 0; }
};

inline double value(double x) { return x; }
inline double value(const Var& x) { return x.v; }

/// Records a computation graph for a single reverse sweep.
///
/// Single-threaded: activate with TapeScope on the thread that records.
/// clear() keeps the allocated capacity so a trainer can reuse one tape for
/// every optimization step.
class Tape {
 public:
  Tape() { begin_.push_back(0); }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// New independent variable (leaf).
  Var variable(double v) { return Var(v, push_node()); }

  std::vector<Var> variables(std::span<const double> values) {
    std::vector<Var> out;
    out.reserve(values.size());
    for (double v : values) out.push_back(variable(v));
    return out;
  }

  [[nodiscard]] std::size_t num_nodes() const { return begin_.size() - 1; }
  [[nodiscard]] std::size_t num_edges() const { return parent_.size(); }

  void clear() {
    begin_.resize(1);
    parent_.clear();
    partial_.clear();
  }

  /// Adjoint of every recorded node with respect to `output`.
  [[nodiscard]] std::vector<double> adjoints(Var output) const {
    std::vector<double> adj(num_nodes(), 0.0);
    if (output.is_constant()) return adj;
    adj[static_cast<std::size_t>(output.id)] = 1.0;
    for (std::int64_t n = output.id; n >= 0; --n) {
      const double a = adj[static_cast<std::size_t>(n)];
      if (a == 0.0) continue;
      const std::uint32_t lo = begin_[static_cast<std::size_t>(n)];
      const std::uint32_t hi = begin_[static_cast<std::size_t>(n) + 1];
      for (std::uint32_t e = lo; e < hi; ++e) {
        adj[static_cast<std::size_t>(parent_[e])] += a * partial_[e];
      }
    }
    return adj;
  }

  /// d output / d wrt[i]; constants in `wrt` get zero.
  [[nodiscard]] std::vector<double> gradient(Var output, std::span<const Var> wrt) const {
    const std::vector<double> adj = adjoints(output);
    std::vector<double> g(wrt.size(), 0.0);
    for (std::size_t i = 0; i < wrt.size(); ++i) {
      if (!wrt[i].is_constant()) g[i] = adj[static_cast<std::size_t>(wrt[i].id)];
    }
    return g;
  }

  // Node construction used by the operators below.
  std::int32_t push_node() {
    const auto id = static_cast<std::int32_t>(num_nodes());
    begin_.push_back(static_cast<std::uint32_t>(parent_.size()));
    return id;
  }

  void add_edge(const Var& parent, double partial) {
    if (parent.is_constant()) return;
    parent_.push_back(parent.id);
    partial_.push_back(partial);
    ++begin_.back();
  }

  void reserve(std::size_t nodes, std::size_t edges) {
    begin_.reserve(nodes + 1);
    parent_.reserve(edges);
    partial_.reserve(edges);
  }

 private:
  // begin_[n] .. begin_[n+1] indexes the incoming edges of node n.
  std::vector<std::uint32_t> begin_;
  std::vector<std::int32_t> parent_;
  std::vector<double> partial_;
};

/// Makes `tape` the recording target of the current thread for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape) : previous_(detail::active_tape) { detail::active_tape = &tape; }
  ~TapeScope() { detail::active_tape = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

inline Tape& active() {
  if (detail::active_tape == nullptr) {
    throw std::logic_error("ad: operation on a variable with no active tape");
  }
  return *detail::active_tape;
}

namespace detail {

// Edge partials are recorded after the node slot is opened; begin_.back()
// tracks the running end so edges land on the newest node.
inline Var unary(double v, const Var& a, double da) {
  if (a.is_constant()) return Var(v);
  Tape& t = active();
  const std::int32_t id = t.push_node();
  t.add_edge(a, da);
  return Var(v, id);
}

inline Var binary(double v, const Var& a, double da, const Var& b, double db) {
  if (a.is_constant() && b.is_constant()) return Var(v);
  Tape& t = active();
  const std::int32_t id = t.push_node();
  t.add_edge(a, da);
  t.add_edge(b, db);
  return Var(v, id);
}

}  // namespace detail

inline Var operator+(const Var& a, const Var& b) { return detail::binary(a.v + b.v, a, 1.0, b, 1.0); }
inline Var operator-(const Var& a, const Var& b) { return detail::binary(a.v - b.v, a, 1.0, b, -1.0); }
inline Var operator*(const Var& a, const Var& b) { return detail::binary(a.v * b.v, a, b.v, b, a.v); }
inline Var operator/(const Var& a, const Var& b) {
  const double q = a.v / b.v;
  return detail::binary(q, a, 1.0 / b.v, b, -q / b.v);
}
inline Var operator-(const Var& a) { return detail::unary(-a.v, a, -1.0); }

inline Var operator+(const Var& a, double b) { return detail::unary(a.v + b, a, 1.0); }
inline Var operator+(double a, const Var& b) { return detail::unary(a + b.v, b, 1.0); }
inline Var operator-(const Var& a, double b) { return detail::unary(a.v - b, a, 1.0); }
inline Var operator-(double a, const Var& b) { return detail::unary(a - b.v, b, -1.0); }
inline Var operator*(const Var& a, double b) { return detail::unary(a.v * b, a, b); }
inline Var operator*(double a, const Var& b) { return detail::unary(a * b.v, b, a); }
inline Var operator/(const Var& a, double b) { return detail::unary(a.v / b, a, 1.0 / b); }
inline Var operator/(double a, const Var& b) {
  const double q = a / b.v;
  return detail::unary(q, b, -q / b.v);
}

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }
inline Var& operator/=(Var& a, const Var& b) { return a = a / b; }

inline bool operator<(const Var& a, const Var& b) { return a.v < b.v; }
inline bool operator>(const Var& a, const Var& b) { return a.v > b.v; }
inline bool operator<=(const Var& a, const Var& b) { return a.v <= b.v; }
inline bool operator>=(const Var& a, const Var& b) { return a.v >= b.v; }

// Plain double counterparts so templated code can call ad:: unconditionally.
inline double exp(double a) { return std::exp(a); }
inline double log(double a) { return std::log(a); }
inline double log1p(double a) { return std::log1p(a); }
inline double sqrt(double a) { return std::sqrt(a); }
inline double abs(double a) { return std::fabs(a); }
inline double pow(double a, double p) { return std::pow(a, p); }
inline double max(double a, double b) { return a >= b ? a : b; }
inline double min(double a, double b) { return a <= b ? a : b; }

inline Var exp(const Var& a) {
  const double e = std::exp(a.v);
  return detail::unary(e, a, e);
}
inline Var log(const Var& a) { return detail::unary(std::log(a.v), a, 1.0 / a.v); }
inline Var log1p(const Var& a) { return detail::unary(std::log1p(a.v), a, 1.0 / (1.0 + a.v)); }
inline Var sqrt(const Var& a) {
  const double s = std::sqrt(a.v);
  return detail::unary(s, a, 0.5 / s);
}
inline Var abs(const Var& a) { return detail::unary(std::fabs(a.v), a, a.v < 0.0 ? -1.0 : 1.0); }
inline Var square(const Var& a) { return detail::unary(a.v * a.v, a, 2.0 * a.v); }
inline double square(double a) { return a * a; }

inline Var pow(const Var& a, double p) {
  const double r = std::pow(a.v, p);
  return detail::unary(r, a, p * std::pow(a.v, p - 1.0));
}

/// Selects the larger operand; the derivative follows the selected branch.
inline Var max(const Var& a, const Var& b) { return a.v >= b.v ? a : b; }
inline Var min(const Var& a, const Var& b) { return a.v <= b.v ? a : b; }

inline Var relu(const Var& a) { return a.v > 0.0 ? a : Var(0.0); }
inline double relu(double a) { return a > 0.0 ? a : 0.0; }

inline double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}
inline Var sigmoid(const Var& a) {
  const double s = sigmoid(a.v);
  return detail::unary(s, a, s * (1.0 - s));
}

/// log(1 + exp(a)) without overflow.
inline double softplus(double a) { return std::max(a, 0.0) + std::log1p(std::exp(-std::fabs(a))); }
inline Var softplus(const Var& a) { return detail::unary(softplus(a.v), a, sigmoid(a.v)); }

inline double softplus_inverse(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

/// Gradient stops here: the result is a constant with the same value.
inline Var detach(const Var& a) { return Var(a.v); }
inline double detach(double a) { return a; }

/// b + sum_i w[i] * x[i] as one node.
inline Var affine(std::span<const Var> w, std::span<const Var> x, const Var& b) {
  assert(w.size() == x.size());
  double acc = b.v;
  bool all_constant = b.is_constant();
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc += w[i].v * x[i].v;
    all_constant = all_constant && w[i].is_constant() && x[i].is_constant();
  }
  if (all_constant) return Var(acc);
  Tape& t = active();
  const std::int32_t id = t.push_node();
  t.add_edge(b, 1.0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    t.add_edge(w[i], x[i].v);
    t.add_edge(x[i], w[i].v);
  }
  return Var(acc, id);
}

inline double affine(std::span<const double> w, std::span<const double> x, double b) {
  double acc = b;
  for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * x[i];
  return acc;
}

/// Sum of all terms as one node.
inline Var sum(std::span<const Var> xs) {
  double acc = 0.0;
  bool all_constant = true;
  for (const Var& x : xs) {
    acc += x.v;
    all_constant = all_constant && x.is_constant();
  }
  if (all_constant) return Var(acc);
  Tape& t = active();
  const std::int32_t id = t.push_node();
  for (const Var& x : xs) t.add_edge(x, 1.0);
  return Var(acc, id);
}

inline double sum(std::span<const double> xs) {
  double acc = 0.0;
  for (double x : xs) acc += x;
  return acc;
}

/// Weighted sum sum_i c[i] * x[i] with constant coefficients, as one node.
inline Var weighted_sum(std::span<const double> c, std::span<const Var> xs) {
  double acc = 0.0;
  bool all_constant = true;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    acc += c[i] * xs[i].v;
    all_constant = all_constant && xs[i].is_constant();
  }
  if (all_constant) return Var(acc);
  Tape& t = active();
  const std::int32_t id = t.push_node();
  for (std::size_t i = 0; i < xs.size(); ++i) t.add_edge(xs[i], c[i]);
  return Var(acc, id);
}

inline double weighted_sum(std::span<const double> c, std::span<const double> xs) {
  double acc = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) acc += c[i] * xs[i];
  return acc;
}

}  // namespace ncsa::ad
