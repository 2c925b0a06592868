#pragma once

#include <cmath>

namespace prunelab {

// First-order dual number: carries a value and one directional derivative.
// Running the backward pass over Dual parameters whose derivative slots hold
// a direction v yields the exact directional derivative of the gradient,
// i.e. a Hessian-vector product, with no finite-difference error.
struct Dual {
  double v = 0.0;  // value
  double d = 0.0;  // derivative along the probe direction

  Dual() = default;
  Dual(double value) : v(value) {}
  Dual(double value, double deriv) : v(value), d(deriv) {}
};

inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator-(Dual a) { return {-a.v, -a.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.v * b.d + a.d * b.v}; }
inline Dual operator/(Dual a, Dual b) {
  const double inv = 1.0 / b.v;
  const double q = a.v * inv;
  return {q, (a.d - q * b.d) * inv};
}
inline Dual& operator+=(Dual& a, Dual b) { a = a + b; return a; }
inline Dual& operator-=(Dual& a, Dual b) { a = a - b; return a; }
inline Dual& operator*=(Dual& a, Dual b) { a = a * b; return a; }

inline bool operator<(Dual a, Dual b) { return a.v < b.v; }
inline bool operator>(Dual a, Dual b) { return a.v > b.v; }

inline Dual exp(Dual a) {
  const double e = std::exp(a.v);
  return {e, e * a.d};
}
inline Dual log(Dual a) { return {std::log(a.v), a.d / a.v}; }
inline Dual tanh(Dual a) {
  const double t = std::tanh(a.v);
  return {t, (1.0 - t * t) * a.d};
}
inline Dual relu(Dual a) { return a.v > 0.0 ? a : Dual{0.0, 0.0}; }

// Scalar-agnostic helpers so the network core can be written once and
// instantiated for double (values, gradients) and Dual (HVPs).
inline double value_of(double x) { return x; }
inline double value_of(Dual x) { return x.v; }
inline bool is_finite(double x) { return std::isfinite(x); }
inline bool is_finite(Dual x) { return std::isfinite(x.v) && std::isfinite(x.d); }

inline double relu(double a) { return a > 0.0 ? a : 0.0; }

}  // namespace prunelab
