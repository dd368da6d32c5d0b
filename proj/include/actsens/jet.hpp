#pragma once

// Forward-mode value/gradient/Hessian propagation over a fixed number of
// independent variables. Arithmetic follows the usual chain rules, so any
// expression templated on the scalar type yields exact first and second
// partials up to rounding.

#include <array>
#include <cmath>
#include <cstddef>

namespace actsens {

template <std::size_t N>
struct Jet {
  double v = 0.0;
  std::array<double, N> g{};
  std::array<double, N * N> h{};

  Jet() = default;
  Jet(double value) : v(value) {}  // NOLINT: constants promote implicitly

  static Jet variable(double value, std::size_t index) {
    Jet j(value);
    j.g[index] = 1.0;
    return j;
  }

  double grad(std::size_t i) const { return g[i]; }
  double hess(std::size_t i, std::size_t j) const { return h[i * N + j]; }
};

namespace detail {

/// Composes a scalar function with value f0, first derivative f1, second f2.
template <std::size_t N>
Jet<N> chain(const Jet<N>& x, double f0, double f1, double f2) {
  Jet<N> r(f0);
  for (std::size_t i = 0; i < N; ++i) r.g[i] = f1 * x.g[i];
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) r.h[i * N + j] = f1 * x.h[i * N + j] + f2 * x.g[i] * x.g[j];
  return r;
}

}  // namespace detail

template <std::size_t N>
Jet<N> operator+(const Jet<N>& a, const Jet<N>& b) {
  Jet<N> r(a.v + b.v);
  for (std::size_t i = 0; i < N; ++i) r.g[i] = a.g[i] + b.g[i];
  for (std::size_t i = 0; i < N * N; ++i) r.h[i] = a.h[i] + b.h[i];
  return r;
}

template <std::size_t N>
Jet<N> operator-(const Jet<N>& a) {
  Jet<N> r(-a.v);
  for (std::size_t i = 0; i < N; ++i) r.g[i] = -a.g[i];
  for (std::size_t i = 0; i < N * N; ++i) r.h[i] = -a.h[i];
  return r;
}

template <std::size_t N>
Jet<N> operator-(const Jet<N>& a, const Jet<N>& b) {
  return a + (-b);
}

template <std::size_t N>
Jet<N> operator*(const Jet<N>& a, const Jet<N>& b) {
  Jet<N> r(a.v * b.v);
  for (std::size_t i = 0; i < N; ++i) r.g[i] = a.v * b.g[i] + b.v * a.g[i];
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j)
      r.h[i * N + j] = a.v * b.h[i * N + j] + b.v * a.h[i * N + j] + a.g[i] * b.g[j] + b.g[i] * a.g[j];
  return r;
}

template <std::size_t N>
Jet<N> operator/(const Jet<N>& a, const Jet<N>& b) {
  const double inv = 1.0 / b.v;
  return a * detail::chain(b, inv, -inv * inv, 2.0 * inv * inv * inv);
}

template <std::size_t N> Jet<N> operator+(const Jet<N>& a, double b) { Jet<N> r = a; r.v += b; return r; }
template <std::size_t N> Jet<N> operator+(double a, const Jet<N>& b) { return b + a; }
template <std::size_t N> Jet<N> operator-(const Jet<N>& a, double b) { return a + (-b); }
template <std::size_t N> Jet<N> operator-(double a, const Jet<N>& b) { return (-b) + a; }

template <std::size_t N>
Jet<N> operator*(const Jet<N>& a, double b) {
  Jet<N> r(a.v * b);
  for (std::size_t i = 0; i < N; ++i) r.g[i] = a.g[i] * b;
  for (std::size_t i = 0; i < N * N; ++i) r.h[i] = a.h[i] * b;
  return r;
}
template <std::size_t N> Jet<N> operator*(double a, const Jet<N>& b) { return b * a; }
template <std::size_t N> Jet<N> operator/(const Jet<N>& a, double b) { return a * (1.0 / b); }
template <std::size_t N> Jet<N> operator/(double a, const Jet<N>& b) { return Jet<N>(a) / b; }

template <std::size_t N>
Jet<N> exp(const Jet<N>& x) {
  const double e = std::exp(x.v);
  return detail::chain(x, e, e, e);
}

template <std::size_t N>
Jet<N> log(const Jet<N>& x) {
  const double inv = 1.0 / x.v;
  return detail::chain(x, std::log(x.v), inv, -inv * inv);
}

template <std::size_t N>
Jet<N> pow(const Jet<N>& x, double p) {
  const double f0 = std::pow(x.v, p);
  const double f1 = p * std::pow(x.v, p - 1.0);
  const double f2 = p * (p - 1.0) * std::pow(x.v, p - 2.0);
  return detail::chain(x, f0, f1, f2);
}

/// x^p with both base and exponent carrying derivatives; requires x > 0.
template <std::size_t N>
Jet<N> pow(const Jet<N>& x, const Jet<N>& p) {
  return exp(p * log(x));
}

template <std::size_t N>
double value_of(const Jet<N>& x) {
  return x.v;
}
inline double value_of(double x) { return x; }

}  // namespace actsens
