#pragma once

// Dormand-Prince 5(4) integrator with the 4th-order continuous extension
// used for output on an arbitrary grid.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "actsens/error.hpp"

namespace actsens {

struct Tolerances {
  double rel_tol = 1e-8;
  double abs_tol = 1e-10;
  double max_step = std::numeric_limits<double>::infinity();
  double min_step = 1e-14;

  void validate() const {
    if (!(rel_tol > 0.0) || !(abs_tol > 0.0)) fail(ErrorKind::InvalidArgument, "tolerances must be positive");
    if (!(min_step > 0.0) || !(min_step <= max_step)) fail(ErrorKind::InvalidArgument, "require 0 < min_step <= max_step");
  }
};

/// State values on the requested output grid, row-major (grid point x component).
struct Trajectory {
  std::vector<double> times;
  std::size_t dim = 0;
  std::vector<double> values;

  std::size_t accepted_steps = 0;
  std::size_t rejected_steps = 0;

  std::size_t size() const { return times.size(); }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
  double at(std::size_t i, std::size_t k) const { return values[i * dim + k]; }
  std::vector<double> component(std::size_t k) const {
    std::vector<double> out(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) out[i] = at(i, k);
    return out;
  }
};

using RhsFunction = std::function<void(double, std::span<const double>, std::span<double>)>;

struct OdeProblem {
  RhsFunction rhs;
  std::vector<double> y0;
  double t_start = 0.0;
  double t_end = 0.0;
  std::vector<double> output_grid;

  void validate() const {
    if (!rhs) fail(ErrorKind::InvalidArgument, "rhs is empty");
    if (y0.empty()) fail(ErrorKind::InvalidArgument, "empty initial state");
    if (!(t_start < t_end)) fail(ErrorKind::InvalidArgument, "require t_start < t_end");
    if (output_grid.empty()) fail(ErrorKind::InvalidArgument, "empty output grid");
    for (std::size_t i = 0; i < output_grid.size(); ++i) {
      const double t = output_grid[i];
      if (!(t >= t_start && t <= t_end)) fail(ErrorKind::InvalidArgument, "output grid outside t_span");
      if (i > 0 && !(t > output_grid[i - 1])) fail(ErrorKind::InvalidArgument, "output grid must be strictly increasing");
    }
  }
};

/// `count` equally spaced points on [t0, t1], endpoints included exactly.
inline std::vector<double> linspace(double t0, double t1, std::size_t count) {
  if (count < 2) fail(ErrorKind::InvalidArgument, "linspace needs at least two points");
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(count - 1);
  out.back() = t1;
  return out;
}

namespace detail {

struct Dopri5 {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                          a76 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
  static constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                          d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                          d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;
};

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace detail

/// Integrates dy/dt = rhs(t, y) from t_start and reports the state at every
/// point of `grid`. `rhs` is any callable `(double, span<const double>, span<double>)`.
template <class Rhs>
Trajectory integrate(Rhs&& rhs, std::span<const double> y0, double t_start, double t_end,
                     std::span<const double> grid, const Tolerances& tol = {}) {
  using C = detail::Dopri5;
  tol.validate();
  const std::size_t n = y0.size();
  if (n == 0) fail(ErrorKind::InvalidArgument, "empty initial state");
  if (!(t_start < t_end)) fail(ErrorKind::InvalidArgument, "require t_start < t_end");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= t_start && grid[i] <= t_end)) fail(ErrorKind::InvalidArgument, "output grid outside t_span");
    if (i > 0 && !(grid[i] > grid[i - 1])) fail(ErrorKind::InvalidArgument, "output grid must be strictly increasing");
  }

  Trajectory out;
  out.times.assign(grid.begin(), grid.end());
  out.dim = n;
  out.values.resize(grid.size() * n);
  if (grid.empty()) return out;

  const double t_stop = std::min(t_end, grid.back());
  std::vector<double> y(y0.begin(), y0.end()), y1(n), ytmp(n);
  std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n);
  std::vector<double> r1(n), r2(n), r3(n), r4(n), r5(n);

  auto eval = [&](double t, std::span<const double> state, std::vector<double>& dydt) {
    rhs(t, state, std::span<double>(dydt));
  };
  auto scaled_norm = [&](std::span<const double> v, std::span<const double> ref) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double sk = tol.abs_tol + tol.rel_tol * std::abs(ref[k]);
      acc += (v[k] / sk) * (v[k] / sk);
    }
    return std::sqrt(acc / static_cast<double>(n));
  };

  std::size_t next = 0;
  while (next < grid.size() && grid[next] <= t_start) {
    std::copy(y.begin(), y.end(), out.values.begin() + static_cast<std::ptrdiff_t>(next * n));
    ++next;
  }
  if (next == grid.size()) return out;

  double t = t_start;
  eval(t, y, k1);
  if (!detail::all_finite(k1)) fail(ErrorKind::NonFiniteState, "rhs is not finite at t = " + std::to_string(t));

  // Initial step guess (Hairer, Norsett & Wanner, II.4).
  const double span = t_stop - t_start;
  double h;
  {
    const double d0 = scaled_norm(y, y);
    const double d1 = scaled_norm(k1, y);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min({h0, span, tol.max_step});
    for (std::size_t k = 0; k < n; ++k) ytmp[k] = y[k] + h0 * k1[k];
    eval(t + h0, ytmp, k2);
    for (std::size_t k = 0; k < n; ++k) k2[k] -= k1[k];
    const double d2 = scaled_norm(k2, y) / h0;
    const double dmax = std::max(d1, d2);
    const double h1 = dmax <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dmax, 0.2);
    h = std::min({100.0 * h0, h1, span, tol.max_step});
    h = std::max(h, tol.min_step);
  }

  bool last_rejected = false;
  while (next < grid.size()) {
    if (h < tol.min_step) {
      fail(ErrorKind::StepSizeUnderflow, "step size " + std::to_string(h) + " below minimum at t = " + std::to_string(t));
    }
    if (t + 1.01 * h >= t_stop) h = t_stop - t;
    const bool final_step = (t + h >= t_stop);

    for (std::size_t k = 0; k < n; ++k) ytmp[k] = y[k] + h * C::a21 * k1[k];
    eval(t + C::c2 * h, ytmp, k2);
    for (std::size_t k = 0; k < n; ++k) ytmp[k] = y[k] + h * (C::a31 * k1[k] + C::a32 * k2[k]);
    eval(t + C::c3 * h, ytmp, k3);
    for (std::size_t k = 0; k < n; ++k) ytmp[k] = y[k] + h * (C::a41 * k1[k] + C::a42 * k2[k] + C::a43 * k3[k]);
    eval(t + C::c4 * h, ytmp, k4);
    for (std::size_t k = 0; k < n; ++k)
      ytmp[k] = y[k] + h * (C::a51 * k1[k] + C::a52 * k2[k] + C::a53 * k3[k] + C::a54 * k4[k]);
    eval(t + C::c5 * h, ytmp, k5);
    for (std::size_t k = 0; k < n; ++k)
      ytmp[k] = y[k] + h * (C::a61 * k1[k] + C::a62 * k2[k] + C::a63 * k3[k] + C::a64 * k4[k] + C::a65 * k5[k]);
    const double t_new = final_step ? t_stop : t + h;
    eval(t_new, ytmp, k6);
    for (std::size_t k = 0; k < n; ++k)
      y1[k] = y[k] + h * (C::a71 * k1[k] + C::a73 * k3[k] + C::a74 * k4[k] + C::a75 * k5[k] + C::a76 * k6[k]);
    eval(t_new, y1, k7);

    double err = 0.0;
    bool finite = detail::all_finite(y1) && detail::all_finite(k7);
    if (finite) {
      for (std::size_t k = 0; k < n; ++k) {
        const double ek =
            h * (C::e1 * k1[k] + C::e3 * k3[k] + C::e4 * k4[k] + C::e5 * k5[k] + C::e6 * k6[k] + C::e7 * k7[k]);
        const double sk = tol.abs_tol + tol.rel_tol * std::max(std::abs(y[k]), std::abs(y1[k]));
        err += (ek / sk) * (ek / sk);
      }
      err = std::sqrt(err / static_cast<double>(n));
      finite = std::isfinite(err);
    }

    if (!finite) {
      // Non-finite trial values: shrink hard and retry; a persistently
      // non-finite rhs eventually trips the step-size floor.
      if (h <= tol.min_step) fail(ErrorKind::NonFiniteState, "rhs produced non-finite values near t = " + std::to_string(t));
      h = std::max(0.25 * h, tol.min_step);
      ++out.rejected_steps;
      last_rejected = true;
      continue;
    }

    if (err > 1.0) {
      h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
      ++out.rejected_steps;
      last_rejected = true;
      continue;
    }

    // Accepted: emit every grid point inside (t, t_new].
    if (next < grid.size() && grid[next] <= t_new) {
      for (std::size_t k = 0; k < n; ++k) {
        const double ydiff = y1[k] - y[k];
        const double bspl = h * k1[k] - ydiff;
        r1[k] = y[k];
        r2[k] = ydiff;
        r3[k] = bspl;
        r4[k] = ydiff - h * k7[k] - bspl;
        r5[k] = h * (C::d1 * k1[k] + C::d3 * k3[k] + C::d4 * k4[k] + C::d5 * k5[k] + C::d6 * k6[k] + C::d7 * k7[k]);
      }
      while (next < grid.size() && grid[next] <= t_new) {
        double* dst = out.values.data() + next * n;
        if (grid[next] == t_new) {
          std::copy(y1.begin(), y1.end(), dst);
        } else {
          const double theta = (grid[next] - t) / h;
          const double theta1 = 1.0 - theta;
          for (std::size_t k = 0; k < n; ++k)
            dst[k] = r1[k] + theta * (r2[k] + theta1 * (r3[k] + theta * (r4[k] + theta1 * r5[k])));
        }
        ++next;
      }
    }

    ++out.accepted_steps;
    t = t_new;
    std::swap(y, y1);
    std::swap(k1, k7);
    if (final_step) break;

    double factor = std::min(10.0, std::max(0.2, 0.9 * std::pow(std::max(err, 1e-10), -0.2)));
    if (last_rejected) factor = std::min(factor, 1.0);
    last_rejected = false;
    h = std::min(h * factor, tol.max_step);
  }

  // Grid points beyond t_end are rejected by validation; anything left here
  // coincides with t_stop up to rounding.
  for (; next < grid.size(); ++next) std::copy(y.begin(), y.end(), out.values.begin() + static_cast<std::ptrdiff_t>(next * n));
  return out;
}

inline Trajectory integrate(const OdeProblem& problem, const Tolerances& tol = {}) {
  problem.validate();
  return integrate(problem.rhs, problem.y0, problem.t_start, problem.t_end, problem.output_grid, tol);
}

}  // namespace actsens
