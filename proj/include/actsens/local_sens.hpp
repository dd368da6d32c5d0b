#pragma once

// Forward local sensitivity analysis. The state, the first-order
// sensitivities S (dy_k/dp_i), the initial-condition sensitivities
// (dy_k/dy_l(0)) and optionally the second-order sensitivities R
// (d2y_k/dp_i dp_j) are integrated as one augmented ODE system, so every
// block sees the same adaptive step sequence.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "actsens/error.hpp"
#include "actsens/model_spec.hpp"
#include "actsens/ode.hpp"

namespace actsens {

inline constexpr double kDefaultNormalizationFloor = 1e-9;

struct SensitivityOptions {
  Tolerances tol{};
  double normalization_floor = kDefaultNormalizationFloor;
};

/// Index of the unordered pair (i, j) in the packed upper triangle.
inline std::size_t pair_index(std::size_t i, std::size_t j, std::size_t n) {
  if (i > j) std::swap(i, j);
  return i * n - i * (i + 1) / 2 + j;
}

struct SensitivityResult {
  std::vector<std::string> param_names;
  std::vector<double> params;
  std::vector<double> y0;
  std::size_t M = 0;
  std::size_t N = 0;
  std::vector<double> times;

  std::vector<double> state;       ///< [t][k]
  std::vector<double> S_raw;       ///< [t][i][k]
  std::vector<double> S_init_raw;  ///< [t][k][l] = dy_k(t) / dy_l(0)
  std::vector<double> R_raw;       ///< [t][pair(i,j)][k], empty when not computed
  bool second_order_approximate = false;

  std::vector<double> S_rel;
  std::vector<double> S_init_rel;
  std::vector<double> R_rel;
  std::vector<unsigned char> normalization_undefined;  ///< [t][k]: |y_k(t)| below the floor
  std::vector<unsigned char> zero_parameter;           ///< [i]: p_i == 0, relative row is identically 0

  std::size_t pairs() const { return N * (N + 1) / 2; }
  bool has_second_order() const { return !R_raw.empty(); }

  double y(std::size_t t, std::size_t k) const { return state[t * M + k]; }
  double s(std::size_t t, std::size_t i, std::size_t k) const { return S_raw[(t * N + i) * M + k]; }
  double s_init(std::size_t t, std::size_t k, std::size_t l) const { return S_init_raw[(t * M + k) * M + l]; }
  double r(std::size_t t, std::size_t i, std::size_t j, std::size_t k) const {
    return R_raw[(t * pairs() + pair_index(i, j, N)) * M + k];
  }
  double s_rel(std::size_t t, std::size_t i, std::size_t k) const { return S_rel[(t * N + i) * M + k]; }
  double s_init_rel(std::size_t t, std::size_t k, std::size_t l) const { return S_init_rel[(t * M + k) * M + l]; }
  double r_rel(std::size_t t, std::size_t i, std::size_t j, std::size_t k) const {
    return R_rel[(t * pairs() + pair_index(i, j, N)) * M + k];
  }
};

/// Relative sensitivities: S~ = S * p_i / y_k(t), R~ = R * p_i p_j / y_k(t),
/// and the initial-condition block scaled with y_l(0). Points where
/// |y_k(t)| < floor are flagged and set to NaN.
inline SensitivityResult normalize(SensitivityResult r, double floor = kDefaultNormalizationFloor) {
  const std::size_t T = r.times.size(), M = r.M, N = r.N, P = r.pairs();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  r.S_rel.assign(r.S_raw.size(), 0.0);
  r.S_init_rel.assign(r.S_init_raw.size(), 0.0);
  r.R_rel.assign(r.R_raw.size(), 0.0);
  r.normalization_undefined.assign(T * M, 0);
  r.zero_parameter.assign(N, 0);
  for (std::size_t i = 0; i < N; ++i) r.zero_parameter[i] = r.params[i] == 0.0 ? 1 : 0;

  std::vector<std::size_t> pi(P), pj(P);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = i; j < N; ++j) {
      pi[pair_index(i, j, N)] = i;
      pj[pair_index(i, j, N)] = j;
    }

  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t k = 0; k < M; ++k) {
      const double yk = r.y(t, k);
      const bool undefined = std::abs(yk) < floor;
      r.normalization_undefined[t * M + k] = undefined ? 1 : 0;
      for (std::size_t i = 0; i < N; ++i)
        r.S_rel[(t * N + i) * M + k] = undefined ? nan : r.s(t, i, k) * r.params[i] / yk;
      for (std::size_t l = 0; l < M; ++l)
        r.S_init_rel[(t * M + k) * M + l] = undefined ? nan : r.s_init(t, k, l) * r.y0[l] / yk;
      if (!r.R_raw.empty()) {
        for (std::size_t p = 0; p < P; ++p) {
          const std::size_t idx = (t * P + p) * M + k;
          r.R_rel[idx] = undefined ? nan : r.R_raw[idx] * r.params[pi[p]] * r.params[pj[p]] / yk;
        }
      }
    }
  }
  return r;
}

namespace detail {

inline void check_local_inputs(const ModelSpec& model, std::span<const double> params, std::span<const double> y0,
                               std::span<const double> grid) {
  if (!model.rhs) fail(ErrorKind::InvalidArgument, "model has no rhs");
  if (params.size() != model.param_count()) fail(ErrorKind::InvalidArgument, "parameter count mismatch for " + model.name);
  if (y0.size() != model.state_dim) fail(ErrorKind::InvalidArgument, "initial state dimension mismatch for " + model.name);
  if (grid.size() < 2) fail(ErrorKind::InvalidArgument, "output grid needs at least two points");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) fail(ErrorKind::InvalidArgument, "output grid must be strictly increasing");
}

/// Augmented layout: y | S (N x M) | Phi (M x M) | R (pairs x M).
inline SensitivityResult solve_augmented(const ModelSpec& model, std::span<const double> params,
                                         std::span<const double> y0, std::span<const double> grid, bool second,
                                         const SensitivityOptions& opts) {
  check_local_inputs(model, params, y0, grid);
  if (!model.has_first()) fail(ErrorKind::MissingDerivative, "model " + model.name + " lacks first partials");
  if (second && !model.has_second())
    fail(ErrorKind::MissingSecondDerivative, "model " + model.name + " lacks second partials");

  const std::size_t M = model.state_dim, N = model.param_count();
  const std::size_t P = second ? N * (N + 1) / 2 : 0;
  const std::size_t offS = M, offPhi = offS + N * M, offR = offPhi + M * M, dim = offR + P * M;

  std::vector<double> z0(dim, 0.0);
  for (std::size_t k = 0; k < M; ++k) {
    z0[k] = y0[k];
    z0[offPhi + k * M + k] = 1.0;
  }

  std::vector<double> p(params.begin(), params.end());
  std::vector<std::size_t> pi(P), pj(P);
  for (std::size_t i = 0; i < N && second; ++i)
    for (std::size_t j = i; j < N; ++j) {
      pi[pair_index(i, j, N)] = i;
      pj[pair_index(i, j, N)] = j;
    }

  Partials d;
  auto rhs = [&](double t, std::span<const double> z, std::span<double> dz) {
    const std::span<const double> y = z.subspan(0, M);
    if (second)
      model.second(t, y, p, d);
    else
      model.first(t, y, p, d);
    const double* S = z.data() + offS;
    const double* Phi = z.data() + offPhi;
    const double* R = z.data() + offR;

    for (std::size_t k = 0; k < M; ++k) dz[k] = d.f[k];
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t k = 0; k < M; ++k) {
        double acc = d.fp[i * M + k];
        for (std::size_t l = 0; l < M; ++l) acc += S[i * M + l] * d.fy[k * M + l];
        dz[offS + i * M + k] = acc;
      }
    for (std::size_t k = 0; k < M; ++k)
      for (std::size_t l = 0; l < M; ++l) {
        double acc = 0.0;
        for (std::size_t m = 0; m < M; ++m) acc += d.fy[k * M + m] * Phi[m * M + l];
        dz[offPhi + k * M + l] = acc;
      }
    for (std::size_t q = 0; q < P; ++q) {
      const std::size_t i = pi[q], j = pj[q];
      for (std::size_t k = 0; k < M; ++k) {
        double acc = d.fpp[(i * N + j) * M + k];
        for (std::size_t l = 0; l < M; ++l) {
          acc += R[q * M + l] * d.fy[k * M + l];
          acc += S[i * M + l] * d.fyp[(j * M + k) * M + l];
          acc += S[j * M + l] * d.fyp[(i * M + k) * M + l];
          for (std::size_t b = 0; b < M; ++b) acc += S[i * M + l] * S[j * M + b] * d.fyy[(k * M + l) * M + b];
        }
        dz[offR + q * M + k] = acc;
      }
    }
  };

  const Trajectory traj = integrate(rhs, z0, grid.front(), grid.back(), grid, opts.tol);

  SensitivityResult r;
  r.param_names = model.param_names;
  r.params.assign(params.begin(), params.end());
  r.y0.assign(y0.begin(), y0.end());
  r.M = M;
  r.N = N;
  r.times = traj.times;
  const std::size_t T = traj.size();
  r.state.resize(T * M);
  r.S_raw.resize(T * N * M);
  r.S_init_raw.resize(T * M * M);
  r.R_raw.resize(T * P * M);
  for (std::size_t t = 0; t < T; ++t) {
    const auto row = traj.row(t);
    std::copy_n(row.begin(), M, r.state.begin() + static_cast<std::ptrdiff_t>(t * M));
    std::copy_n(row.begin() + static_cast<std::ptrdiff_t>(offS), N * M,
                r.S_raw.begin() + static_cast<std::ptrdiff_t>(t * N * M));
    std::copy_n(row.begin() + static_cast<std::ptrdiff_t>(offPhi), M * M,
                r.S_init_raw.begin() + static_cast<std::ptrdiff_t>(t * M * M));
    std::copy_n(row.begin() + static_cast<std::ptrdiff_t>(offR), P * M,
                r.R_raw.begin() + static_cast<std::ptrdiff_t>(t * P * M));
  }
  return normalize(std::move(r), opts.normalization_floor);
}

}  // namespace detail

/// State, first-order and initial-condition sensitivities. The grid starts at
/// the initial time.
inline SensitivityResult first_order(const ModelSpec& model, std::span<const double> params,
                                     std::span<const double> y0, std::span<const double> grid,
                                     const SensitivityOptions& opts = {}) {
  return detail::solve_augmented(model, params, y0, grid, false, opts);
}

/// As first_order, plus the symmetric second-order tensor R.
inline SensitivityResult second_order(const ModelSpec& model, std::span<const double> params,
                                      std::span<const double> y0, std::span<const double> grid,
                                      const SensitivityOptions& opts = {}) {
  return detail::solve_augmented(model, params, y0, grid, true, opts);
}

/// Time-indexed M x M matrices dy_k(t)/dy_l(0), flattened [t][k][l].
inline std::vector<double> initial_condition_sensitivity(const ModelSpec& model, std::span<const double> params,
                                                         std::span<const double> y0, std::span<const double> grid,
                                                         const SensitivityOptions& opts = {}) {
  return first_order(model, params, y0, grid, opts).S_init_raw;
}

/// Second-order sensitivities by central differences of first_order, for
/// models without analytic second partials. The result is flagged approximate.
inline SensitivityResult second_order_fd(const ModelSpec& model, std::span<const double> params,
                                         std::span<const double> y0, std::span<const double> grid,
                                         const SensitivityOptions& opts = {}, double rel_step = 1e-4) {
  SensitivityResult base = first_order(model, params, y0, grid, opts);
  const std::size_t T = base.times.size(), M = base.M, N = base.N, P = base.pairs();
  std::vector<double> full(T * N * N * M, 0.0);  // [t][i][j][k] = dS_jk / dp_i
  std::vector<double> shifted(params.begin(), params.end());
  for (std::size_t i = 0; i < N; ++i) {
    const double h = rel_step * std::max(std::abs(params[i]), 1.0e-8 / rel_step);
    shifted[i] = params[i] + h;
    const SensitivityResult plus = first_order(model, shifted, y0, grid, opts);
    shifted[i] = params[i] - h;
    const SensitivityResult minus = first_order(model, shifted, y0, grid, opts);
    shifted[i] = params[i];
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t j = 0; j < N; ++j)
        for (std::size_t k = 0; k < M; ++k)
          full[((t * N + i) * N + j) * M + k] = (plus.s(t, j, k) - minus.s(t, j, k)) / (2.0 * h);
  }
  base.R_raw.assign(T * P * M, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = i; j < N; ++j)
        for (std::size_t k = 0; k < M; ++k)
          base.R_raw[(t * P + pair_index(i, j, N)) * M + k] =
              0.5 * (full[((t * N + i) * N + j) * M + k] + full[((t * N + j) * N + i) * M + k]);
  base.second_order_approximate = true;
  return normalize(std::move(base), opts.normalization_floor);
}

}  // namespace actsens
