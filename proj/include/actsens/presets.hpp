#pragma once

// Reference parameter sets: the four stimulation/initial-activity scenarios,
// the two Zajac deactivation settings and Hatze (nu, rho_c) pairings, the
// global-analysis bounds, and adapters that turn the activation models into
// global-analysis family models.

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "actsens/error.hpp"
#include "actsens/global_sens.hpp"
#include "actsens/models.hpp"
#include "actsens/ode.hpp"

namespace actsens {

struct ScenarioRow {
  std::string_view id;
  double q_init;
  double sigma;
};

inline constexpr std::array<ScenarioRow, 4> kScenarioRows{{
    {"i", 0.005, 0.01},
    {"ii", 0.05, 0.1},
    {"iii", 0.2, 0.4},
    {"iv", 0.5, 1.0},
}};

inline constexpr std::array<double, 2> kZajacBetas{1.0, 1.0 / 3.0};
inline constexpr std::array<double, 2> kHatzeNus{2.0, 3.0};

/// Hatze's two published (nu, rho_c) pairings.
inline double hatze_rho_c_for_nu(double nu) {
  if (nu == 2.0) return 9.10;
  if (nu == 3.0) return 7.24;
  fail(ErrorKind::ConfigError, "no rho_c pairing for nu = " + std::to_string(nu) + " (use 2 or 3, or set rho_c)");
}

/// Hatze's q-form is not Lipschitz at q = q0, so scenario (i), which starts
/// at the basic activity, starts this far above it instead.
inline constexpr double kHatzeScenarioOffset = 1e-4;

inline const ScenarioRow& scenario_row(std::string_view id) {
  for (const auto& row : kScenarioRows)
    if (row.id == id) return row;
  fail(ErrorKind::ConfigError, "unknown scenario '" + std::string(id) + "' (expected i, ii, iii or iv)");
}

inline ZajacParams zajac_scenario(std::string_view id, double beta) {
  const ScenarioRow& row = scenario_row(id);
  ZajacParams p;
  p.sigma = row.sigma;
  p.q_init = row.q_init;
  p.q0 = kBasicActivity;
  p.tau = 0.025;
  p.beta = beta;
  return p;
}

inline HatzeParams hatze_scenario(std::string_view id, double nu) {
  const ScenarioRow& row = scenario_row(id);
  HatzeParams p;
  p.sigma = row.sigma;
  p.q0 = kBasicActivity;
  p.q_init = row.q_init <= p.q0 ? p.q0 + kHatzeScenarioOffset : row.q_init;
  p.m = 10.0;
  p.nu = nu;
  p.rho_c = hatze_rho_c_for_nu(nu);
  p.ell_rho = kHatzePole;
  p.ell_ce_rel = 1.0;
  return p;
}

/// Parameters of the simplified-Zajac reference curves.
struct AnalyticPreset {
  double sigma = 1.0;
  double tau = 0.025;
  double q_init = 0.05;
  double t_end = 0.2;
};

// ---------------------------------------------------------------------------
// Global-analysis bounds, canonical parameter order with the initial
// condition first.
// ---------------------------------------------------------------------------

inline ParameterCuboid zajac_default_bounds() {
  return {{{"q_Z0", 0.01, 1.0}, {"sigma", 0.0, 1.0}, {"q0", 0.001, 0.05}, {"tau", 0.01, 0.05}, {"beta", 0.1, 1.0}}};
}

inline ParameterCuboid hatze_default_bounds() {
  return {{{"q_H0", 0.01, 1.0},
           {"sigma", 0.0, 1.0},
           {"q0", 0.001, 0.05},
           {"m", 3.0, 11.0},
           {"rho_c", 4.0, 11.0},
           {"nu", 1.5, 4.0},
           {"ell_rho", 2.2, 3.6},
           {"ell_ce_rel", 0.4, 1.6}}};
}

/// Rows are (q_Z0, sigma, q0, tau, beta).
inline bool zajac_row_valid(std::span<const double> r) { return r[0] >= r[2] && r[0] <= 1.0; }

/// Rows are (q_H0, sigma, q0, m, rho_c, nu, ell_rho, ell_ce_rel).
inline bool hatze_row_valid(std::span<const double> r) {
  return r[0] > r[2] && r[0] <= 1.0 && r[5] > 1.0 && r[7] > 0.0 && r[7] < r[6];
}

inline FamilyModel zajac_family(const Tolerances& tol = {}) {
  const ModelSpec spec = zajac_model();
  return [spec, tol](std::span<const double> row, std::span<const double> grid) {
    const double y0[] = {row[0]};
    auto rhs = [&](double t, std::span<const double> y, std::span<double> f) { spec.rhs(t, y, row.subspan(1), f); };
    return integrate(rhs, y0, grid.front(), grid.back(), grid, tol).component(0);
  };
}

inline FamilyModel hatze_family(const Tolerances& tol = {}) {
  const ModelSpec spec = hatze_model();
  return [spec, tol](std::span<const double> row, std::span<const double> grid) {
    const double y0[] = {row[0]};
    auto rhs = [&](double t, std::span<const double> y, std::span<double> f) { spec.rhs(t, y, row.subspan(1), f); };
    return integrate(rhs, y0, grid.front(), grid.back(), grid, tol).component(0);
  };
}

}  // namespace actsens
