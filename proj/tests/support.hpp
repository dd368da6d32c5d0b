#pragma once

// Shared oracles for the unit tests and the acceptance binary: the 16
// scenario panels and finite-difference cross-checks of local sensitivities.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "actsens/local_sens.hpp"
#include "actsens/models.hpp"
#include "actsens/presets.hpp"

namespace actsens::testing {

struct Panel {
  std::string name;
  ModelSpec model;
  std::vector<double> params;
  std::vector<double> y0;
  std::vector<double> probes;
  double tau = 0.0;  ///< Zajac only
  bool hatze = false;
};

inline std::vector<Panel> scenario_panels() {
  std::vector<Panel> out;
  const ModelSpec zm = zajac_model();
  for (double beta : kZajacBetas)
    for (const auto& row : kScenarioRows) {
      const ZajacParams p = zajac_scenario(row.id, beta);
      out.push_back({"zajac/" + std::string(row.id) + "/beta=" + std::to_string(beta), zm, zajac_param_values(p),
                     {p.q_init}, {p.tau, 5.0 * p.tau}, p.tau, false});
    }
  const ModelSpec hm = hatze_model();
  for (double nu : kHatzeNus)
    for (const auto& row : kScenarioRows) {
      const HatzeParams p = hatze_scenario(row.id, nu);
      out.push_back({"hatze/" + std::string(row.id) + "/nu=" + std::to_string(nu), hm, hatze_param_values(p),
                     {p.q_init}, {0.05, 0.3}, 0.0, true});
    }
  return out;
}

inline SensitivityOptions tight_options() {
  SensitivityOptions o;
  o.tol.rel_tol = 1e-12;
  o.tol.abs_tol = 1e-14;
  return o;
}

inline std::vector<double> state_at(const Panel& p, const std::vector<double>& params, const std::vector<double>& y0,
                                    const std::vector<double>& grid) {
  auto rhs = [&](double t, std::span<const double> y, std::span<double> f) { p.model.rhs(t, y, params, f); };
  return integrate(rhs, y0, grid.front(), grid.back(), grid, tight_options().tol).values;
}

/// Worst ratio |num - fd| / (rel * |fd| + abs) over all checked quantities;
/// <= 1 passes.
struct FdReport {
  double first = 0.0;
  double second = 0.0;
  std::string first_where;
  std::string second_where;
};

/// Compares relative first-order sensitivities (parameters and initial
/// condition) against central differences of the state (step 1e-5 relative)
/// and relative second-order ones against central differences of the
/// first-order sensitivities (step 1e-4 relative).
inline FdReport fd_cross_check(const Panel& p, double rel1 = 1e-3, double abs1 = 1e-6, double rel2 = 1e-2,
                               double abs2 = 1e-5) {
  std::vector<double> grid{0.0};
  grid.insert(grid.end(), p.probes.begin(), p.probes.end());
  const SensitivityResult num = second_order(p.model, p.params, p.y0, grid);
  const std::size_t N = p.params.size(), M = p.y0.size(), T = grid.size();
  FdReport rep;
  auto worse = [](double& slot, std::string& where, double ratio, const std::string& what) {
    if (!(ratio <= slot)) {
      slot = std::isnan(ratio) ? INFINITY : ratio;
      where = what;
    }
  };

  for (std::size_t i = 0; i <= N; ++i) {  // i == N is the initial condition
    std::vector<double> par = p.params, y0 = p.y0;
    double& v = i < N ? par[i] : y0[0];
    const double base = v, h = 1e-5 * std::abs(base);
    v = base + h;
    const std::vector<double> plus = state_at(p, par, y0, grid);
    v = base - h;
    const std::vector<double> minus = state_at(p, par, y0, grid);
    for (std::size_t t = 1; t < T; ++t)
      for (std::size_t k = 0; k < M; ++k) {
        const double fd = (plus[t * M + k] - minus[t * M + k]) / (2.0 * h) * base / num.y(t, k);
        const double s = i < N ? num.s_rel(t, i, k) : num.s_init_rel(t, k, 0);
        const std::string name = i < N ? num.param_names[i] : std::string("y0");
        worse(rep.first, rep.first_where, std::abs(s - fd) / (rel1 * std::abs(fd) + abs1),
              name + " @ t=" + std::to_string(grid[t]));
      }
  }

  const SensitivityOptions tight = tight_options();
  for (std::size_t i = 0; i < N; ++i) {
    std::vector<double> par = p.params;
    const double base = par[i], h = 1e-4 * std::abs(base);
    par[i] = base + h;
    const SensitivityResult plus = first_order(p.model, par, p.y0, grid, tight);
    par[i] = base - h;
    const SensitivityResult minus = first_order(p.model, par, p.y0, grid, tight);
    for (std::size_t j = 0; j < N; ++j)
      for (std::size_t t = 1; t < T; ++t)
        for (std::size_t k = 0; k < M; ++k) {
          const double fd = (plus.s(t, j, k) - minus.s(t, j, k)) / (2.0 * h) * p.params[i] * p.params[j] / num.y(t, k);
          worse(rep.second, rep.second_where,
                std::abs(num.r_rel(t, i, j, k) - fd) / (rel2 * std::abs(fd) + abs2),
                num.param_names[i] + "," + num.param_names[j] + " @ t=" + std::to_string(grid[t]));
        }
  }
  return rep;
}

/// Largest finite |R_rel| over all times, pairs and states.
inline double max_abs_r_rel(const SensitivityResult& r) {
  double m = 0.0;
  for (double v : r.R_rel)
    if (std::isfinite(v)) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace actsens::testing
