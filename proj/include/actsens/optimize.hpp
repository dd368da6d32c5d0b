#pragma once

// Activity-dependent shift of the CE length at which the isometric force
// F_isom = F_max * q_H(gamma, l_CE) * F_l(l_CE) peaks, and the fit of the
// force-length width and Hatze's rho_0 to measured shifts.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "actsens/error.hpp"
#include "actsens/models.hpp"
#include "actsens/parallel.hpp"

namespace actsens {

// ---------------------------------------------------------------------------
// Nelder-Mead
// ---------------------------------------------------------------------------

struct NelderMeadOptions {
  double tol_x = 1e-8;
  double tol_f = 1e-8;
  std::size_t max_iterations = 2000;
  /// Per-coordinate initial simplex offsets; empty selects 5% of each
  /// coordinate (0.00025 for zero coordinates).
  std::vector<double> initial_steps;
};

struct NelderMeadResult {
  std::vector<double> argmin;
  double value = 0.0;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
};

/// Downhill simplex with reflection 1, expansion 2, contraction 0.5 and
/// shrink 0.5. Stops once the simplex diameter (max-norm to the best vertex)
/// and the spread of function values both drop below tolerance.
template <class F>
NelderMeadResult nelder_mead(F&& objective, std::vector<double> start, const NelderMeadOptions& opts = {}) {
  const std::size_t n = start.size();
  if (n == 0) fail(ErrorKind::InvalidArgument, "Nelder-Mead needs at least one coordinate");
  std::vector<std::vector<double>> x(n + 1, start);
  std::vector<double> f(n + 1);
  NelderMeadResult res;
  auto eval = [&](const std::vector<double>& p) {
    ++res.evaluations;
    const double v = objective(p);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };

  f[0] = eval(x[0]);
  if (!std::isfinite(f[0])) fail(ErrorKind::InvalidArgument, "objective is not finite at the start point");
  for (std::size_t i = 0; i < n; ++i) {
    double step;
    if (!opts.initial_steps.empty())
      step = opts.initial_steps[i];
    else
      step = start[i] != 0.0 ? 0.05 * start[i] : 0.00025;
    x[i + 1][i] += step;
    f[i + 1] = eval(x[i + 1]);
  }

  std::vector<std::size_t> order(n + 1);
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return f[a] < f[b]; });
    std::vector<std::vector<double>> xs(n + 1);
    std::vector<double> fs(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
      xs[i] = std::move(x[order[i]]);
      fs[i] = f[order[i]];
    }
    x = std::move(xs);
    f = std::move(fs);
  };

  std::vector<double> centroid(n), xr(n), xe(n), xc(n);
  auto along = [&](double coef, const std::vector<double>& from, std::vector<double>& out) {
    for (std::size_t k = 0; k < n; ++k) out[k] = centroid[k] + coef * (from[k] - centroid[k]);
  };

  sort_simplex();
  for (;;) {
    double diameter = 0.0, spread = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
      spread = std::max(spread, std::abs(f[i] - f[0]));
      for (std::size_t k = 0; k < n; ++k) diameter = std::max(diameter, std::abs(x[i][k] - x[0][k]));
    }
    if (diameter <= opts.tol_x && spread <= opts.tol_f) break;
    if (res.iterations >= opts.max_iterations)
      fail(ErrorKind::MaxIterationsExceeded, "Nelder-Mead did not converge in " + std::to_string(opts.max_iterations) + " iterations");
    ++res.iterations;

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k) centroid[k] += x[i][k] / static_cast<double>(n);

    along(-1.0, x[n], xr);
    const double fr = eval(xr);
    if (fr < f[0]) {
      along(-2.0, x[n], xe);
      const double fe = eval(xe);
      if (fe < fr) {
        x[n] = xe;
        f[n] = fe;
      } else {
        x[n] = xr;
        f[n] = fr;
      }
    } else if (fr < f[n - 1]) {
      x[n] = xr;
      f[n] = fr;
    } else {
      bool shrink = false;
      if (fr < f[n]) {
        along(-0.5, x[n], xc);
        const double fc = eval(xc);
        if (fc <= fr) {
          x[n] = xc;
          f[n] = fc;
        } else {
          shrink = true;
        }
      } else {
        along(0.5, x[n], xc);
        const double fc = eval(xc);
        if (fc < f[n]) {
          x[n] = xc;
          f[n] = fc;
        } else {
          shrink = true;
        }
      }
      if (shrink) {
        for (std::size_t i = 1; i <= n; ++i) {
          for (std::size_t k = 0; k < n; ++k) x[i][k] = x[0][k] + 0.5 * (x[i][k] - x[0][k]);
          f[i] = eval(x[i]);
        }
      }
    }
    sort_simplex();
  }
  res.argmin = x[0];
  res.value = f[0];
  return res;
}

// ---------------------------------------------------------------------------
// Isometric force and optimal-length shift
// ---------------------------------------------------------------------------

struct ShiftOptions {
  bool length_dependent = true;  ///< false pins rho at its l_CErel = 1 value
  std::size_t coarse_points = 201;
  double lower_factor = 0.5;  ///< search interval in units of l_opt
  double upper_factor = 1.5;
  double golden_tol_mm = 1e-6;
};

namespace detail {

inline double isometric_rho(double x, const HatzeParams& p, bool length_dependent) {
  return length_dependent ? hatze_rho(x, p.rho_c, p.ell_rho) : p.rho_c;
}

inline double q_of_gamma_rho(double gamma, double rho, const HatzeParams& p) {
  const double z = std::pow(rho * gamma, p.nu);
  return (p.q0 + z) / (1.0 + z);
}

/// dF_isom/dl_CE in N/mm.
inline double isometric_slope(double gamma, double ell_ce, const HatzeParams& p, const ForceLengthRelation& flr,
                              bool length_dependent) {
  const double x = ell_ce / flr.ell_opt;
  const double rho = isometric_rho(x, p, length_dependent);
  const double z = std::pow(rho * gamma, p.nu);
  const double q = (p.q0 + z) / (1.0 + z);
  double dq_dx = 0.0;
  if (length_dependent && gamma > 0.0) {
    const double drho_dx = p.rho_c * (p.ell_rho - 1.0) * p.ell_rho / ((p.ell_rho - x) * (p.ell_rho - x));
    const double dz_dx = p.nu * z / rho * drho_dx;
    dq_dx = (1.0 - p.q0) / ((1.0 + z) * (1.0 + z)) * dz_dx;
  }
  const double dF_dx = flr.f_max * (dq_dx * force_length_rel(x, flr) + q * force_length_rel_slope(x, flr));
  return dF_dx / flr.ell_opt;
}

}  // namespace detail

inline double isometric_force(double gamma, double ell_ce, const HatzeParams& p, const ForceLengthRelation& flr,
                              bool length_dependent = true) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail(ErrorKind::InvalidArgument, "gamma must lie in [0, 1]");
  const double x = ell_ce / flr.ell_opt;
  const double rho = detail::isometric_rho(x, p, length_dependent);
  return flr.f_max * detail::q_of_gamma_rho(gamma, rho, p) * force_length_rel(x, flr);
}

/// CE length (mm) maximising F_isom at activation gamma: coarse scan, then
/// golden-section, then bisection on the analytic slope.
inline double isometric_force_peak(double gamma, const HatzeParams& p, const ForceLengthRelation& flr,
                                   const ShiftOptions& opts = {}) {
  flr.validate();
  const double lo = opts.lower_factor * flr.ell_opt, hi = opts.upper_factor * flr.ell_opt;
  if (opts.length_dependent && !(hi / flr.ell_opt < p.ell_rho)) fail(ErrorKind::PoleViolation, "search interval reaches the pole");
  const std::size_t count = std::max<std::size_t>(opts.coarse_points, 3);
  auto F = [&](double l) { return isometric_force(gamma, l, p, flr, opts.length_dependent); };

  std::size_t best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  const double dl = (hi - lo) / static_cast<double>(count - 1);
  for (std::size_t k = 0; k < count; ++k) {
    const double v = F(lo + dl * static_cast<double>(k));
    if (v > best_value) {
      best_value = v;
      best = k;
    }
  }
  if (best == 0 || best == count - 1) fail(ErrorKind::NoInteriorMaximum, "isometric force peaks on the search boundary");

  double a = lo + dl * static_cast<double>(best - 1), b = lo + dl * static_cast<double>(best + 1);
  constexpr double invphi = 0.6180339887498948482;
  double c = b - invphi * (b - a), d = a + invphi * (b - a);
  double fc = F(c), fd = F(d);
  while (b - a > opts.golden_tol_mm) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = F(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = F(d);
    }
  }

  // Polish with the slope; the golden bracket is only as sharp as the flat
  // top of F allows in floating point.
  auto slope = [&](double l) { return detail::isometric_slope(gamma, l, p, flr, opts.length_dependent); };
  double sa = slope(a), sb = slope(b);
  if (sa > 0.0 && sb < 0.0) {
    for (int it = 0; it < 200 && b - a > 0.0; ++it) {
      const double mid = 0.5 * (a + b);
      if (mid <= a || mid >= b) break;
      const double sm = slope(mid);
      if (sm > 0.0)
        a = mid;
      else if (sm < 0.0)
        b = mid;
      else
        return mid;
    }
  }
  return 0.5 * (a + b);
}

/// Shift (mm) of the isometric force peak at gamma relative to the peak at
/// full activation of the same model.
inline double optimal_length_shift(double gamma, const HatzeParams& p, const ForceLengthRelation& flr,
                                   const ShiftOptions& opts = {}) {
  return isometric_force_peak(gamma, p, flr, opts) - isometric_force_peak(1.0, p, flr, opts);
}

// ---------------------------------------------------------------------------
// Targets and the fit
// ---------------------------------------------------------------------------

inline constexpr std::array<double, 5> kShiftLevels{0.55, 0.28, 0.22, 0.17, 0.08};

struct ShiftTargets {
  std::vector<double> levels;
  std::vector<double> shifts;  ///< mm
  std::string source;

  void validate() const {
    if (levels.empty() || levels.size() != shifts.size()) fail(ErrorKind::InvalidArgument, "targets need matching levels and shifts");
    for (std::size_t i = 0; i < levels.size(); ++i) {
      if (!(levels[i] > 0.0 && levels[i] < 1.0)) fail(ErrorKind::InvalidArgument, "target levels must lie in (0, 1)");
      if (!std::isfinite(shifts[i])) fail(ErrorKind::InvalidArgument, "target shifts must be finite");
      for (std::size_t j = 0; j < i; ++j)
        if (levels[j] == levels[i]) fail(ErrorKind::InvalidArgument, "target levels must be distinct");
    }
  }
};

/// Reads a `gamma,shift_mm` CSV with a header row.
inline ShiftTargets read_targets_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open targets file " + path);
  ShiftTargets t;
  t.source = path;
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::ConfigError, "targets file is empty: " + path);
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  {
    std::stringstream hs(line);
    std::string c0, c1;
    std::getline(hs, c0, ',');
    std::getline(hs, c1, ',');
    if (trim(c0) != "gamma" || trim(c1) != "shift_mm")
      fail(ErrorKind::ConfigError, "targets header must be 'gamma,shift_mm' in " + path);
  }
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::stringstream ls(line);
    std::string a, b;
    std::getline(ls, a, ',');
    std::getline(ls, b, ',');
    try {
      std::size_t pa = 0, pb = 0;
      const double g = std::stod(trim(a), &pa);
      const double s = std::stod(trim(b), &pb);
      if (pa != trim(a).size() || pb != trim(b).size()) throw std::invalid_argument("trailing characters");
      t.levels.push_back(g);
      t.shifts.push_back(s);
    } catch (const std::exception&) {
      fail(ErrorKind::ConfigError, "malformed targets row '" + line + "' in " + path);
    }
  }
  t.validate();
  return t;
}

inline void write_targets_csv(const ShiftTargets& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path);
  out.precision(17);
  out << "gamma,shift_mm\n";
  for (std::size_t i = 0; i < t.levels.size(); ++i) out << t.levels[i] << ',' << t.shifts[i] << '\n';
}

struct FitProblem {
  ForceLengthKind kind = ForceLengthKind::Bell;
  double nu = 3.0;
  double width_start = 0.35;
  double rho0_start = 6.0e4;  ///< l/mol
  double ell_opt = 14.8;      ///< mm
  double q0 = kBasicActivity;
  double ell_rho = kHatzePole;
  ShiftTargets targets;
  ShiftOptions shift{};
};

inline HatzeParams fit_hatze_params(double rho0, const FitProblem& pr) {
  HatzeParams p;
  p.q0 = pr.q0;
  p.nu = pr.nu;
  p.rho_c = rho0 * kCalciumCeiling;
  p.ell_rho = pr.ell_rho;
  return p;
}

inline ForceLengthRelation fit_force_length(double width, const FitProblem& pr) {
  ForceLengthRelation flr;
  flr.kind = pr.kind;
  flr.width = width;
  flr.ell_opt = pr.ell_opt;
  return flr;
}

/// Predicted shifts (mm) at each level for given width and rho_0.
inline std::vector<double> predicted_shifts(double width, double rho0, const FitProblem& pr,
                                            const std::vector<double>& levels) {
  const HatzeParams p = fit_hatze_params(rho0, pr);
  const ForceLengthRelation flr = fit_force_length(width, pr);
  const double reference = isometric_force_peak(1.0, p, flr, pr.shift);
  std::vector<double> out;
  out.reserve(levels.size());
  for (double g : levels) out.push_back(isometric_force_peak(g, p, flr, pr.shift) - reference);
  return out;
}

/// Fixed divisor of the fit error, the number of reference stimulation levels.
inline constexpr double kFitErrorDivisor = 5.0;

/// sqrt(sum of squared shift residuals / 5), in mm.
inline double fit_error(double width, double rho0, const FitProblem& pr) {
  if (!(width > 0.0) || !(rho0 > 0.0)) fail(ErrorKind::InvalidArgument, "width and rho0 must be positive");
  const std::vector<double> model = predicted_shifts(width, rho0, pr, pr.targets.levels);
  double sum = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const double d = model[i] - pr.targets.shifts[i];
    sum += d * d;
  }
  return std::sqrt(sum / kFitErrorDivisor);
}

struct FitResult {
  double width = 0.0;
  double rho0 = 0.0;
  double error = 0.0;  ///< mm
  std::size_t iterations = 0;
  bool ok = false;
  std::string failure;
};

/// Fits (width, rho_0) by Nelder-Mead on their logarithms, which keeps both
/// positive.
inline FitResult fit(const FitProblem& pr, const NelderMeadOptions& nm_opts = {}) {
  pr.targets.validate();
  if (!(pr.width_start > 0.0) || !(pr.rho0_start > 0.0)) fail(ErrorKind::InvalidArgument, "fit start values must be positive");
  auto objective = [&](const std::vector<double>& v) {
    try {
      return fit_error(std::exp(v[0]), std::exp(v[1]), pr);
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  NelderMeadOptions o = nm_opts;
  if (o.initial_steps.empty()) o.initial_steps = {0.05, 0.05};
  const NelderMeadResult r = nelder_mead(objective, {std::log(pr.width_start), std::log(pr.rho0_start)}, o);
  FitResult out;
  out.width = std::exp(r.argmin[0]);
  out.rho0 = std::exp(r.argmin[1]);
  out.error = r.value;
  out.iterations = r.iterations;
  out.ok = std::isfinite(r.value);
  if (!out.ok) out.failure = "objective not finite at the optimum";
  return out;
}

/// Targets produced by the model itself, for round-trip checks.
inline ShiftTargets synthesize_targets(double width, double rho0, double nu, ForceLengthKind kind,
                                       const std::vector<double>& levels = {kShiftLevels.begin(), kShiftLevels.end()},
                                       double ell_opt = 14.8) {
  FitProblem pr;
  pr.kind = kind;
  pr.nu = nu;
  pr.ell_opt = ell_opt;
  ShiftTargets t;
  t.levels = levels;
  t.shifts = predicted_shifts(width, rho0, pr, levels);
  std::ostringstream src;
  src.precision(17);
  src << "synthetic: width=" << width << " rho0=" << rho0 << " nu=" << nu << " kind=" << to_string(kind);
  t.source = src.str();
  return t;
}

inline constexpr std::array<double, 3> kTableNus{2.0, 3.0, 4.0};
inline constexpr std::array<double, 3> kBellWidthStarts{0.25, 0.35, 0.45};
inline constexpr std::array<double, 3> kParabolaWidthStarts{0.46, 0.56, 0.66};

struct TableCell {
  std::size_t start_row = 0;  ///< 0..2, index into the width start presets
  double nu = 0.0;
  ForceLengthKind kind = ForceLengthKind::Bell;
  double width_start = 0.0;
  FitResult result;
};

/// One fit per (start row, nu, kind): 3 x 3 x 2 cells, ordered by start row,
/// then nu, then bell before parabola. Cell failures are recorded, not thrown.
inline std::vector<TableCell> run_table(const ShiftTargets& targets, double rho0_start = 6.0e4, double ell_opt = 14.8,
                                        std::size_t threads = 0) {
  targets.validate();
  std::vector<TableCell> cells;
  for (std::size_t s = 0; s < 3; ++s)
    for (double nu : kTableNus)
      for (ForceLengthKind kind : {ForceLengthKind::Bell, ForceLengthKind::Parabola}) {
        TableCell c;
        c.start_row = s;
        c.nu = nu;
        c.kind = kind;
        c.width_start = kind == ForceLengthKind::Bell ? kBellWidthStarts[s] : kParabolaWidthStarts[s];
        cells.push_back(c);
      }
  parallel_for(
      cells.size(),
      [&](std::size_t i) {
        TableCell& c = cells[i];
        FitProblem pr;
        pr.kind = c.kind;
        pr.nu = c.nu;
        pr.width_start = c.width_start;
        pr.rho0_start = rho0_start;
        pr.ell_opt = ell_opt;
        pr.targets = targets;
        try {
          c.result = fit(pr);
        } catch (const Error& e) {
          c.result.ok = false;
          c.result.failure = e.what();
        }
      },
      threads);
  return cells;
}

}  // namespace actsens
