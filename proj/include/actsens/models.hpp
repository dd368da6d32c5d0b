#pragma once

// Zajac (linear) and Hatze (non-linear, length-dependent) muscle activation
// dynamics, their partial derivatives, steady states, the closed-form
// simplified Zajac oracle, and the CE force-length relations.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "actsens/error.hpp"
#include "actsens/jet.hpp"
#include "actsens/model_spec.hpp"

namespace actsens {

/// Maximal free Ca2+ concentration in mol/l; rho_c = rho_0 * c.
inline constexpr double kCalciumCeiling = 1.37e-4;
inline constexpr double kBasicActivity = 0.005;
inline constexpr double kHatzePole = 2.9;

// ---------------------------------------------------------------------------
// Zajac
// ---------------------------------------------------------------------------

struct ZajacParams {
  double sigma = 1.0;
  double q0 = kBasicActivity;
  double tau = 0.025;
  double beta = 1.0;
  double q_init = kBasicActivity;

  void validate() const {
    if (!(q0 >= 0.0 && q0 < 1.0)) fail(ErrorKind::InvalidArgument, "Zajac: require 0 <= q0 < 1");
    if (!(q_init >= q0 && q_init <= 1.0)) fail(ErrorKind::InvalidArgument, "Zajac: require q0 <= q_init <= 1");
    if (!(tau > 0.0)) fail(ErrorKind::InvalidArgument, "Zajac: require tau > 0");
    if (!(beta > 0.0)) fail(ErrorKind::InvalidArgument, "Zajac: require beta > 0");
    if (!(sigma >= 0.0 && sigma <= 1.0)) fail(ErrorKind::InvalidArgument, "Zajac: require 0 <= sigma <= 1");
  }
};

/// Index of each independent variable in ZajacPartials.
enum ZajacVar : std::size_t { kZq = 0, kZsigma, kZq0, kZtau, kZbeta, kZajacVars };

struct ZajacPartials {
  double f = 0.0;
  std::array<double, kZajacVars> grad{};
  std::array<std::array<double, kZajacVars>, kZajacVars> hess{};
};

template <class T>
T zajac_rhs_t(const T& q, const T& sigma, const T& q0, const T& tau, const T& beta) {
  return (sigma * (1.0 - q0) - sigma * (1.0 - beta) * (q - q0) - beta * (q - q0)) / (tau * (1.0 - q0));
}

inline double zajac_rhs(double q, const ZajacParams& p) { return zajac_rhs_t(q, p.sigma, p.q0, p.tau, p.beta); }

/// Hand-derived partials. With W = (q - q0)/(1 - q0) and D = sigma + beta - sigma*beta
/// the right-hand side reads f = (sigma - D*W)/tau.
inline ZajacPartials zajac_partials(double q, const ZajacParams& p) {
  const double s = p.sigma, b = p.beta, tau = p.tau;
  const double u = 1.0 - p.q0;
  const double W = (q - p.q0) / u;
  const double D = s + b - s * b;
  const double g = s - D * W;

  // Derivatives of g = tau * f (g does not depend on tau).
  std::array<double, kZajacVars> gg{};
  gg[kZq] = -D / u;
  gg[kZsigma] = 1.0 - (1.0 - b) * W;
  gg[kZq0] = -D * (q - 1.0) / (u * u);
  gg[kZbeta] = -(1.0 - s) * W;

  std::array<std::array<double, kZajacVars>, kZajacVars> gh{};
  auto set = [&gh](std::size_t i, std::size_t j, double v) { gh[i][j] = gh[j][i] = v; };
  set(kZq, kZsigma, -(1.0 - b) / u);
  set(kZq, kZq0, -D / (u * u));
  set(kZq, kZbeta, -(1.0 - s) / u);
  set(kZsigma, kZq0, -(1.0 - b) * (q - 1.0) / (u * u));
  set(kZsigma, kZbeta, W);
  set(kZq0, kZq0, -2.0 * D * (q - 1.0) / (u * u * u));
  set(kZq0, kZbeta, -(1.0 - s) * (q - 1.0) / (u * u));

  ZajacPartials out;
  out.f = g / tau;
  for (std::size_t i = 0; i < kZajacVars; ++i) out.grad[i] = gg[i] / tau;
  out.grad[kZtau] = -g / (tau * tau);
  for (std::size_t i = 0; i < kZajacVars; ++i)
    for (std::size_t j = 0; j < kZajacVars; ++j) out.hess[i][j] = gh[i][j] / tau;
  for (std::size_t i = 0; i < kZajacVars; ++i) {
    if (i == kZtau) continue;
    out.hess[i][kZtau] = out.hess[kZtau][i] = -gg[i] / (tau * tau);
  }
  out.hess[kZtau][kZtau] = 2.0 * g / (tau * tau * tau);
  return out;
}

/// Saturation level for constant stimulation; sigma = 0 returns q0.
inline double zajac_steady_state(const ZajacParams& p) {
  if (p.sigma <= 0.0) return p.q0;
  return p.q0 + (1.0 - p.q0) / ((1.0 - p.beta) + p.beta / p.sigma);
}

/// Parameter order of the Zajac ModelSpec. The initial condition q_Z0 is
/// handled through the initial-condition sensitivity, not as a column here.
inline std::vector<std::string> zajac_param_names() { return {"sigma", "q0", "tau", "beta"}; }

inline std::vector<double> zajac_param_values(const ZajacParams& p) { return {p.sigma, p.q0, p.tau, p.beta}; }

inline ZajacParams zajac_from_values(std::span<const double> v, double q_init) {
  return ZajacParams{v[0], v[1], v[2], v[3], q_init};
}

inline ModelSpec zajac_model() {
  ModelSpec spec;
  spec.name = "zajac";
  spec.state_dim = 1;
  spec.param_names = zajac_param_names();
  spec.rhs = [](double, std::span<const double> y, std::span<const double> p, std::span<double> f) {
    f[0] = zajac_rhs_t(y[0], p[0], p[1], p[2], p[3]);
  };
  auto fill = [](std::span<const double> y, std::span<const double> p, Partials& d, bool second) {
    const ZajacParams zp{p[0], p[1], p[2], p[3], y[0]};
    const ZajacPartials z = zajac_partials(y[0], zp);
    constexpr std::size_t N = 4;
    d.resize(1, N, second);
    d.f[0] = z.f;
    d.fy[0] = z.grad[kZq];
    for (std::size_t i = 0; i < N; ++i) d.fp[i] = z.grad[1 + i];
    if (!second) return;
    d.fyy[0] = z.hess[kZq][kZq];
    for (std::size_t i = 0; i < N; ++i) d.fyp[i] = z.hess[1 + i][kZq];
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j) d.fpp[i * N + j] = z.hess[1 + i][1 + j];
  };
  spec.first = [fill](double, std::span<const double> y, std::span<const double> p, Partials& d) {
    fill(y, p, d, false);
  };
  spec.second = [fill](double, std::span<const double> y, std::span<const double> p, Partials& d) {
    fill(y, p, d, true);
  };
  return spec;
}

// ---------------------------------------------------------------------------
// Simplified Zajac (beta = 1, q0 = 0): dq/dt = (sigma - q)/tau
// ---------------------------------------------------------------------------

inline double simplified_zajac_solution(double t, double sigma, double tau, double q_init) {
  if (t < 0.0) fail(ErrorKind::InvalidArgument, "simplified Zajac solution needs t >= 0");
  const double e = std::exp(-t / tau);
  return sigma * (1.0 - e) + q_init * e;
}

struct SimplifiedZajacSensitivities {
  double sigma = 0.0;
  double tau = 0.0;
  double q_init = 0.0;
};

/// Closed-form relative sensitivities of the simplified Zajac solution.
inline SimplifiedZajacSensitivities simplified_zajac_sensitivities(double t, double sigma, double tau, double q_init) {
  if (t < 0.0) fail(ErrorKind::InvalidArgument, "simplified Zajac sensitivities need t >= 0");
  const double grow = std::expm1(t / tau);
  const double denom = sigma * grow + q_init;
  if (!(denom > 0.0)) fail(ErrorKind::DegenerateState, "sigma*(exp(t/tau)-1) + q_init must be positive");
  return {sigma * grow / denom, t * (q_init - sigma) / (tau * denom), q_init / denom};
}

inline std::vector<std::string> simplified_zajac_param_names() { return {"sigma", "tau"}; }

inline ModelSpec simplified_zajac_model() {
  return make_autodiff_model<1, 2>("simplified-zajac", simplified_zajac_param_names(),
                                   [](double, const auto& y, const auto& p, auto& out) {
                                     out[0] = (p[0] - y[0]) / p[1];
                                   });
}

// ---------------------------------------------------------------------------
// Hatze
// ---------------------------------------------------------------------------

struct HatzeParams {
  double sigma = 1.0;
  double q0 = kBasicActivity;
  double m = 10.0;
  double rho_c = 7.24;
  double nu = 3.0;
  double ell_rho = kHatzePole;
  double ell_ce_rel = 1.0;
  double q_init = 0.05;

  void validate() const {
    if (!(q0 > 0.0 && q0 < 1.0)) fail(ErrorKind::InvalidArgument, "Hatze: require 0 < q0 < 1");
    if (!(q_init >= q0 && q_init < 1.0)) fail(ErrorKind::InvalidArgument, "Hatze: require q0 <= q_init < 1");
    if (!(nu > 1.0)) fail(ErrorKind::InvalidArgument, "Hatze: require nu > 1");
    if (!(m > 0.0)) fail(ErrorKind::InvalidArgument, "Hatze: require m > 0");
    if (!(rho_c > 0.0)) fail(ErrorKind::InvalidArgument, "Hatze: require rho_c > 0");
    if (!(sigma >= 0.0 && sigma <= 1.0)) fail(ErrorKind::InvalidArgument, "Hatze: require 0 <= sigma <= 1");
    if (!(ell_ce_rel > 0.0 && ell_ce_rel < ell_rho)) fail(ErrorKind::PoleViolation, "Hatze: require 0 < ell_ce_rel < ell_rho");
  }
};

/// Clamp margin keeping the fractional powers real near q0 and 1.
inline constexpr double kHatzeDomainMargin = 1e-12;

enum HatzeVar : std::size_t { kHq = 0, kHsigma, kHq0, kHm, kHrho_c, kHnu, kHell_rho, kHell_ce_rel, kHatzeVars };

template <class T>
T hatze_rho_t(const T& ell_ce_rel, const T& rho_c, const T& ell_rho) {
  return rho_c * (ell_rho - 1.0) / (ell_rho / ell_ce_rel - 1.0);
}

inline double hatze_rho(double ell_ce_rel, double rho_c, double ell_rho) {
  if (!(ell_ce_rel > 0.0 && ell_ce_rel < ell_rho)) fail(ErrorKind::PoleViolation, "require 0 < ell_ce_rel < ell_rho");
  return hatze_rho_t(ell_ce_rel, rho_c, ell_rho);
}

namespace detail {
inline void clamp_value(double& x, double lo, double hi) { x = std::clamp(x, lo, hi); }
template <std::size_t N>
void clamp_value(Jet<N>& x, double lo, double hi) {
  x.v = std::clamp(x.v, lo, hi);
}
}  // namespace detail

/// Hatze activity dynamics written directly in q; the state is clamped into
/// [q0 + margin, 1 - margin] before the fractional powers are taken.
template <class T>
T hatze_rhs_t(T q, const T& sigma, const T& q0, const T& m, const T& rho_c, const T& nu, const T& ell_rho,
              const T& ell_ce_rel) {
  const double lo = value_of(q0) + kHatzeDomainMargin;
  const double hi = 1.0 - kHatzeDomainMargin;
  using std::pow;
  detail::clamp_value(q, std::min(lo, hi), hi);
  const T rho = hatze_rho_t(ell_ce_rel, rho_c, ell_rho);
  const T A = 1.0 - q;
  const T B = q - q0;
  const T inv_nu = 1.0 / nu;
  return nu * m / (1.0 - q0) * (sigma * rho * pow(A, 1.0 + inv_nu) * pow(B, 1.0 - inv_nu) - A * B);
}

inline double hatze_rhs(double q, const HatzeParams& p) {
  if (!std::isfinite(q) || q < p.q0 || q > 1.0) fail(ErrorKind::DomainViolation, "Hatze rhs needs q0 <= q <= 1");
  if (!(p.ell_ce_rel > 0.0 && p.ell_ce_rel < p.ell_rho)) fail(ErrorKind::PoleViolation, "require 0 < ell_ce_rel < ell_rho");
  return hatze_rhs_t(q, p.sigma, p.q0, p.m, p.rho_c, p.nu, p.ell_rho, p.ell_ce_rel);
}

struct HatzePartials {
  double f = 0.0;
  std::array<double, kHatzeVars> grad{};
  std::array<std::array<double, kHatzeVars>, kHatzeVars> hess{};
};

/// Exact first and second partials of the Hatze rhs with respect to q and
/// all seven parameters, via forward-mode propagation.
inline HatzePartials hatze_partials(double q, const HatzeParams& p) {
  if (!std::isfinite(q) || q < p.q0 || q > 1.0) fail(ErrorKind::DomainViolation, "Hatze partials need q0 <= q <= 1");
  if (!(p.ell_ce_rel > 0.0 && p.ell_ce_rel < p.ell_rho)) fail(ErrorKind::PoleViolation, "require 0 < ell_ce_rel < ell_rho");
  using J = Jet<kHatzeVars>;
  const J r = hatze_rhs_t(J::variable(q, kHq), J::variable(p.sigma, kHsigma), J::variable(p.q0, kHq0),
                          J::variable(p.m, kHm), J::variable(p.rho_c, kHrho_c), J::variable(p.nu, kHnu),
                          J::variable(p.ell_rho, kHell_rho), J::variable(p.ell_ce_rel, kHell_ce_rel));
  HatzePartials out;
  out.f = r.v;
  for (std::size_t i = 0; i < kHatzeVars; ++i) {
    out.grad[i] = r.grad(i);
    for (std::size_t j = 0; j < kHatzeVars; ++j) out.hess[i][j] = r.hess(i, j);
  }
  return out;
}

/// Activity as a function of normalised free Ca2+ concentration gamma.
inline double hatze_q_of_gamma(double gamma, double ell_ce_rel, const HatzeParams& p) {
  const double rho = hatze_rho(ell_ce_rel, p.rho_c, p.ell_rho);
  if (std::isinf(gamma)) return 1.0;
  const double z = std::pow(rho * gamma, p.nu);
  if (std::isinf(z)) return 1.0;
  return (p.q0 + z) / (1.0 + z);
}

/// Inverse of hatze_q_of_gamma at fixed length; q must lie in [q0, 1).
inline double hatze_gamma_of_q(double q, double ell_ce_rel, const HatzeParams& p) {
  if (!(q >= p.q0 && q < 1.0)) fail(ErrorKind::DomainViolation, "gamma(q) needs q0 <= q < 1");
  const double rho = hatze_rho(ell_ce_rel, p.rho_c, p.ell_rho);
  return std::pow((q - p.q0) / (1.0 - q), 1.0 / p.nu) / rho;
}

/// Isometric steady state: gamma relaxes to sigma.
inline double hatze_steady_state(const HatzeParams& p) { return hatze_q_of_gamma(p.sigma, p.ell_ce_rel, p); }

inline std::vector<std::string> hatze_param_names() {
  return {"sigma", "q0", "m", "rho_c", "nu", "ell_rho", "ell_ce_rel"};
}

inline std::vector<double> hatze_param_values(const HatzeParams& p) {
  return {p.sigma, p.q0, p.m, p.rho_c, p.nu, p.ell_rho, p.ell_ce_rel};
}

inline HatzeParams hatze_from_values(std::span<const double> v, double q_init) {
  return HatzeParams{v[0], v[1], v[2], v[3], v[4], v[5], v[6], q_init};
}

inline ModelSpec hatze_model() {
  return make_autodiff_model<1, 7>("hatze", hatze_param_names(), [](double, const auto& y, const auto& p, auto& out) {
    out[0] = hatze_rhs_t(y[0], p[0], p[1], p[2], p[3], p[4], p[5], p[6]);
  });
}

/// Hatze's gamma dynamics, dgamma/dt = m (sigma - gamma), as a one-state model
/// with parameters (sigma, m).
inline ModelSpec hatze_gamma_model() {
  return make_autodiff_model<1, 2>("hatze-gamma", {"sigma", "m"}, [](double, const auto& y, const auto& p, auto& out) {
    out[0] = p[1] * (p[0] - y[0]);
  });
}

// ---------------------------------------------------------------------------
// CE force-length relations
// ---------------------------------------------------------------------------

enum class ForceLengthKind { Parabola, Bell };

inline std::string to_string(ForceLengthKind k) { return k == ForceLengthKind::Parabola ? "parabola" : "bell"; }

struct ForceLengthRelation {
  ForceLengthKind kind = ForceLengthKind::Bell;
  double width = 0.32;   ///< WIDTH (parabola) or Delta W (bell, both branches)
  double nu_asc = 3.0;
  double nu_des = 1.5;
  double ell_opt = 14.8;  ///< mm
  double f_max = 1.0;     ///< N

  void validate() const {
    if (!(width > 0.0)) fail(ErrorKind::InvalidArgument, "force-length width must be positive");
    if (!(nu_asc > 0.0 && nu_des > 0.0)) fail(ErrorKind::InvalidArgument, "force-length exponents must be positive");
    if (!(ell_opt > 0.0)) fail(ErrorKind::InvalidArgument, "optimal length must be positive");
  }
};

/// Normalised force-length factor at relative length x = ell_ce / ell_opt.
inline double force_length_rel(double x, const ForceLengthRelation& rel) {
  const double d = x - 1.0;
  if (rel.kind == ForceLengthKind::Parabola) return std::max(0.0, 1.0 - (d / rel.width) * (d / rel.width));
  const double nu = d <= 0.0 ? rel.nu_asc : rel.nu_des;
  return std::exp(-std::pow(std::abs(d) / rel.width, nu));
}

/// d/dx of force_length_rel.
inline double force_length_rel_slope(double x, const ForceLengthRelation& rel) {
  const double d = x - 1.0;
  if (d == 0.0) return 0.0;
  if (rel.kind == ForceLengthKind::Parabola) {
    if (std::abs(d) >= rel.width) return 0.0;
    return -2.0 * d / (rel.width * rel.width);
  }
  const double nu = d < 0.0 ? rel.nu_asc : rel.nu_des;
  const double r = std::abs(d) / rel.width;
  const double sign = d < 0.0 ? -1.0 : 1.0;
  return -std::exp(-std::pow(r, nu)) * nu * std::pow(r, nu - 1.0) * sign / rel.width;
}

inline double force_length(double ell_ce, const ForceLengthRelation& rel) {
  if (!(ell_ce > 0.0)) fail(ErrorKind::InvalidArgument, "CE length must be positive");
  return force_length_rel(ell_ce / rel.ell_opt, rel);
}

}  // namespace actsens
