#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "actsens/models.hpp"
#include "actsens/ode.hpp"

using namespace actsens;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no actsens::Error thrown";
  return ErrorKind::InvalidArgument;
}

ZajacParams zajac(double sigma, double beta, double q0 = 0.005, double tau = 0.025) {
  ZajacParams p;
  p.sigma = sigma;
  p.beta = beta;
  p.q0 = q0;
  p.tau = tau;
  p.q_init = std::max(q0, 0.05);
  return p;
}

// Zajac rhs as a function of the variable vector (q, sigma, q0, tau, beta).
double zajac_at(const std::array<double, kZajacVars>& v) {
  return zajac_rhs_t(v[kZq], v[kZsigma], v[kZq0], v[kZtau], v[kZbeta]);
}

double hatze_at(const std::array<double, kHatzeVars>& v) {
  return hatze_rhs_t(v[kHq], v[kHsigma], v[kHq0], v[kHm], v[kHrho_c], v[kHnu], v[kHell_rho], v[kHell_ce_rel]);
}

template <std::size_t N, class F>
double fd1(F f, std::array<double, N> v, std::size_t i, double h) {
  auto p = v, m = v;
  p[i] += h;
  m[i] -= h;
  return (f(p) - f(m)) / (2.0 * h);
}

template <std::size_t N, class F>
double fd2(F f, std::array<double, N> v, std::size_t i, std::size_t j, double hi, double hj) {
  auto g = [&](double di, double dj) {
    auto w = v;
    w[i] += di;
    w[j] += dj;
    return f(w);
  };
  return (g(hi, hj) - g(hi, -hj) - g(-hi, hj) + g(-hi, -hj)) / (4.0 * hi * hj);
}

bool close(double a, double b, double rel, double abs = 1e-9) { return std::abs(a - b) <= rel * std::abs(b) + abs; }

}  // namespace

// ---------------------------------------------------------------------------
// Zajac
// ---------------------------------------------------------------------------

TEST(ZajacRhs, BasicActivityLeavesOnlyStimulation) {
  EXPECT_DOUBLE_EQ(zajac_rhs(0.005, zajac(1.0, 1.0)), 40.0);
}

TEST(ZajacRhs, SaturationFixedPoint) { EXPECT_DOUBLE_EQ(zajac_rhs(1.0, zajac(1.0, 1.0, 0.0)), 0.0); }

TEST(ZajacRhs, HandEvaluated) {
  EXPECT_NEAR(zajac_rhs(0.5, zajac(0.4, 1.0 / 3.0)), 4.0603015075376884422, 1e-13);
}

TEST(ZajacPartials, BetaPartialClosedForm) {
  const ZajacParams p = zajac(0.4, 1.0 / 3.0);
  for (double q : {0.005, 0.2, 0.7, 1.0})
    EXPECT_NEAR(zajac_partials(q, p).grad[kZbeta], (q - p.q0) * (p.sigma - 1.0) / (p.tau * (1.0 - p.q0)), 1e-12);
}

TEST(ZajacPartials, FullStimulationRemovesBeta) {
  const ZajacParams p = zajac(1.0, 0.4);
  for (double q : {0.005, 0.3, 0.9}) EXPECT_EQ(zajac_partials(q, p).grad[kZbeta], 0.0);
}

TEST(ZajacPartials, StateDerivativeAtBetaOne) {
  const ZajacParams p = zajac(0.6, 1.0);
  EXPECT_NEAR(zajac_partials(0.4, p).grad[kZq], -1.0 / (p.tau * (1.0 - p.q0)), 1e-10);
}

TEST(ZajacPartials, MatchFiniteDifferences) {
  for (const ZajacParams& p : {zajac(0.4, 1.0 / 3.0), zajac(0.01, 1.0), zajac(0.9, 0.2, 0.03, 0.04)})
    for (double q : {0.01, 0.3, 0.8}) {
      const ZajacPartials d = zajac_partials(q, p);
      const std::array<double, kZajacVars> v{q, p.sigma, p.q0, p.tau, p.beta};
      EXPECT_NEAR(d.f, zajac_at(v), 1e-12);
      for (std::size_t i = 0; i < kZajacVars; ++i) {
        const double hi = 1e-5 * std::max(1.0, std::abs(v[i])) * (i == kZtau ? 0.01 : 1.0);
        EXPECT_TRUE(close(d.grad[i], fd1(zajac_at, v, i, hi), 1e-6, 1e-6)) << i;
        for (std::size_t j = 0; j < kZajacVars; ++j) {
          const double a = 1e-4 * (i == kZtau ? v[kZtau] : 1.0), b = 1e-4 * (j == kZtau ? v[kZtau] : 1.0);
          EXPECT_TRUE(close(d.hess[i][j], fd2(zajac_at, v, i, j, a, b), 1e-4, 1e-4)) << i << "," << j;
          EXPECT_EQ(d.hess[i][j], d.hess[j][i]);
        }
      }
    }
}

TEST(ZajacSteadyState, Examples) {
  EXPECT_DOUBLE_EQ(zajac_steady_state(zajac(1.0, 1.0 / 3.0)), 1.0);
  EXPECT_NEAR(zajac_steady_state(zajac(0.5, 1.0)), 0.5025, 1e-15);
  EXPECT_NEAR(zajac_steady_state(zajac(0.5, 1.0 / 3.0, 0.0)), 0.75, 1e-15);
  EXPECT_EQ(zajac_steady_state(zajac(0.0, 0.5)), 0.005);
}

TEST(ZajacSteadyState, IsRootOfRhs) {
  for (double s : {0.01, 0.1, 0.4, 1.0})
    for (double b : {0.1, 1.0 / 3.0, 1.0}) {
      const ZajacParams p = zajac(s, b);
      EXPECT_NEAR(zajac_rhs(zajac_steady_state(p), p), 0.0, 1e-12);
    }
}

TEST(ZajacParams, Validation) {
  ZajacParams p = zajac(0.5, 1.0);
  EXPECT_NO_THROW(p.validate());
  p.tau = 0.0;
  EXPECT_THROW(p.validate(), Error);
  p = zajac(0.5, 1.0);
  p.q_init = 0.001;
  EXPECT_THROW(p.validate(), Error);
  p = zajac(1.5, 1.0);
  EXPECT_THROW(p.validate(), Error);
}

TEST(ZajacSolution, StaysBetweenStartAndSaturation) {
  for (double q_init : {0.005, 0.5, 1.0}) {
    ZajacParams p = zajac(0.3, 1.0 / 3.0);
    p.q_init = q_init;
    const double q_inf = zajac_steady_state(p);
    const auto grid = linspace(0.0, 0.5, 201);
    const double y0[] = {q_init};
    const auto tr = integrate([&](double, auto y, auto f) { f[0] = zajac_rhs(y[0], p); }, y0, 0.0, 0.5, grid);
    const double lo = std::min(q_init, q_inf), hi = std::max(q_init, q_inf);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      EXPECT_GE(tr.at(i, 0), lo - 1e-12);
      EXPECT_LE(tr.at(i, 0), hi + 1e-12);
    }
  }
}

TEST(ZajacSolution, ReducesToSimplifiedModel) {
  ZajacParams p = zajac(0.8, 1.0, 0.0);
  p.q_init = 0.05;
  const auto grid = linspace(0.0, 0.2, 101);
  const double y0[] = {p.q_init};
  const auto tr = integrate([&](double, auto y, auto f) { f[0] = zajac_rhs(y[0], p); }, y0, 0.0, 0.2, grid);
  for (std::size_t i = 0; i < grid.size(); ++i)
    EXPECT_NEAR(tr.at(i, 0), simplified_zajac_solution(grid[i], p.sigma, p.tau, p.q_init), 1e-8);
}

TEST(ZajacModelSpec, PartialsLayout) {
  const ModelSpec spec = zajac_model();
  ASSERT_EQ(spec.param_names, zajac_param_names());
  ASSERT_TRUE(spec.has_first() && spec.has_second());
  const ZajacParams p = zajac(0.4, 1.0 / 3.0);
  const std::vector<double> params = zajac_param_values(p), y{0.3};
  Partials out;
  out.resize(1, 4, true);
  spec.second(0.0, y, params, out);
  const ZajacPartials d = zajac_partials(0.3, p);
  EXPECT_EQ(out.fy[0], d.grad[kZq]);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(out.fp[i], d.grad[i + 1]);
    EXPECT_EQ(out.fyp[i], d.hess[kZq][i + 1]);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(out.fpp[i * 4 + j], d.hess[i + 1][j + 1]);
  }
  EXPECT_EQ(out.fyy[0], d.hess[kZq][kZq]);
}

// ---------------------------------------------------------------------------
// Simplified Zajac oracle
// ---------------------------------------------------------------------------

TEST(SimplifiedZajac, Solution) {
  EXPECT_EQ(simplified_zajac_solution(0.0, 1.0, 0.025, 0.05), 0.05);
  EXPECT_NEAR(simplified_zajac_solution(0.025, 1.0, 0.025, 0.05), 0.650514530887129794, 1e-15);
  EXPECT_NEAR(simplified_zajac_solution(10.0, 0.7, 0.025, 0.05), 0.7, 1e-15);
  EXPECT_THROW(simplified_zajac_solution(-1.0, 1.0, 0.025, 0.05), Error);
}

TEST(SimplifiedZajac, SensitivitiesAtTau) {
  const auto s = simplified_zajac_sensitivities(0.025, 1.0, 0.025, 0.05);
  EXPECT_NEAR(s.sigma, 0.971723964361737466, 1e-14);
  EXPECT_NEAR(s.q_init, 0.0282760356382625341, 1e-14);
  EXPECT_NEAR(s.tau, -0.95 * std::exp(-1.0) / 0.650514530887129794, 1e-14);
  EXPECT_NEAR(s.tau, -0.53724, 5e-6);
}

TEST(SimplifiedZajac, SensitivitiesAtStart) {
  const auto s = simplified_zajac_sensitivities(0.0, 1.0, 0.025, 0.05);
  EXPECT_EQ(s.sigma, 0.0);
  EXPECT_EQ(s.q_init, 1.0);
  EXPECT_EQ(s.tau, 0.0);
}

TEST(SimplifiedZajac, SigmaAndInitialConditionShareUnity) {
  for (double t : {0.001, 0.01, 0.05, 0.2})
    for (double sigma : {0.1, 1.0}) {
      const auto s = simplified_zajac_sensitivities(t, sigma, 0.025, 0.05);
      EXPECT_NEAR(s.sigma + s.q_init, 1.0, 1e-14);
      if (sigma > 0.05) {
        EXPECT_LT(s.tau, 0.0);
      }
    }
}

TEST(SimplifiedZajac, DegenerateDenominator) {
  EXPECT_EQ(kind_of([] { simplified_zajac_sensitivities(0.1, 0.0, 0.025, 0.0); }), ErrorKind::DegenerateState);
}

// ---------------------------------------------------------------------------
// Hatze
// ---------------------------------------------------------------------------

TEST(HatzeRho, Examples) {
  EXPECT_DOUBLE_EQ(hatze_rho(1.0, 7.24, 2.9), 7.24);
  EXPECT_DOUBLE_EQ(hatze_rho(1.0, 9.10, 2.9), 9.10);
  EXPECT_NEAR(hatze_rho(0.5, 7.24, 2.9), 2.86583333333333339, 1e-14);
}

TEST(HatzeRho, PoleViolation) {
  EXPECT_EQ(kind_of([] { hatze_rho(2.9, 7.24, 2.9); }), ErrorKind::PoleViolation);
  EXPECT_EQ(kind_of([] { hatze_rho(3.5, 7.24, 2.9); }), ErrorKind::PoleViolation);
  EXPECT_EQ(kind_of([] { hatze_rho(0.0, 7.24, 2.9); }), ErrorKind::PoleViolation);
}

TEST(HatzeRho, IncreasesWithLength) {
  double prev = 0.0;
  for (double x = 0.1; x < 2.8; x += 0.1) {
    const double r = hatze_rho(x, 7.24, 2.9);
    EXPECT_GT(r, prev);
    prev = r;
  }
}

TEST(HatzeQOfGamma, Examples) {
  HatzeParams p;
  p.nu = 3.0;
  p.rho_c = 7.24;
  EXPECT_EQ(hatze_q_of_gamma(0.0, 1.0, p), 0.005);
  EXPECT_NEAR(hatze_q_of_gamma(0.1, 1.0, p), 0.278725965670383142, 1e-15);
  EXPECT_NEAR(hatze_q_of_gamma(1.0, 1.0, p), 0.997385043242081312, 1e-15);
  EXPECT_EQ(hatze_q_of_gamma(INFINITY, 1.0, p), 1.0);
  EXPECT_NEAR(hatze_q_of_gamma(1e6, 1.0, p), 1.0, 1e-15);
}

TEST(HatzeQOfGamma, InverseRoundTrip) {
  HatzeParams p;
  for (double x : {0.6, 1.0, 1.4})
    for (double g : {0.0, 0.01, 0.2, 0.9}) {
      const double q = hatze_q_of_gamma(g, x, p);
      EXPECT_NEAR(hatze_gamma_of_q(q, x, p), g, 1e-12);
    }
  EXPECT_EQ(kind_of([&] { hatze_gamma_of_q(1.0, 1.0, p); }), ErrorKind::DomainViolation);
}

TEST(HatzeRhs, HandEvaluated) {
  HatzeParams p;
  p.sigma = 0.1;
  p.nu = 2.0;
  p.rho_c = 9.10;
  p.m = 10.0;
  EXPECT_NEAR(hatze_rhs(0.1, p), 3.09504999099409534, 1e-13);
}

TEST(HatzeRhs, DecayHaltsAtBasicActivity) {
  HatzeParams p;
  p.sigma = 0.0;
  const double a = hatze_rhs(p.q0 + 1e-6, p);
  EXPECT_LT(a, 0.0);
  EXPECT_GT(a, -1e-3);
  EXPECT_LE(std::abs(hatze_rhs(p.q0, p)), 1e-9);
}

TEST(HatzeRhs, SteadyStateIsRoot) {
  for (double nu : {2.0, 3.0})
    for (double s : {0.01, 0.1, 0.5, 1.0})
      for (double x : {0.7, 1.0, 1.3}) {
        HatzeParams p;
        p.nu = nu;
        p.sigma = s;
        p.ell_ce_rel = x;
        EXPECT_LT(std::abs(hatze_rhs(hatze_steady_state(p), p)), 1e-10) << nu << " " << s << " " << x;
      }
}

TEST(HatzeRhs, DomainAndPoleErrors) {
  HatzeParams p;
  EXPECT_EQ(kind_of([&] { hatze_rhs(p.q0 - 1e-3, p); }), ErrorKind::DomainViolation);
  EXPECT_EQ(kind_of([&] { hatze_rhs(1.01, p); }), ErrorKind::DomainViolation);
  EXPECT_EQ(kind_of([&] { hatze_rhs(NAN, p); }), ErrorKind::DomainViolation);
  p.ell_ce_rel = 3.0;
  EXPECT_EQ(kind_of([&] { hatze_rhs(0.5, p); }), ErrorKind::PoleViolation);
}

TEST(HatzeSteadyState, Examples) {
  HatzeParams p;
  p.sigma = 0.0;
  EXPECT_EQ(hatze_steady_state(p), p.q0);
  p.sigma = 0.1;
  p.nu = 3.0;
  p.rho_c = 7.24;
  EXPECT_NEAR(hatze_steady_state(p), 0.278725965670383142, 1e-15);
}

TEST(HatzePartials, SigmaPartialClosedForm) {
  HatzeParams p;
  p.sigma = 0.3;
  const double q = 0.4;
  const double expect = p.nu * p.m / (1.0 - p.q0) * p.rho_c * std::pow(1.0 - q, 1.0 + 1.0 / p.nu) *
                        std::pow(q - p.q0, 1.0 - 1.0 / p.nu);
  EXPECT_NEAR(hatze_partials(q, p).grad[kHsigma], expect, 1e-12 * expect);
  EXPECT_GT(expect, 0.0);
}

TEST(HatzePartials, RhoCAndSigmaScaleAlike) {
  HatzeParams p;
  p.sigma = 0.3;
  for (double q : {0.01, 0.2, 0.8}) {
    const HatzePartials d = hatze_partials(q, p);
    EXPECT_NEAR(d.grad[kHrho_c] * p.rho_c, d.grad[kHsigma] * p.sigma, 1e-12 * std::abs(d.grad[kHsigma]));
  }
}

TEST(HatzePartials, MatchFiniteDifferences) {
  std::vector<HatzeParams> sets(3);
  sets[0].sigma = 0.3;
  sets[1].sigma = 0.05, sets[1].nu = 2.0, sets[1].rho_c = 9.10, sets[1].ell_ce_rel = 0.7;
  sets[2].sigma = 0.9, sets[2].nu = 3.7, sets[2].rho_c = 5.0, sets[2].ell_rho = 3.3, sets[2].ell_ce_rel = 1.4;
  for (const HatzeParams& p : sets)
    for (double q : {0.02, 0.3, 0.9}) {
      const HatzePartials d = hatze_partials(q, p);
      const std::array<double, kHatzeVars> v{q, p.sigma, p.q0, p.m, p.rho_c, p.nu, p.ell_rho, p.ell_ce_rel};
      EXPECT_NEAR(d.f, hatze_at(v), 1e-12 * std::max(1.0, std::abs(d.f)));
      for (std::size_t i = 0; i < kHatzeVars; ++i) {
        const double hi = 1e-5 * std::max(1e-3, std::abs(v[i]));
        EXPECT_TRUE(close(d.grad[i], fd1(hatze_at, v, i, hi), 1e-5, 1e-6)) << "d/d" << i << " at q=" << q;
        for (std::size_t j = 0; j < kHatzeVars; ++j) {
          const double a = 1e-4 * std::max(1e-2, std::abs(v[i])), b = 1e-4 * std::max(1e-2, std::abs(v[j]));
          EXPECT_TRUE(close(d.hess[i][j], fd2(hatze_at, v, i, j, a, b), 1e-4, 1e-4 * std::max(1.0, std::abs(d.f))))
              << "d2/d" << i << "d" << j << " at q=" << q;
        }
      }
    }
}

TEST(HatzePaths, GammaAndActivityFormsAgree) {
  for (double nu : {2.0, 3.0})
    for (double s : {0.05, 0.3, 1.0}) {
      HatzeParams p;
      p.nu = nu;
      p.rho_c = nu == 2.0 ? 9.10 : 7.24;
      p.sigma = s;
      p.q_init = 0.05;
      const auto grid = linspace(0.0, 0.5, 101);
      const double g0[] = {hatze_gamma_of_q(p.q_init, p.ell_ce_rel, p)};
      const double q0[] = {p.q_init};
      const auto gamma = integrate([&](double, auto y, auto f) { f[0] = p.m * (p.sigma - y[0]); }, g0, 0.0, 0.5, grid);
      const auto q = integrate([&](double, auto y, auto f) { f[0] = hatze_rhs(y[0], p); }, q0, 0.0, 0.5, grid);
      for (std::size_t i = 0; i < grid.size(); ++i)
        EXPECT_NEAR(q.at(i, 0), hatze_q_of_gamma(gamma.at(i, 0), p.ell_ce_rel, p), 1e-6);
    }
}

TEST(HatzeSolution, StaysInsideOpenUnitInterval) {
  for (double s : {0.0, 0.01, 1.0})
    for (double q_init : {0.006, 0.5, 0.99}) {
      HatzeParams p;
      p.sigma = s;
      p.q_init = q_init;
      const auto grid = linspace(0.0, 1.0, 201);
      const double y0[] = {q_init};
      const auto tr = integrate([&](double, auto y, auto f) { f[0] = hatze_rhs(std::clamp(y[0], p.q0, 1.0), p); }, y0,
                                0.0, 1.0, grid);
      for (std::size_t i = 0; i < grid.size(); ++i) {
        // Without stimulation the decay towards q0 is exponential and ends
        // within the absolute tolerance of q0.
        if (s > 0.0)
          EXPECT_GT(tr.at(i, 0), p.q0);
        else
          EXPECT_GE(tr.at(i, 0), p.q0 - 1e-10);
        EXPECT_LT(tr.at(i, 0), 1.0);
      }
    }
}

TEST(HatzeParams, Validation) {
  HatzeParams p;
  EXPECT_NO_THROW(p.validate());
  p.nu = 1.0;
  EXPECT_THROW(p.validate(), Error);
  p = {};
  p.q_init = 1.0;
  EXPECT_THROW(p.validate(), Error);
  p = {};
  p.ell_ce_rel = 2.9;
  EXPECT_EQ(kind_of([&] { p.validate(); }), ErrorKind::PoleViolation);
}

TEST(HatzeModelSpec, MatchesPartials) {
  const ModelSpec spec = hatze_model();
  ASSERT_EQ(spec.param_names, hatze_param_names());
  HatzeParams p;
  p.sigma = 0.4;
  const std::vector<double> params = hatze_param_values(p), y{0.3};
  Partials out;
  out.resize(1, 7, true);
  spec.second(0.0, y, params, out);
  const HatzePartials d = hatze_partials(0.3, p);
  EXPECT_DOUBLE_EQ(out.f[0], d.f);
  EXPECT_DOUBLE_EQ(out.fy[0], d.grad[kHq]);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_DOUBLE_EQ(out.fp[i], d.grad[i + 1]);
}

// ---------------------------------------------------------------------------
// Force-length relations
// ---------------------------------------------------------------------------

TEST(ForceLength, Examples) {
  ForceLengthRelation bell;
  ForceLengthRelation par;
  par.kind = ForceLengthKind::Parabola;
  par.width = 0.56;
  EXPECT_EQ(force_length_rel(1.0, bell), 1.0);
  EXPECT_EQ(force_length_rel(1.0, par), 1.0);
  EXPECT_NEAR(force_length_rel(1.56, par), 0.0, 1e-15);
  EXPECT_EQ(force_length_rel(1.8, par), 0.0);
  EXPECT_NEAR(force_length_rel(0.68, bell), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(force_length_rel(1.32, bell), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(force_length(14.8 * 0.68, bell), std::exp(-1.0), 1e-15);
}

TEST(ForceLength, BellUsesDistinctLimbExponents) {
  ForceLengthRelation bell;
  const double d = 0.16;  // half a width
  EXPECT_NEAR(force_length_rel(1.0 - d, bell), std::exp(-std::pow(0.5, 3.0)), 1e-15);
  EXPECT_NEAR(force_length_rel(1.0 + d, bell), std::exp(-std::pow(0.5, 1.5)), 1e-15);
}

TEST(ForceLength, RangeAndSlope) {
  for (ForceLengthKind kind : {ForceLengthKind::Bell, ForceLengthKind::Parabola}) {
    ForceLengthRelation r;
    r.kind = kind;
    r.width = kind == ForceLengthKind::Bell ? 0.32 : 0.56;
    for (double x = 0.3; x < 1.7; x += 0.0137) {
      const double v = force_length_rel(x, r);
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
      const double h = 1e-6;
      if (kind == ForceLengthKind::Parabola && std::abs(std::abs(x - 1.0) - r.width) < 2e-6) continue;
      const double fd = (force_length_rel(x + h, r) - force_length_rel(x - h, r)) / (2.0 * h);
      EXPECT_NEAR(force_length_rel_slope(x, r), fd, 1e-6 * std::max(1.0, std::abs(fd))) << x;
    }
  }
}

TEST(ForceLength, Validation) {
  ForceLengthRelation r;
  r.width = 0.0;
  EXPECT_THROW(r.validate(), Error);
  r = {};
  r.ell_opt = -1.0;
  EXPECT_THROW(r.validate(), Error);
}
