#pragma once

// Variance-based global sensitivity over a parameter cuboid: first-order
// (VBS) and total (TSI) index functions of time, estimated by Monte Carlo
// from two independent sample matrices and their column-swapped mixes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "actsens/error.hpp"
#include "actsens/parallel.hpp"

namespace actsens {

struct ParameterBounds {
  std::string name;
  double lower = 0.0;
  double upper = 1.0;
};

/// Cartesian product of per-parameter ranges, sampled uniformly. A range with
/// lower == upper pins the parameter.
struct ParameterCuboid {
  std::vector<ParameterBounds> params;

  std::size_t size() const { return params.size(); }

  void validate() const {
    if (params.empty()) fail(ErrorKind::InvalidBounds, "cuboid has no parameters");
    for (const auto& p : params) {
      if (!std::isfinite(p.lower) || !std::isfinite(p.upper) || p.lower > p.upper)
        fail(ErrorKind::InvalidBounds, "invalid range for parameter " + p.name);
    }
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& p : params) out.push_back(p.name);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Counter-based uniform stream: every (seed, pair, matrix, column, attempt)
// tuple maps to one fixed draw, independent of evaluation order.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline double counter_uniform(std::uint64_t seed, std::uint64_t row, std::uint64_t matrix, std::uint64_t column,
                              std::uint64_t attempt) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ row);
  h = splitmix64(h ^ (matrix << 32 | column));
  h = splitmix64(h ^ attempt);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

using RowPredicate = std::function<bool(std::span<const double>)>;

/// Which of the 2(N+1) sample families a row belongs to.
enum class SampleKind { A, B, AWithB, BWithA };

/// Two base matrices A, B (n x N). For column i, AWithB(i) is A with column i
/// taken from B, and BWithA(i) is B with column i taken from A.
struct SampleMatrices {
  std::size_t n = 0;
  std::size_t N = 0;
  std::uint64_t seed = 0;
  std::vector<double> A;
  std::vector<double> B;
  std::vector<std::uint32_t> attempts;  ///< redraw count per row pair

  std::size_t family_count() const { return 2 * (N + 1); }

  void row(SampleKind kind, std::size_t column, std::size_t j, std::span<double> out) const {
    const double* a = A.data() + j * N;
    const double* b = B.data() + j * N;
    for (std::size_t c = 0; c < N; ++c) {
      switch (kind) {
        case SampleKind::A: out[c] = a[c]; break;
        case SampleKind::B: out[c] = b[c]; break;
        case SampleKind::AWithB: out[c] = c == column ? b[c] : a[c]; break;
        case SampleKind::BWithA: out[c] = c == column ? a[c] : b[c]; break;
      }
    }
  }

  /// Family slot s in [0, 2(N+1)): 0 = A, 1 = B, 2+i = AWithB(i), 2+N+i = BWithA(i).
  void slot_row(std::size_t slot, std::size_t j, std::span<double> out) const {
    if (slot == 0) return row(SampleKind::A, 0, j, out);
    if (slot == 1) return row(SampleKind::B, 0, j, out);
    if (slot < 2 + N) return row(SampleKind::AWithB, slot - 2, j, out);
    row(SampleKind::BWithA, slot - 2 - N, j, out);
  }

  std::vector<double> matrix(SampleKind kind, std::size_t column = 0) const {
    std::vector<double> out(n * N);
    for (std::size_t j = 0; j < n; ++j) row(kind, column, j, std::span<double>(out.data() + j * N, N));
    return out;
  }
};

namespace detail {

inline void draw_pair(SampleMatrices& m, const ParameterCuboid& cuboid, std::size_t j) {
  for (std::size_t c = 0; c < m.N; ++c) {
    const auto& b = cuboid.params[c];
    const double ua = counter_uniform(m.seed, j, 0, c, m.attempts[j]);
    const double ub = counter_uniform(m.seed, j, 1, c, m.attempts[j]);
    m.A[j * m.N + c] = b.lower + (b.upper - b.lower) * ua;
    m.B[j * m.N + c] = b.lower + (b.upper - b.lower) * ub;
  }
}

inline bool pair_valid(const SampleMatrices& m, std::size_t j, const RowPredicate& valid) {
  if (!valid) return true;
  std::vector<double> row(m.N);
  for (std::size_t s = 0; s < m.family_count(); ++s) {
    m.slot_row(s, j, row);
    if (!valid(row)) return false;
  }
  return true;
}

inline constexpr std::uint32_t kMaxRejections = 10000;

}  // namespace detail

/// Redraws row pair j from its next substream until every mixed row passes
/// `valid`.
inline void redraw_pair(SampleMatrices& m, const ParameterCuboid& cuboid, std::size_t j, const RowPredicate& valid) {
  do {
    if (++m.attempts[j] > detail::kMaxRejections)
      fail(ErrorKind::InvalidBounds, "no valid sample found for row " + std::to_string(j));
    detail::draw_pair(m, cuboid, j);
  } while (!detail::pair_valid(m, j, valid));
}

/// Draws A and B uniformly from the cuboid. Row pairs whose mixed rows violate
/// `valid` are redrawn from the pair's own substream, so the result depends
/// only on (cuboid, n, seed).
inline SampleMatrices build_sample_matrices(const ParameterCuboid& cuboid, std::size_t n, std::uint64_t seed,
                                            const RowPredicate& valid = {}) {
  cuboid.validate();
  if (n < 2) fail(ErrorKind::InvalidArgument, "need at least two samples");
  SampleMatrices m;
  m.n = n;
  m.N = cuboid.size();
  m.seed = seed;
  m.A.resize(n * m.N);
  m.B.resize(n * m.N);
  m.attempts.assign(n, 0);
  for (std::size_t j = 0; j < n; ++j) {
    detail::draw_pair(m, cuboid, j);
    if (!detail::pair_valid(m, j, valid)) redraw_pair(m, cuboid, j, valid);
  }
  return m;
}

/// Maps one parameter row to the scalar model output at every grid time.
using FamilyModel = std::function<std::vector<double>(std::span<const double>, std::span<const double>)>;

struct Ensemble {
  std::size_t n = 0;
  std::size_t N = 0;
  std::vector<double> times;
  std::vector<double> values;  ///< [slot][j][t]
  std::size_t evaluations = 0;
  std::size_t failed_pairs = 0;

  std::size_t T() const { return times.size(); }
  double at(std::size_t slot, std::size_t j, std::size_t t) const { return values[(slot * n + j) * times.size() + t]; }
};

/// Evaluates the model on all 2n(N+1) rows. A pair whose integration fails
/// is redrawn and re-evaluated (at most `max_retries` times) rather than
/// zero-filled.
inline Ensemble evaluate_family(const FamilyModel& model, SampleMatrices& m, const ParameterCuboid& cuboid,
                                std::span<const double> grid, const RowPredicate& valid = {},
                                std::size_t max_retries = 8, std::size_t threads = 0) {
  Ensemble e;
  e.n = m.n;
  e.N = m.N;
  e.times.assign(grid.begin(), grid.end());
  const std::size_t T = grid.size(), S = m.family_count();
  e.values.assign(S * m.n * T, 0.0);
  std::vector<unsigned char> failures(m.n, 0);

  parallel_for(
      m.n,
      [&](std::size_t j) {
        std::vector<double> row(m.N);
        for (std::size_t attempt = 0;; ++attempt) {
          try {
            for (std::size_t s = 0; s < S; ++s) {
              m.slot_row(s, j, row);
              const std::vector<double> y = model(row, grid);
              if (y.size() != T) fail(ErrorKind::InvalidArgument, "family model returned wrong length");
              std::copy(y.begin(), y.end(), e.values.begin() + static_cast<std::ptrdiff_t>((s * m.n + j) * T));
            }
            return;
          } catch (const Error&) {
            if (attempt >= max_retries) throw;
            failures[j] = 1;
            redraw_pair(m, cuboid, j, valid);
          }
        }
      },
      threads);

  e.evaluations = S * m.n;
  for (unsigned char f : failures) e.failed_pairs += f;
  return e;
}

inline constexpr double kDefaultVarianceFloor = 1e-12;

struct GlobalResult {
  std::vector<std::string> names;
  std::vector<double> times;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::vector<double> V;        ///< [t]
  std::vector<double> V_i;      ///< [i][t] first-order partial variance
  std::vector<double> V_notI;   ///< [i][t] variance of E[y | all but i]
  std::vector<double> VBS;      ///< [i][t]
  std::vector<double> TSI;      ///< [i][t]
  std::vector<unsigned char> undefined;  ///< [t] V(t) below the floor
  std::size_t failed_pairs = 0;

  std::size_t T() const { return times.size(); }
  double vbs(std::size_t i, std::size_t t) const { return VBS[i * times.size() + t]; }
  double tsi(std::size_t i, std::size_t t) const { return TSI[i * times.size() + t]; }
};

/// VBS_i = V_i / V and TSI_i = 1 - V_~i / V per output time. V is the
/// variance of the whole family; V_i uses the Saltelli (2010) estimator and
/// V - V_~i the Jansen estimator, each averaged over both mixing directions.
inline GlobalResult vbs_tsi(const Ensemble& e, double floor = kDefaultVarianceFloor) {
  const std::size_t T = e.T(), n = e.n, N = e.N, S = 2 * (N + 1);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  GlobalResult r;
  r.times = e.times;
  r.n = n;
  r.failed_pairs = e.failed_pairs;
  r.V.assign(T, 0.0);
  r.V_i.assign(N * T, 0.0);
  r.V_notI.assign(N * T, 0.0);
  r.VBS.assign(N * T, nan);
  r.TSI.assign(N * T, nan);
  r.undefined.assign(T, 0);

  const double count = static_cast<double>(S * n);
  for (std::size_t t = 0; t < T; ++t) {
    double mean = 0.0;
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t j = 0; j < n; ++j) mean += e.at(s, j, t);
    mean /= count;
    double var = 0.0;
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t j = 0; j < n; ++j) {
        const double d = e.at(s, j, t) - mean;
        var += d * d;
      }
    var /= count - 1.0;
    r.V[t] = var;
    const bool undefined = var < floor;
    r.undefined[t] = undefined ? 1 : 0;

    for (std::size_t i = 0; i < N; ++i) {
      double first = 0.0, total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double a = e.at(0, j, t) - mean;
        const double b = e.at(1, j, t) - mean;
        const double ab = e.at(2 + i, j, t) - mean;
        const double ba = e.at(2 + N + i, j, t) - mean;
        first += b * (ab - a) + a * (ba - b);
        total += (a - ab) * (a - ab) + (b - ba) * (b - ba);
      }
      const double vi = first / (2.0 * static_cast<double>(n));
      const double vt = total / (4.0 * static_cast<double>(n));
      r.V_i[i * T + t] = vi;
      r.V_notI[i * T + t] = var - vt;
      if (!undefined) {
        r.VBS[i * T + t] = vi / var;
        r.TSI[i * T + t] = vt / var;
      }
    }
  }
  return r;
}

/// build_sample_matrices + evaluate_family + vbs_tsi.
inline GlobalResult global_sensitivity(const FamilyModel& model, const ParameterCuboid& cuboid,
                                       std::span<const double> grid, std::size_t n, std::uint64_t seed,
                                       const RowPredicate& valid = {}, std::size_t threads = 0) {
  SampleMatrices m = build_sample_matrices(cuboid, n, seed, valid);
  const Ensemble e = evaluate_family(model, m, cuboid, grid, valid, 8, threads);
  GlobalResult r = vbs_tsi(e);
  r.names = cuboid.names();
  r.seed = seed;
  return r;
}

}  // namespace actsens
