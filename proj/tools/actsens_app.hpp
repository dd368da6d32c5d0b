#pragma once

// Command-line front end. `run` is the whole program minus process setup so
// the tests can drive it directly.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "actsens/error.hpp"
#include "actsens/global_sens.hpp"
#include "actsens/local_sens.hpp"
#include "actsens/models.hpp"
#include "actsens/optimize.hpp"
#include "actsens/presets.hpp"

namespace actsens::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

inline constexpr std::string_view kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Formatting
// ---------------------------------------------------------------------------

/// Shortest representation that reads back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view key, std::string_view text) {
  // Plain number or a ratio such as 1/3.
  const auto slash = text.find('/');
  auto one = [&](std::string_view s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
      fail(ErrorKind::ConfigError, "'" + std::string(key) + "' expects a number, got '" + std::string(text) + "'");
    return v;
  };
  if (slash == std::string_view::npos) return one(text);
  const double den = one(text.substr(slash + 1));
  if (den == 0.0) fail(ErrorKind::ConfigError, "'" + std::string(key) + "' divides by zero");
  return one(text.substr(0, slash)) / den;
}

inline std::uint64_t parse_unsigned(std::string_view key, std::string_view text) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size())
    fail(ErrorKind::ConfigError, "'" + std::string(key) + "' expects a non-negative integer, got '" + std::string(text) + "'");
  return v;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "1" || text == "true" || text == "yes" || text == "on") return true;
  if (text == "0" || text == "false" || text == "no" || text == "off") return false;
  fail(ErrorKind::ConfigError, "'" + std::string(key) + "' expects true/false, got '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "command", "model",   "scenario", "beta",     "nu",          "preset",      "n",         "seed",
      "t_end",   "points",  "out",      "plot",     "targets",     "synthesize",  "threads",   "rel_tol",
      "abs_tol", "second_order", "sigma", "q0",    "tau",         "q_init",      "m",         "rho_c",
      "ell_rho", "ell_ce_rel", "rho0_start", "ell_opt", "synth_width", "synth_rho0", "synth_nu", "synth_kind"};
  return keys;
}

inline bool is_bounds_key(const std::string& key) { return key.rfind("bounds.", 0) == 0; }

/// Fully resolved run configuration: defaults, then the config file, then
/// command-line values.
struct RunConfig {
  std::map<std::string, std::string> values;

  bool has(const std::string& k) const { return values.count(k) != 0; }
  const std::string& str(const std::string& k) const {
    const auto it = values.find(k);
    if (it == values.end()) fail(ErrorKind::ConfigError, "missing required key '" + k + "'");
    return it->second;
  }
  double num(const std::string& k) const { return parse_double(k, str(k)); }
  std::uint64_t uint(const std::string& k) const { return parse_unsigned(k, str(k)); }
  bool flag(const std::string& k) const { return has(k) && parse_bool(k, str(k)); }

  void set(const std::string& key, const std::string& value) {
    if (!known_keys().count(key) && !is_bounds_key(key)) fail(ErrorKind::ConfigError, "unknown key '" + key + "'");
    values[key] = value;
  }
};

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

/// Splits `key=value`; '#' starts a comment in config files.
inline std::pair<std::string, std::string> split_assignment(std::string_view text, std::string_view origin) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos)
    fail(ErrorKind::ConfigError, std::string(origin) + ": expected key=value, got '" + std::string(text) + "'");
  std::string key = trim(text.substr(0, eq)), value = trim(text.substr(eq + 1));
  if (key.empty()) fail(ErrorKind::ConfigError, std::string(origin) + ": empty key");
  return {key, value};
}

inline void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::ConfigError, "cannot read config file " + path);
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto [k, v] = split_assignment(line, path + ":" + std::to_string(n));
    cfg.set(k, v);
  }
}

inline void apply_defaults(RunConfig& cfg) {
  const std::string& cmd = cfg.str("command");
  auto def = [&](const std::string& k, const std::string& v) {
    if (!cfg.has(k)) cfg.values[k] = v;
  };
  def("out", "actsens-out");
  def("plot", "false");
  def("threads", "0");
  def("rel_tol", format_double(Tolerances{}.rel_tol));
  def("abs_tol", format_double(Tolerances{}.abs_tol));
  if (cmd == "simulate" || cmd == "local-sens") {
    def("model", "zajac");
    const std::string& model = cfg.str("model");
    if (model != "simplified-zajac") def("scenario", "ii");
    if (model == "zajac") def("beta", "1");
    if (model == "hatze") def("nu", "3");
    def("t_end", model == "simplified-zajac" ? "0.2" : "0.5");
    def("points", "501");
    if (cmd == "local-sens") def("second_order", "true");
  } else if (cmd == "global-sens") {
    def("model", "zajac");
    def("preset", "paper-bounds");
    def("n", "2048");
    def("seed", "1");
    def("t_end", "0.5");
    def("points", "101");
  } else if (cmd == "optimize") {
    def("rho0_start", "60000");
    def("ell_opt", "14.8");
    def("synthesize", "false");
    def("synth_width", "0.32");
    def("synth_rho0", "32500");
    def("synth_nu", "3");
    def("synth_kind", "bell");
  } else if (cmd == "analytic") {
    const AnalyticPreset a;
    def("sigma", format_double(a.sigma));
    def("tau", format_double(a.tau));
    def("q_init", format_double(a.q_init));
    def("t_end", format_double(a.t_end));
    def("points", "401");
  }
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

struct Table {
  std::vector<std::string> header;  ///< first entry is t_seconds
  std::vector<double> times;
  std::vector<std::vector<double>> columns;
};

inline void write_csv(const std::filesystem::path& path, const Table& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  for (std::size_t c = 0; c < t.header.size(); ++c) out << (c ? "," : "") << t.header[c];
  out << '\n';
  for (std::size_t r = 0; r < t.times.size(); ++r) {
    out << format_double(t.times[r]);
    for (const auto& col : t.columns) out << ',' << format_double(col[r]);
    out << '\n';
  }
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

/// Minimal static SVG line chart of every column against time.
inline void write_svg(const std::filesystem::path& path, const Table& t, const std::string& title) {
  constexpr double W = 720, H = 440, L = 70, R = 170, T = 40, B = 50;
  double ymin = INFINITY, ymax = -INFINITY;
  for (const auto& col : t.columns)
    for (double v : col)
      if (std::isfinite(v)) {
        ymin = std::min(ymin, v);
        ymax = std::max(ymax, v);
      }
  if (!std::isfinite(ymin)) ymin = 0.0, ymax = 1.0;
  if (ymax - ymin < 1e-12) ymin -= 0.5, ymax += 0.5;
  const double t0 = t.times.front(), t1 = t.times.back() > t0 ? t.times.back() : t0 + 1.0;
  auto px = [&](double x) { return L + (x - t0) / (t1 - t0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << L << "\" y=\"24\" font-size=\"15\">" << title << "</text>\n";
  out << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double x = t0 + (t1 - t0) * k / 4.0, y = ymin + (ymax - ymin) * k / 4.0;
    out << "<text x=\"" << px(x) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << format_double(std::round(x * 1e4) / 1e4) << "</text>\n";
    out << "<text x=\"" << L - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">" << format_double(std::round(y * 1e4) / 1e4) << "</text>\n";
  }
  out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">t [s]</text>\n";
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    const char* color = colors[c % std::size(colors)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t r = 0; r < t.times.size(); ++r)
      if (std::isfinite(t.columns[c][r])) out << px(t.times[r]) << ',' << py(t.columns[c][r]) << ' ';
    out << "\"/>\n";
    const double ly = T + 14 + 16.0 * static_cast<double>(c);
    out << "<line x1=\"" << W - R + 12 << "\" y1=\"" << ly - 4 << "\" x2=\"" << W - R + 32 << "\" y2=\"" << ly - 4
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << W - R + 38 << "\" y=\"" << ly << "\">" << t.header[c + 1] << "</text>\n";
  }
  out << "</svg>\n";
}

struct Artifacts {
  std::filesystem::path dir;
  bool plot = false;
  std::vector<std::string> files;

  void table(const std::string& stem, const Table& t, const std::string& title) {
    write_csv(dir / (stem + ".csv"), t);
    files.push_back(stem + ".csv");
    if (plot) {
      write_svg(dir / (stem + ".svg"), t, title);
      files.push_back(stem + ".svg");
    }
  }
};

inline void write_manifest(const Artifacts& a, const RunConfig& cfg, const std::vector<std::pair<std::string, std::string>>& extra) {
  std::ofstream out(a.dir / "manifest.txt", std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write manifest");
  out << "tool = actsens " << kVersion << '\n';
  for (const auto& [k, v] : cfg.values) out << k << " = " << v << '\n';
  for (const auto& [k, v] : extra) out << k << " = " << v << '\n';
  std::string joined;
  for (const auto& f : a.files) joined += (joined.empty() ? "" : ",") + f;
  out << "outputs = " << joined << '\n';
}

// ---------------------------------------------------------------------------
// Model resolution
// ---------------------------------------------------------------------------

struct LocalSetup {
  ModelSpec model;
  std::vector<double> params;
  std::vector<double> y0;
  std::vector<std::string> canonical;  ///< initial condition first, then parameters
};

inline void override_param(const RunConfig& cfg, const char* key, double& slot) {
  if (cfg.has(key)) slot = cfg.num(key);
}

inline LocalSetup resolve_local(const RunConfig& cfg) {
  const std::string& model = cfg.str("model");
  LocalSetup s;
  if (model == "zajac") {
    ZajacParams p = zajac_scenario(cfg.str("scenario"), cfg.num("beta"));
    override_param(cfg, "sigma", p.sigma);
    override_param(cfg, "q0", p.q0);
    override_param(cfg, "tau", p.tau);
    override_param(cfg, "q_init", p.q_init);
    p.validate();
    s.model = zajac_model();
    s.params = zajac_param_values(p);
    s.y0 = {p.q_init};
    s.canonical = {"q_Z0", "sigma", "q0", "tau", "beta"};
  } else if (model == "hatze") {
    const double nu = cfg.num("nu");
    HatzeParams p = hatze_scenario(cfg.str("scenario"), nu == 2.0 || nu == 3.0 ? nu : 3.0);
    p.nu = nu;
    if (!cfg.has("rho_c") && nu != 2.0 && nu != 3.0) hatze_rho_c_for_nu(nu);  // reports the missing pairing
    override_param(cfg, "sigma", p.sigma);
    override_param(cfg, "q0", p.q0);
    override_param(cfg, "m", p.m);
    override_param(cfg, "rho_c", p.rho_c);
    override_param(cfg, "ell_rho", p.ell_rho);
    override_param(cfg, "ell_ce_rel", p.ell_ce_rel);
    override_param(cfg, "q_init", p.q_init);
    p.validate();
    s.model = hatze_model();
    s.params = hatze_param_values(p);
    s.y0 = {p.q_init};
    s.canonical = {"q_H0", "sigma", "q0", "m", "rho_c", "nu", "ell_rho", "ell_ce_rel"};
  } else if (model == "simplified-zajac") {
    AnalyticPreset a;
    override_param(cfg, "sigma", a.sigma);
    override_param(cfg, "tau", a.tau);
    override_param(cfg, "q_init", a.q_init);
    if (!(a.tau > 0.0)) fail(ErrorKind::ConfigError, "tau must be positive");
    s.model = simplified_zajac_model();
    s.params = {a.sigma, a.tau};
    s.y0 = {a.q_init};
    s.canonical = {"q_Z0", "sigma", "tau"};
  } else if (model == "custom") {
    fail(ErrorKind::ConfigError, "custom models are available through the C++ API, not the command line");
  } else {
    fail(ErrorKind::ConfigError, "unknown model '" + model + "' (zajac, hatze, simplified-zajac)");
  }
  return s;
}

inline std::vector<double> resolve_grid(const RunConfig& cfg) {
  const double t_end = cfg.num("t_end");
  const std::uint64_t points = cfg.uint("points");
  if (!(t_end > 0.0)) fail(ErrorKind::ConfigError, "t_end must be positive");
  if (points < 2) fail(ErrorKind::ConfigError, "points must be at least 2");
  return linspace(0.0, t_end, points);
}

inline Tolerances resolve_tolerances(const RunConfig& cfg) {
  Tolerances tol;
  tol.rel_tol = cfg.num("rel_tol");
  tol.abs_tol = cfg.num("abs_tol");
  try {
    tol.validate();
  } catch (const Error& e) {
    fail(ErrorKind::ConfigError, e.detail());
  }
  return tol;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline void cmd_simulate(const RunConfig& cfg, Artifacts& a) {
  const LocalSetup s = resolve_local(cfg);
  const std::vector<double> grid = resolve_grid(cfg);
  auto rhs = [&](double t, std::span<const double> y, std::span<double> f) { s.model.rhs(t, y, s.params, f); };
  const Trajectory tr = integrate(rhs, s.y0, grid.front(), grid.back(), grid, resolve_tolerances(cfg));
  a.table("state", {{"t_seconds", "q"}, tr.times, {tr.component(0)}}, cfg.str("model") + " activity");
  write_manifest(a, cfg, {{"accepted_steps", std::to_string(tr.accepted_steps)}});
}

inline void cmd_local_sens(const RunConfig& cfg, Artifacts& a) {
  const LocalSetup s = resolve_local(cfg);
  const std::vector<double> grid = resolve_grid(cfg);
  SensitivityOptions opts;
  opts.tol = resolve_tolerances(cfg);
  const bool second = cfg.flag("second_order");
  const SensitivityResult r = second ? second_order(s.model, s.params, s.y0, grid, opts)
                                     : first_order(s.model, s.params, s.y0, grid, opts);
  const std::size_t T = r.times.size(), N = r.N;

  a.table("state", {{"t_seconds", "q"}, r.times, {std::vector<double>(r.state.begin(), r.state.end())}},
          cfg.str("model") + " activity");

  Table rel{{"t_seconds"}, r.times, {}};
  Table raw{{"t_seconds"}, r.times, {}};
  rel.header.push_back(s.canonical[0]);
  raw.header.push_back(s.canonical[0]);
  rel.columns.emplace_back(T);
  raw.columns.emplace_back(T);
  for (std::size_t t = 0; t < T; ++t) {
    rel.columns[0][t] = r.s_init_rel(t, 0, 0);
    raw.columns[0][t] = r.s_init(t, 0, 0);
  }
  for (std::size_t i = 0; i < N; ++i) {
    rel.header.push_back(s.canonical[i + 1]);
    raw.header.push_back(s.canonical[i + 1]);
    std::vector<double> cr(T), cw(T);
    for (std::size_t t = 0; t < T; ++t) {
      cr[t] = r.s_rel(t, i, 0);
      cw[t] = r.s(t, i, 0);
    }
    rel.columns.push_back(std::move(cr));
    raw.columns.push_back(std::move(cw));
  }
  a.table("sensitivity_rel", rel, "relative first-order sensitivities");
  a.table("sensitivity_raw", raw, "first-order sensitivities");

  std::size_t undefined = 0;
  for (unsigned char f : r.normalization_undefined) undefined += f;
  if (second) {
    Table r2{{"t_seconds"}, r.times, {}};
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = i; j < N; ++j) {
        r2.header.push_back(s.canonical[i + 1] + "*" + s.canonical[j + 1]);
        std::vector<double> c(T);
        for (std::size_t t = 0; t < T; ++t) c[t] = r.r_rel(t, i, j, 0);
        r2.columns.push_back(std::move(c));
      }
    a.table("second_order_rel", r2, "relative second-order sensitivities");
  }
  write_manifest(a, cfg,
                 {{"normalization_undefined_points", std::to_string(undefined)},
                  {"second_order_approximate", r.second_order_approximate ? "true" : "false"}});
}

inline void cmd_global_sens(const RunConfig& cfg, Artifacts& a) {
  if (cfg.str("preset") != "paper-bounds") fail(ErrorKind::ConfigError, "unknown preset '" + cfg.str("preset") + "'");
  const std::string& model = cfg.str("model");
  ParameterCuboid cuboid;
  FamilyModel family;
  RowPredicate valid;
  const Tolerances tol = resolve_tolerances(cfg);
  if (model == "zajac") {
    cuboid = zajac_default_bounds();
    family = zajac_family(tol);
    valid = zajac_row_valid;
  } else if (model == "hatze") {
    cuboid = hatze_default_bounds();
    family = hatze_family(tol);
    valid = hatze_row_valid;
  } else {
    fail(ErrorKind::ConfigError, "global-sens supports the zajac and hatze models");
  }
  for (const auto& [key, value] : cfg.values) {
    if (!is_bounds_key(key)) continue;
    const std::string name = key.substr(7);
    auto it = std::find_if(cuboid.params.begin(), cuboid.params.end(), [&](const auto& b) { return b.name == name; });
    if (it == cuboid.params.end()) fail(ErrorKind::ConfigError, "unknown parameter in '" + key + "'");
    const auto comma = value.find(',');
    if (comma == std::string::npos) fail(ErrorKind::ConfigError, "'" + key + "' expects lower,upper");
    it->lower = parse_double(key, trim(std::string_view(value).substr(0, comma)));
    it->upper = parse_double(key, trim(std::string_view(value).substr(comma + 1)));
  }
  const std::uint64_t n = cfg.uint("n"), seed = cfg.uint("seed");
  const std::vector<double> grid = resolve_grid(cfg);
  const GlobalResult r = global_sensitivity(family, cuboid, grid, n, seed, valid, cfg.uint("threads"));

  const std::size_t T = r.T();
  Table vbs{{"t_seconds"}, r.times, {}}, tsi{{"t_seconds"}, r.times, {}};
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    vbs.header.push_back(r.names[i]);
    tsi.header.push_back(r.names[i]);
    vbs.columns.emplace_back(r.VBS.begin() + static_cast<std::ptrdiff_t>(i * T),
                             r.VBS.begin() + static_cast<std::ptrdiff_t>((i + 1) * T));
    tsi.columns.emplace_back(r.TSI.begin() + static_cast<std::ptrdiff_t>(i * T),
                             r.TSI.begin() + static_cast<std::ptrdiff_t>((i + 1) * T));
  }
  a.table("vbs", vbs, model + " VBS");
  a.table("tsi", tsi, model + " TSI");
  a.table("variance", {{"t_seconds", "V"}, r.times, {r.V}}, model + " output variance");

  std::size_t undefined = 0;
  for (unsigned char f : r.undefined) undefined += f;
  std::string bounds;
  for (const auto& b : cuboid.params)
    bounds += (bounds.empty() ? "" : ";") + b.name + ":" + format_double(b.lower) + "," + format_double(b.upper);
  write_manifest(a, cfg,
                 {{"bounds", bounds},
                  {"evaluations", std::to_string(2 * n * (cuboid.size() + 1))},
                  {"failed_pairs", std::to_string(r.failed_pairs)},
                  {"undefined_times", std::to_string(undefined)}});
}

inline ForceLengthKind parse_kind(const std::string& s) {
  if (s == "bell") return ForceLengthKind::Bell;
  if (s == "parabola") return ForceLengthKind::Parabola;
  fail(ErrorKind::ConfigError, "unknown force-length kind '" + s + "' (bell, parabola)");
}

inline void cmd_optimize(const RunConfig& cfg, Artifacts& a) {
  const double ell_opt = cfg.num("ell_opt"), rho0_start = cfg.num("rho0_start");
  ShiftTargets targets;
  if (cfg.flag("synthesize")) {
    targets = synthesize_targets(cfg.num("synth_width"), cfg.num("synth_rho0"), cfg.num("synth_nu"),
                                 parse_kind(cfg.str("synth_kind")), {kShiftLevels.begin(), kShiftLevels.end()}, ell_opt);
  } else {
    if (!cfg.has("targets")) fail(ErrorKind::ConfigError, "optimize needs --targets FILE (or --synthesize)");
    try {
      targets = read_targets_csv(cfg.str("targets"));
    } catch (const Error& e) {
      fail(ErrorKind::ConfigError, e.detail());
    }
  }
  write_targets_csv(targets, (a.dir / "targets_used.csv").string());
  a.files.push_back("targets_used.csv");

  const std::vector<TableCell> cells = run_table(targets, rho0_start, ell_opt, cfg.uint("threads"));
  std::ofstream out(a.dir / "fit_table.csv", std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write fit_table.csv");
  out << "start_row,nu,bell_width_start,bell_width,bell_rho0_1e4,bell_error_mm,bell_status,"
         "parabola_width_start,parabola_width,parabola_rho0_1e4,parabola_error_mm,parabola_status\n";
  std::size_t failures = 0;
  for (std::size_t c = 0; c < cells.size(); c += 2) {
    const TableCell& bell = cells[c];
    const TableCell& par = cells[c + 1];
    out << bell.start_row + 1 << ',' << format_double(bell.nu);
    for (const TableCell* cell : {&bell, &par}) {
      const FitResult& f = cell->result;
      failures += f.ok ? 0 : 1;
      out << ',' << format_double(cell->width_start);
      if (f.ok)
        out << ',' << format_double(f.width) << ',' << format_double(f.rho0 / 1e4) << ',' << format_double(f.error) << ",ok";
      else
        out << ",nan,nan,nan,\"" << f.failure << '"';
    }
    out << '\n';
  }
  out.close();
  a.files.push_back("fit_table.csv");
  write_manifest(a, cfg, {{"targets_source", targets.source}, {"failed_cells", std::to_string(failures)}});
}

inline void cmd_analytic(const RunConfig& cfg, Artifacts& a) {
  const double sigma = cfg.num("sigma"), tau = cfg.num("tau"), q_init = cfg.num("q_init");
  if (!(tau > 0.0)) fail(ErrorKind::ConfigError, "tau must be positive");
  const std::vector<double> grid = resolve_grid(cfg);
  Table t{{"t_seconds", "sigma", "tau", "q_Z0"}, grid, {{}, {}, {}}};
  Table q{{"t_seconds", "q"}, grid, {{}}};
  for (double x : grid) {
    const auto s = simplified_zajac_sensitivities(x, sigma, tau, q_init);
    t.columns[0].push_back(s.sigma);
    t.columns[1].push_back(s.tau);
    t.columns[2].push_back(s.q_init);
    q.columns[0].push_back(simplified_zajac_solution(x, sigma, tau, q_init));
  }
  a.table("analytic_sensitivity_rel", t, "simplified Zajac relative sensitivities");
  a.table("analytic_state", q, "simplified Zajac activity");
  write_manifest(a, cfg, {});
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::ConfigError:
    case ErrorKind::InvalidArgument:
    case ErrorKind::InvalidBounds:
    case ErrorKind::PoleViolation:
    case ErrorKind::IoError:
      return kExitConfig;
    default:
      return kExitNumerical;
  }
}

inline void report_error(std::ostream& err, const std::optional<std::filesystem::path>& dir, std::string_view kind,
                         std::string_view message, int code) {
  const nlohmann::json record{{"error", kind}, {"message", message}, {"exit_code", code}};
  err << record.dump() << '\n';
  if (dir) {
    std::error_code ec;
    std::filesystem::create_directories(*dir, ec);
    std::ofstream f(*dir / "error.json");
    if (f) f << record.dump(2) << '\n';
  }
}

/// Runs one command. Returns the process exit status.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Local and global sensitivity analysis of muscle activation dynamics", "actsens"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> assignments;
  std::map<std::string, std::string> flags;
  bool plot = false, synthesize = false, first_only = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "flat key=value config file");
    sub->add_option("--set", assignments, "key=value override (repeatable)");
    sub->add_option("--out", flags["out"], "output directory");
    sub->add_option("--threads", flags["threads"], "worker threads (0 = all cores)");
    sub->add_option("--rel-tol", flags["rel_tol"], "integrator relative tolerance");
    sub->add_option("--abs-tol", flags["abs_tol"], "integrator absolute tolerance");
    sub->add_flag("--plot", plot, "also write SVG plots");
  };
  auto add_model = [&](CLI::App* sub) {
    sub->add_option("--model", flags["model"], "zajac | hatze | simplified-zajac");
    sub->add_option("--scenario", flags["scenario"], "scenario preset i, ii, iii or iv");
    sub->add_option("--beta", flags["beta"], "Zajac deactivation boost (1 or 1/3 for the presets)");
    sub->add_option("--nu", flags["nu"], "Hatze exponent (2 or 3 select the paired rho_c)");
    sub->add_option("--t-end", flags["t_end"], "end time in seconds");
    sub->add_option("--points", flags["points"], "number of output times");
  };

  CLI::App* simulate = app.add_subcommand("simulate", "integrate an activation model");
  add_common(simulate);
  add_model(simulate);
  CLI::App* local = app.add_subcommand("local-sens", "first- and second-order local sensitivities");
  add_common(local);
  add_model(local);
  local->add_flag("--first-order-only", first_only, "skip second-order sensitivities");
  CLI::App* global = app.add_subcommand("global-sens", "variance-based global sensitivities (VBS, TSI)");
  add_common(global);
  global->add_option("--model", flags["model"], "zajac | hatze");
  global->add_option("--preset", flags["preset"], "parameter bounds preset (paper-bounds)");
  global->add_option("--n", flags["n"], "Monte Carlo sample count");
  global->add_option("--seed", flags["seed"], "random seed");
  global->add_option("--t-end", flags["t_end"], "end time in seconds");
  global->add_option("--points", flags["points"], "number of output times");
  CLI::App* optimize = app.add_subcommand("optimize", "fit force-length width and rho_0 to optimal-length shifts");
  add_common(optimize);
  optimize->add_option("--targets", flags["targets"], "CSV with header gamma,shift_mm");
  optimize->add_flag("--synthesize", synthesize, "fit model-generated targets instead of a file");
  CLI::App* analytic = app.add_subcommand("analytic", "closed-form simplified Zajac sensitivities");
  add_common(analytic);
  analytic->add_option("--t-end", flags["t_end"], "end time in seconds");
  analytic->add_option("--points", flags["points"], "number of output times");

  std::optional<std::filesystem::path> out_dir;
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    report_error(err, std::nullopt, "ConfigError", e.what(), kExitConfig);
    return kExitConfig;
  }

  try {
    RunConfig cfg;
    const CLI::App* sub = app.get_subcommands().front();
    if (!config_path.empty()) load_config_file(cfg, config_path);
    for (const auto& [k, v] : flags)
      if (!v.empty()) cfg.set(k, v);
    for (const auto& s : assignments) {
      const auto [k, v] = split_assignment(s, "--set");
      cfg.set(k, v);
    }
    if (plot) cfg.set("plot", "true");
    if (synthesize) cfg.set("synthesize", "true");
    if (first_only) cfg.set("second_order", "false");
    cfg.values["command"] = sub->get_name();
    if (cfg.has("out")) out_dir = cfg.str("out");
    apply_defaults(cfg);
    out_dir = cfg.str("out");

    Artifacts a;
    a.dir = *out_dir;
    a.plot = cfg.flag("plot");
    std::error_code ec;
    std::filesystem::create_directories(a.dir, ec);
    if (ec) fail(ErrorKind::IoError, "cannot create output directory " + a.dir.string() + ": " + ec.message());

    const std::string& cmd = cfg.str("command");
    if (cmd == "simulate")
      cmd_simulate(cfg, a);
    else if (cmd == "local-sens")
      cmd_local_sens(cfg, a);
    else if (cmd == "global-sens")
      cmd_global_sens(cfg, a);
    else if (cmd == "optimize")
      cmd_optimize(cfg, a);
    else
      cmd_analytic(cfg, a);
    out << "wrote " << a.files.size() << " files to " << a.dir.string() << '\n';
    return kExitOk;
  } catch (const Error& e) {
    const int code = exit_code_for(e.kind());
    report_error(err, out_dir, to_string(e.kind()), e.detail(), code);
    return code;
  } catch (const std::exception& e) {
    report_error(err, out_dir, "InternalError", e.what(), kExitNumerical);
    return kExitNumerical;
  }
}

}  // namespace actsens::cli
