/**
 * @file cli.hpp
 * @brief Command-line driver: config in, CSV tables and a run manifest out.
 *
 * Exit codes: 0 success, 2 configuration or validation error, 3 solver
 * failure, 1 anything else (I/O).
 */
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "wgb/config.hpp"
#include "wgb/cross_section.hpp"
#include "wgb/effective1d.hpp"
#include "wgb/errors.hpp"
#include "wgb/fiber3d.hpp"
#include "wgb/geometry.hpp"
#include "wgb/parallel.hpp"

namespace wgb {

inline constexpr const char* kVersion = "1.0.0";

namespace cli {

/// Fixed 17-significant-digit scientific format.
inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16e", v);
  return buf;
}

struct Context {
  RunConfig cfg;
  std::filesystem::path out_dir;
  unsigned workers = 1;
  std::uint64_t seed = 0x5eedULL;
  std::ostream* log = &std::cout;
  json manifest = json::object();
  std::vector<std::string> outputs;

  numerics::SparseEigenOptions eig() const {
    numerics::SparseEigenOptions o;
    o.tol = cfg.number("tol", 1e-8);
    o.seed = seed;
    return o;
  }

  void write(const std::string& name, const std::string& content) {
    const auto path = out_dir / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write `" + path.string() + "`");
    f << content;
    outputs.push_back(name);
  }
};

class Csv {
 public:
  explicit Csv(const std::vector<std::string>& header) { row_strings(header); }

  void row_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) text_ += ',';
      text_ += cells[i];
    }
    text_ += '\n';
  }

  const std::string& str() const { return text_; }

 private:
  std::string text_;
};

/// C(S) from `C_S` or, failing that, from the configured section.
inline double twist_constant_from_config(Context& ctx) {
  const bool direct = ctx.cfg.has("C_S");
  const bool section = ctx.cfg.has("section");
  if (direct && section) throw ValidationError("config: give either `C_S` or a section, not both");
  if (direct) {
    const double c = ctx.cfg.number("C_S");
    if (!(c >= 0.0)) throw ValidationError("config: `C_S` must be >= 0");
    ctx.manifest["C_S_source"] = "config";
    return c;
  }
  if (!section) throw ValidationError("config: need `C_S` or a section to define C(S)");
  const auto spec = solve_section(section_from_config(ctx.cfg), ctx.eig());
  ctx.manifest["C_S_source"] = "section";
  return spec.twist_constant;
}

inline void cmd_section(Context& ctx) {
  const double h = ctx.cfg.number("h");
  const auto mask = section_from_config(ctx.cfg);
  const auto spec = solve_section(mask, ctx.eig());

  Csv report({"quantity", "value"});
  report.row_strings({"lambda0", num(spec.lambda0)});
  report.row_strings({"lambda1", num(spec.lambda1)});
  report.row_strings({"C_S", num(spec.twist_constant)});
  report.row_strings({"h", num(h)});
  report.row_strings({"interior_nodes", std::to_string(mask.size())});
  ctx.write("section.csv", report.str());

  Csv nodes({"y1", "y2", "u0", "du0_dy1", "du0_dy2"});
  for (std::size_t k = 0; k < mask.size(); ++k) {
    const auto p = mask.position(k);
    const auto i = static_cast<Eigen::Index>(k);
    nodes.row_strings({num(p.x()), num(p.y()), num(spec.u0(i)), num(spec.grad1(i)), num(spec.grad2(i))});
  }
  ctx.write("section_nodes.csv", nodes.str());

  // Coarser levels 4h and 2h for a convergence table (skipped below the node floor).
  Csv conv({"h", "interior_nodes", "lambda0", "lambda1", "C_S"});
  for (double factor : {4.0, 2.0}) {
    try {
      const auto m = section_from_config(ctx.cfg, factor * h);
      const auto s = solve_section(m, ctx.eig());
      conv.row_strings({num(factor * h), std::to_string(m.size()), num(s.lambda0), num(s.lambda1),
                        num(s.twist_constant)});
    } catch (const ValidationError&) {
    }
  }
  conv.row_strings({num(h), std::to_string(mask.size()), num(spec.lambda0), num(spec.lambda1),
                    num(spec.twist_constant)});
  ctx.write("section_convergence.csv", conv.str());

  ctx.manifest["grid"] = {{"h", h}, {"interior_nodes", mask.size()}};
  *ctx.log << "lambda0 = " << num(spec.lambda0) << "\nlambda1 = " << num(spec.lambda1)
           << "\nC(S)    = " << num(spec.twist_constant) << "\n";
}

inline std::string gap_table(const GapReport& r) {
  Csv t({"n", "band_lo", "band_hi", "gap_lo", "gap_hi", "delta"});
  for (std::size_t i = 0; i < r.bands.size(); ++i) {
    const auto& g = r.gaps[i];
    t.row_strings({std::to_string(i + 1), num(r.bands[i].lo), num(r.bands[i].hi),
                   g ? num(g->lo) : "nan", g ? num(g->hi) : "nan", num(r.widths[i])});
  }
  return t.str();
}

inline EffectivePotential potential_from_context(Context& ctx, const WaveguideGeometry& g) {
  const int m = ctx.cfg.integer("M", 256);
  if (m <= 0) throw ValidationError("config: `M` must be a positive power of two");
  const double cs = twist_constant_from_config(ctx);
  ctx.manifest["C_S"] = cs;
  return effective_potential(g, cs, static_cast<std::size_t>(m));
}

inline void cmd_bands(Context& ctx) {
  const auto g = geometry_from_config(ctx.cfg);
  const auto v = potential_from_context(ctx, g);
  BandOptions opt;
  opt.half_width = ctx.cfg.integer("N", 64);
  opt.theta_count = ctx.cfg.integer("theta_count", 33);
  opt.n_max = ctx.cfg.integer("n_max", 8);
  opt.workers = ctx.workers;
  const auto bands = compute_bands(v, opt);
  const auto gaps = compute_gaps(v, opt.n_max, opt.half_width);

  std::vector<std::string> header{"theta"};
  for (int n = 1; n <= opt.n_max; ++n) header.push_back("kappa_" + std::to_string(n));
  Csv t(header);
  for (std::size_t q = 0; q < bands.thetas.size(); ++q) {
    std::vector<std::string> row{num(bands.thetas[q])};
    for (int n = 0; n < opt.n_max; ++n) row.push_back(num(bands.kappa(static_cast<Eigen::Index>(q), n)));
    t.row_strings(row);
  }
  ctx.write("bands.csv", t.str());
  ctx.write("gaps.csv", gap_table(gaps));
  ctx.manifest["grid"] = {{"N", opt.half_width}, {"M", v.size()}, {"theta_count", opt.theta_count},
                          {"n_max", opt.n_max}};
  int open = 0;
  for (const auto& gp : gaps.gaps) open += gp.has_value();
  *ctx.log << "bands: " << opt.n_max << " x " << opt.theta_count << " theta points; open gaps: " << open
           << "; monotone: " << (bands.monotone() ? "yes" : "no")
           << "; evenness defect: " << num(bands.evenness_defect) << "\n";
}

inline void cmd_gaps(Context& ctx) {
  const auto g = geometry_from_config(ctx.cfg);
  const auto v = potential_from_context(ctx, g);
  const int n_max = ctx.cfg.integer("n_max", 8);
  const int half = ctx.cfg.integer("N", 64);
  const double tol = ctx.cfg.number("gap_tol", 1e-6);
  const auto gaps = compute_gaps(v, n_max, half);
  ctx.write("gaps.csv", gap_table(gaps));
  const auto first = first_open_gap(v, tol, n_max, half);
  ctx.manifest["grid"] = {{"N", half}, {"M", v.size()}, {"n_max", n_max}};
  ctx.manifest["gap_tol"] = tol;
  if (first) {
    *ctx.log << "first open gap: n = " << first->n << ", (" << num(first->gap.lo) << ", "
             << num(first->gap.hi) << ")\n";
  } else {
    *ctx.log << "no open gap up to n = " << n_max << "; V may be constant\n";
  }
}

inline void cmd_gap_asymptotics(Context& ctx) {
  const int m = ctx.cfg.integer("M", 256);
  if (m <= 0) throw ValidationError("config: `M` must be a positive power of two");
  const int half = ctx.cfg.integer("N", 64);
  const int n = ctx.cfg.integer("gap_index", 1);
  const auto mu = ctx.cfg.numbers("mu_list");
  std::optional<WaveguideGeometry> geom;
  std::optional<double> cs;
  auto geometry = [&]() -> const WaveguideGeometry& {
    if (!geom) geom = geometry_from_config(ctx.cfg);
    return *geom;
  };
  auto twist = [&]() {
    if (!cs) cs = twist_constant_from_config(ctx);
    return *cs;
  };
  const bool explicit_w = ctx.cfg.has("W.samples") || ctx.cfg.has("W.modes");
  const auto w = explicit_w ? test_potential_from_config(ctx.cfg, static_cast<std::size_t>(m))
                            : effective_potential(geometry(), twist(), static_cast<std::size_t>(m))
                                  .shifted(-geometry().c);
  const auto fit = gap_slope_fit(w, n, mu, half);

  Csv t({"kind", "n", "parameter", "measured", "predicted", "relative_deviation", "order"});
  const std::string order = fit.second_order ? "second" : "first";
  for (std::size_t i = 0; i < fit.mu.size(); ++i) {
    t.row_strings({"delta", std::to_string(n), num(fit.mu[i]), num(fit.delta[i]),
                   num(fit.predicted * fit.mu[i]), num(fit.delta[i] / fit.mu[i]), order});
  }
  t.row_strings({"slope", std::to_string(n), "nan", num(fit.fitted), num(fit.predicted),
                 num(fit.relative_deviation), order});
  if (ctx.cfg.has("gamma_list")) {
    for (double gamma : ctx.cfg.numbers("gamma_list")) {
      const auto loc = locate_gap_by_fourier(geometry(), twist(), n, gamma,
                                             static_cast<std::size_t>(m), half);
      t.row_strings({"location", std::to_string(n), num(gamma), num(loc.measured), num(loc.predicted),
                     num(loc.relative_deviation), "first"});
    }
  }
  ctx.write("gap_asymptotics.csv", t.str());
  ctx.manifest["grid"] = {{"N", half}, {"M", m}};
  *ctx.log << "gap " << n << ": fitted slope " << num(fit.fitted) << ", predicted " << num(fit.predicted);
  if (fit.second_order) {
    *ctx.log << " (omega_n = 0: second-order gap, delta/mu -> 0)\n";
  } else {
    *ctx.log << ", relative deviation " << num(fit.relative_deviation) << "\n";
  }
}

inline std::vector<double> thetas_from_config(const RunConfig& cfg, double period,
                                              std::vector<double> fallback) {
  if (cfg.has("thetas")) return cfg.numbers("thetas");
  if (cfg.has("theta_count")) return theta_grid(period, cfg.integer("theta_count", 9));
  return fallback;
}

inline void cmd_validate_reduction(Context& ctx) {
  const auto g = geometry_from_config(ctx.cfg);
  const auto mask = section_from_config(ctx.cfg);
  const double L = g.period();
  const auto eps = ctx.cfg.numbers("epsilons");
  const auto thetas =
      thetas_from_config(ctx.cfg, L, {0.0, std::numbers::pi / (2 * L), std::numbers::pi / L});
  const int n_max = ctx.cfg.integer("n_max", 3);
  ReductionOptions opt;
  opt.ns = ctx.cfg.integer("Ns", 64);
  opt.workers = ctx.workers;
  opt.eig = ctx.eig();
  const auto rep = validate_reduction(g, mask, eps, thetas, n_max, opt);

  Csv t({"epsilon", "theta", "n", "E", "reference", "deviation"});
  double worst = 0.0;
  for (const auto& r : rep.rows) {
    t.row_strings({num(r.epsilon), num(r.theta), std::to_string(r.n), num(r.energy), num(r.reference),
                   num(r.deviation)});
    worst = std::max(worst, r.deviation);
  }
  ctx.write("reduction.csv", t.str());

  Csv s({"theta", "n", "slope", "decay_ratio", "ablation_ratio"});
  bool bracket = !rep.slopes.empty();
  for (const auto& sl : rep.slopes) {
    s.row_strings({num(sl.theta), std::to_string(sl.n), num(sl.slope), num(sl.decay_ratio),
                   num(sl.ablation_ratio)});
    if (sl.n == 1 && !(sl.decay_ratio >= 1.5 && sl.decay_ratio <= 3.0)) bracket = false;
  }
  ctx.write("reduction_summary.csv", s.str());
  ctx.manifest["grid"] = {{"Ns", opt.ns}, {"h", ctx.cfg.number("h")}, {"interior_nodes", mask.size()},
                          {"n_max", n_max}};
  ctx.manifest["lambda0_fd"] = rep.constants.lambda0;
  ctx.manifest["C_grid"] = rep.constants.c_grid;

  *ctx.log << "max deviation " << num(worst) << "\n";
  if (worst < 1e-8) {
    *ctx.log << "PASS: deviations below 1e-8 (separable case)\n";
  } else if (rep.slopes.empty()) {
    *ctx.log << "INCOMPLETE: a single eps value; decay slope omitted\n";
  } else if (bracket) {
    *ctx.log << "PASS: d_1(eps_1)/d_1(eps_2) within [1.5, 3.0] for every theta\n";
  } else {
    *ctx.log << "FAIL: d_1(eps_1)/d_1(eps_2) outside [1.5, 3.0] for some theta (see reduction_summary.csv)\n";
  }
}

inline void cmd_spectrum_union(Context& ctx) {
  const auto g = geometry_from_config(ctx.cfg);
  if (!ctx.cfg.has("epsilon")) throw ValidationError("config: missing required key `epsilon`");
  const auto mask = section_from_config(ctx.cfg);
  const auto thetas = thetas_from_config(ctx.cfg, g.period(), theta_grid(g.period(), 9));
  const int n_max = ctx.cfg.integer("n_max", 3);
  ReductionOptions opt;
  opt.ns = ctx.cfg.integer("Ns", 64);
  opt.workers = ctx.workers;
  opt.eig = ctx.eig();
  const auto spec = solve_section(mask, opt.eig);
  const auto energies = fiber_sweep(g, mask, spec.lambda0, thetas, n_max, opt);
  const auto u = spectrum_union(energies);

  std::vector<std::string> header{"theta"};
  for (int n = 1; n <= n_max; ++n) header.push_back("E_" + std::to_string(n));
  Csv t(header);
  for (std::size_t q = 0; q < thetas.size(); ++q) {
    std::vector<std::string> row{num(thetas[q])};
    for (double e : energies[q]) row.push_back(num(e));
    t.row_strings(row);
  }
  ctx.write("spectrum_bands.csv", t.str());
  Csv iv({"kind", "index", "lo", "hi"});
  for (std::size_t i = 0; i < u.bands.size(); ++i) {
    iv.row_strings({"band", std::to_string(i + 1), num(u.bands[i].lo), num(u.bands[i].hi)});
  }
  for (std::size_t i = 0; i < u.merged.size(); ++i) {
    iv.row_strings({"interval", std::to_string(i + 1), num(u.merged[i].lo), num(u.merged[i].hi)});
  }
  for (std::size_t i = 0; i < u.gaps.size(); ++i) {
    iv.row_strings({"gap", std::to_string(i + 1), num(u.gaps[i].lo), num(u.gaps[i].hi)});
  }
  ctx.write("spectrum_union.csv", iv.str());
  ctx.manifest["grid"] = {{"Ns", opt.ns}, {"h", ctx.cfg.number("h")}, {"interior_nodes", mask.size()},
                          {"n_max", n_max}, {"theta_count", thetas.size()}};
  ctx.manifest["lambda0_fd"] = spec.lambda0;
  *ctx.log << u.merged.size() << " spectral interval(s), " << u.gaps.size() << " gap(s)\n";
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace cli

/**
 * Entry point shared by the executable and the tests. Messages go to `out`
 * and `err`; the return value is the process exit code.
 */
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Band structure of thin periodic twisted waveguides", "wgb"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::string out_dir = ".";
  unsigned workers = default_workers();
  std::uint64_t seed = 0x5eedULL;
  app.add_option("--config", config_path, "Run configuration (key = value lines)")->required();
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--workers", workers, "Parallel workers for theta/eps sweeps")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Seed of the eigensolver start block");

  using Cmd = void (*)(cli::Context&);
  const std::vector<std::tuple<std::string, std::string, Cmd>> commands{
      {"section", "Cross-section ground state and C(S)", cli::cmd_section},
      {"bands", "Dispersion curves kappa_n(theta) and gap report", cli::cmd_bands},
      {"gaps", "Band/gap report from periodic and antiperiodic spectra", cli::cmd_gaps},
      {"gap-asymptotics", "Gap width vs coupling: fitted and predicted slopes", cli::cmd_gap_asymptotics},
      {"validate-reduction", "3D fiber eigenvalues vs lambda0/eps^2 + kappa_n", cli::cmd_validate_reduction},
      {"spectrum-union", "Union of 3D bands over theta at fixed eps", cli::cmd_spectrum_union}};
  for (const auto& [name, help, fn] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion& e) {
    out << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    cli::Context ctx;
    ctx.cfg = RunConfig::load(config_path);
    ctx.out_dir = out_dir;
    ctx.workers = workers;
    ctx.seed = seed;
    ctx.log = &out;
    std::filesystem::create_directories(ctx.out_dir);
    std::string chosen;
    for (const auto& [name, help, fn] : commands) {
      if (app.got_subcommand(name)) {
        chosen = name;
        fn(ctx);
      }
    }
    ctx.manifest["tool"] = "wgb";
    ctx.manifest["version"] = kVersion;
    ctx.manifest["command"] = chosen;
    ctx.manifest["config"] = json(ctx.cfg.values());
    ctx.manifest["config_hash"] = "fnv1a64:" + cli::hex64(fnv1a(ctx.cfg.canonical()));
    ctx.manifest["seed"] = seed;
    ctx.manifest["workers"] = workers;
    ctx.manifest["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." +
                                    std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                    std::to_string(EIGEN_MINOR_VERSION);
    ctx.manifest["tolerances"] = {{"eig_residual", ctx.eig().tol}, {"gap_threshold", kGapThreshold}};
    ctx.manifest["outputs"] = ctx.outputs;
    ctx.write("manifest.json", ctx.manifest.dump(2) + "\n");
    return 0;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const SolverError& e) {
    err << "solver error: " << e.what();
    if (!e.residuals().empty()) {
      err << " (residuals:";
      for (double r : e.residuals()) err << ' ' << cli::num(r);
      err << ")";
    }
    err << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace wgb
