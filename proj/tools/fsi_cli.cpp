// fsi: forward simulation, moments, inversion, bounds and studies for the
// time-fractional stochastic source problem. Every output is delimited text
// (plus one binary ensemble file) headed by a "# fsi k=v ..." provenance line.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>

#include "fsi/fsi.hpp"
#include "fsi/studies.hpp"

namespace fs = std::filesystem;
using namespace fsi;

namespace {

struct Overrides {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> solver;
  std::optional<int> bases, realizations;
  std::optional<double> delta;
};

RunConfig resolve(const Overrides& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : RunConfig::load(o.config);
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (o.seed) cfg.seed = *o.seed;
  if (o.solver) cfg.solver = parse_solver(*o.solver);
  if (o.bases) cfg.bases = *o.bases;
  if (o.realizations) cfg.realizations = *o.realizations;
  if (o.delta) cfg.delta = *o.delta;
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  return cfg;
}

std::string out_path(const RunConfig& cfg, const std::string& name) { return (fs::path(cfg.out_dir) / name).string(); }

EnsembleOptions ensemble_options(const RunConfig& cfg) {
  EnsembleOptions opt;
  opt.engine = cfg.engine;
  opt.threads = cfg.thread_count();
  return opt;
}

void require_grid(const RunHeader& h, const RunConfig& cfg, const std::string& what) {
  RunHeader c;
  c.set("alpha", cfg.alpha).set("T", cfg.T).set("N", cfg.steps);
  for (const char* k : {"alpha", "T", "N"}) require_same(h, c, k, what + " vs config");
}

Vector load_trace(const std::string& path, const RunConfig& cfg) {
  RunHeader h;
  auto [grid, v] = read_trace(path, &h);
  require_grid(h, cfg, "v trace '" + path + "'");
  return v;
}

std::span<const double> span_of(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

// ---------------------------------------------------------------------------

int cmd_forward(const RunConfig& cfg, int csv_columns) {
  const Problem pb(cfg);
  const TimeGrid grid = cfg.grid();
  const SourceTimeSpec spec = cfg.signal();
  return with_system(
      pb, cfg, grid,
      [&](const auto& sys, const Vector& load, const std::string& tag) {
        RunHeader h = cfg.header();
        const Vector v = deterministic_trace(sys, grid, load);
        write_trace(out_path(cfg, "v_trace.csv"), grid, v, h);
        std::printf("solver %s, %ld unknowns\n", tag.c_str(), static_cast<long>(sys.size()));
        std::printf("v(x0, t_1) = %.6e, v(x0, T) = %.6e\n", v[1], v[grid.N]);
        if (!(v[1] > 0.0)) std::printf("warning: v(x0, t_1) <= 0, the inverse problem will be rejected\n");
        if (cfg.realizations > 0) {
          const Ensemble ens = run_ensemble(sys, grid, load, spec, cfg.realizations, cfg.seed, ensemble_options(cfg), tag);
          RunHeader eh = h;
          eh.set("R", cfg.realizations).set("solver", tag);
          write_ensemble_binary(out_path(cfg, "ensemble.bin"), ens, eh);
          write_ensemble_csv(out_path(cfg, "ensemble.csv"), ens, eh, csv_columns);
          std::printf("ensemble: %d realizations written\n", cfg.realizations);
        }
        return 0;
      },
      cfg.out_dir);
}

int cmd_moments(const RunConfig& cfg, bool exact, std::string ensemble_path, std::string trace_path) {
  const TimeGrid grid = cfg.grid();
  MomentSeries clean;
  RunHeader base = cfg.header();
  if (exact) {
    if (trace_path.empty()) trace_path = out_path(cfg, "v_trace.csv");
    const Vector v = load_trace(trace_path, cfg);
    clean = exact_moments(span_of(v), cfg.signal(), grid);
  } else {
    if (ensemble_path.empty()) ensemble_path = out_path(cfg, "ensemble.bin");
    RunHeader h;
    const Ensemble ens = read_ensemble_binary(ensemble_path, &h);
    require_grid(h, cfg, "ensemble '" + ensemble_path + "'");
    base.set("seed", ens.seed).set("solver", ens.solver_tag);
    clean = estimate_moments(ens);
  }
  write_moments(out_path(cfg, "moments_clean.csv"), clean, base);
  auto stream = make_stream(cfg.seed, 0, stream_purpose::moment_noise);
  const MomentSeries noisy = inject_noise(clean, cfg.delta, stream);
  write_moments(out_path(cfg, "moments.csv"), noisy, base);
  std::printf("moments (%s, R=%ld, delta=%g): E(T) = %.6e, V(T) = %.6e\n", clean.provenance.c_str(),
              clean.realizations, cfg.delta, clean.E[grid.N - 1], clean.V[grid.N - 1]);
  return 0;
}

int cmd_invert(const RunConfig& cfg, std::string moments_path, std::string trace_path) {
  if (moments_path.empty()) moments_path = out_path(cfg, "moments.csv");
  if (trace_path.empty()) trace_path = out_path(cfg, "v_trace.csv");
  RunHeader mh, vh;
  const MomentSeries m = read_moments(moments_path, &mh);
  const auto [grid, v] = read_trace(trace_path, &vh);
  for (const char* k : {"alpha", "T", "N"}) require_same(mh, vh, k, "moments vs v trace");
  require_grid(vh, cfg, "v trace");

  const VolterraSystem sys = assemble_volterra(span_of(v), grid);
  LMOptions opt;
  opt.gamma1 = cfg.gamma1;
  opt.gamma2 = cfg.gamma2;
  opt.gamma_rel = cfg.gamma_rel;
  opt.max_iter = cfg.max_iter;
  opt.stop_tol = cfg.stop_tol;
  const ReconstructionResult res = lm_iterate(sys, m.E, m.V, opt);
  const SourceTimeSpec truth = cfg.signal();
  RunHeader h = cfg.header();
  h.set("delta", m.noise_level).set("provenance", m.provenance);
  write_reconstruction(out_path(cfg, "reconstruction.csv"), res, grid, h, &truth);

  Vector g1_true(grid.N), g2_true(grid.N);
  for (int n = 0; n < grid.N; ++n) {
    g1_true[n] = truth.g1(grid.t(n));
    g2_true[n] = std::abs(truth.g2(grid.t(n)));
  }
  const auto g2abs = reconstruct_g2_abs(res.g2sq);
  std::printf("gamma1 = %.3e  rho1 = %.12g (power %.12g)  iterations %d  residual %.3e\n", res.gamma1,
              res.rho1.value, res.rho1_power, res.trace1.iterations, res.trace1.residual);
  std::printf("gamma2 = %.3e  rho2 = %.12g (power %.12g)  iterations %d  residual %.3e\n", res.gamma2,
              res.rho2.value, res.rho2_power, res.trace2.iterations, res.trace2.residual);
  std::printf("relative l2 error: g1 %.4e  |g2| %.4e  (clipped %d)\n", relative_l2(res.g1, g1_true),
              relative_l2(g2abs.values, g2_true), g2abs.clipped);
  if (res.trace1.last_change >= cfg.stop_tol || res.trace2.last_change >= cfg.stop_tol) {
    std::printf("warning: iteration stopped at max_iter before reaching stop_tol\n");
  }
  return 0;
}

int cmd_verify(const RunConfig& cfg, std::string trace_path, const std::string& moments_path,
               const std::string& ensemble_path, double tol) {
  if (trace_path.empty()) trace_path = out_path(cfg, "v_trace.csv");
  const Vector v = load_trace(trace_path, cfg);
  const TimeGrid grid = cfg.grid();
  const SourceTimeSpec spec = cfg.signal();
  const auto g1 = spec.g1.samples(grid, 0, grid.N);
  const auto g2 = spec.g2.samples(grid, 0, grid.N);

  Vector V;
  if (moments_path.empty()) {
    V = exact_moments(span_of(v), spec, grid).V;
  } else {
    RunHeader h;
    V = read_moments(moments_path, &h).V;
    require_grid(h, cfg, "moments '" + moments_path + "'");
  }

  double mean_u = 0.0;
  std::string mean_source;
  if (!ensemble_path.empty()) {
    RunHeader h;
    const Ensemble ens = read_ensemble_binary(ensemble_path, &h);
    require_grid(h, cfg, "ensemble '" + ensemble_path + "'");
    mean_u = mean_trajectory_l1(ens);
    mean_source = "ensemble";
  } else {
    const Problem pb(cfg);
    mean_u = with_system(
        pb, cfg, grid,
        [&](const auto& sys, const Vector& load, const std::string&) {
          return expected_trajectory_l1(impulse_response(sys, grid, load), g1, g2, grid);
        },
        cfg.out_dir);
    mean_source = "gaussian";
  }
  const double Cf = cfg.Cf > 0.0 ? cfg.Cf : Problem(cfg).Cf;
  const BoundsReport rep = verify_bounds(g1, g2, mean_u, V, span_of(v), grid, cfg.eta_or_default(), cfg.M_bound, Cf, tol);

  RunHeader h = cfg.header();
  h.set("eta", rep.constants.eta).set("tol", tol).set("mean_u", mean_source);
  {
    std::ofstream txt(out_path(cfg, "bounds.txt"));
    txt << h.line() << "\n";
    rep.write_text(txt);
  }
  {
    std::ofstream csv(out_path(cfg, "bounds.csv"));
    rep.write_csv(csv, h);
  }
  rep.write_text(std::cout);
  if (!rep.all_pass()) throw VerificationError("stability bounds violated (see bounds.txt)");
  return 0;
}

int cmd_basis(RunConfig cfg) {
  const Problem pb(cfg);
  const auto setup = build_gmsfem(pb, cfg, cfg.out_dir);
  std::printf("fine interior DOF %ld, coarse blocks %dx%d, GMsFEM DOF %d (L=%d, %s snapshots)\n",
              static_cast<long>(pb.ops.size()), cfg.blocks, cfg.blocks, setup.basis.total_dof, cfg.bases,
              to_string(cfg.snapshots));
  std::printf("offline stage %.3f s%s\n", setup.offline_seconds, setup.from_cache ? " (cache hit)" : "");
  Table tab;
  tab.header = cfg.header();
  tab.header.set("dof", setup.basis.total_dof).set("fine_dof", static_cast<long>(pb.ops.size()));
  std::vector<double> nb, mode, value;
  for (std::size_t i = 0; i < setup.basis.eigenvalues.size(); ++i) {
    for (Eigen::Index l = 0; l < setup.basis.eigenvalues[i].size(); ++l) {
      nb.push_back(static_cast<double>(i));
      mode.push_back(static_cast<double>(l));
      value.push_back(setup.basis.eigenvalues[i][l]);
    }
  }
  tab.add("neighborhood", std::move(nb));
  tab.add("mode", std::move(mode));
  tab.add("eigenvalue", std::move(value));
  tab.write_file(out_path(cfg, "eigenvalues.csv"));
  return 0;
}

int cmd_study(const RunConfig& cfg, const std::string& kind, int timing_realizations) {
  Table tab;
  tab.header = cfg.header();
  tab.header.set("study", kind);
  if (kind == "time-order") {
    const OrderStudy s = time_order_study(cfg.alpha, {40, 80, 160, 320});
    std::vector<double> N, dt, err, ord;
    for (std::size_t i = 0; i < s.steps.size(); ++i) {
      N.push_back(s.steps[i]);
      dt.push_back(1.0 / s.steps[i]);
      err.push_back(s.errors[i]);
      ord.push_back(i == 0 ? std::numeric_limits<double>::quiet_NaN() : s.orders[i - 1]);
      std::printf("N=%4d  error %.4e  order %s\n", s.steps[i], s.errors[i],
                  i == 0 ? "-" : std::to_string(s.orders[i - 1]).c_str());
    }
    std::printf("expected order 2 - alpha = %.3f\n", 2.0 - cfg.alpha);
    tab.add("N", std::move(N));
    tab.add("dt", std::move(dt));
    tab.add("error", std::move(err));
    tab.add("order", std::move(ord));
    tab.write_file(out_path(cfg, "study_time_order.csv"));
    return 0;
  }
  if (kind == "mc-rate") {
    const Problem pb(cfg);
    const TimeGrid grid = cfg.grid();
    std::vector<int> counts;
    for (int R = std::max(cfg.realizations, 64); R >= 16 && counts.size() < 5; R /= 4) counts.insert(counts.begin(), R);
    const RateStudy s = with_system(
        pb, cfg, grid,
        [&](const auto& sys, const Vector& load, const std::string&) {
          return mc_rate_study(sys, grid, load, cfg.signal(), counts, cfg.seed, ensemble_options(cfg));
        },
        cfg.out_dir);
    std::vector<double> R, err;
    for (std::size_t i = 0; i < s.realizations.size(); ++i) {
      R.push_back(s.realizations[i]);
      err.push_back(s.errors[i]);
      std::printf("R=%7d  ||E_MC - E||_inf %.4e\n", s.realizations[i], s.errors[i]);
    }
    std::printf("log-log slope %.3f (expected -0.5)\n", s.slope);
    tab.header.set("slope", s.slope);
    tab.add("R", std::move(R));
    tab.add("error", std::move(err));
    tab.write_file(out_path(cfg, "study_mc_rate.csv"));
    return 0;
  }
  if (kind == "dof-speedup") {
    const Problem pb(cfg);
    const SpeedupStudy s = dof_speedup_study(pb, cfg, timing_realizations, cfg.out_dir);
    std::printf("FEM    DOF %6ld  ensemble %.3f s\n", s.fem_dof, s.fem_seconds);
    std::printf("GMsFEM DOF %6ld  ensemble %.3f s  offline %.3f s\n", s.gms_dof, s.gms_seconds, s.offline_seconds);
    std::printf("speedup %.1fx over %d realizations, v(x0,.) relative L2 difference %.3e\n", s.speedup(),
                s.realizations, s.trace_rel_l2);
    tab.header.set("R", s.realizations);
    tab.add("fem_dof", {static_cast<double>(s.fem_dof)});
    tab.add("gmsfem_dof", {static_cast<double>(s.gms_dof)});
    tab.add("fem_seconds", {s.fem_seconds});
    tab.add("gmsfem_seconds", {s.gms_seconds});
    tab.add("offline_seconds", {s.offline_seconds});
    tab.add("speedup", {s.speedup()});
    tab.add("trace_rel_l2", {s.trace_rel_l2});
    tab.write_file(out_path(cfg, "study_dof_speedup.csv"));
    return 0;
  }
  throw ConfigError("unknown study '" + kind + "' (expected time-order|mc-rate|dof-speedup)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fsi: fractional stochastic source inversion"};
  app.require_subcommand(1);
  app.fallthrough();
  Overrides o;
  app.add_option("--config", o.config, "INI run configuration")->check(CLI::ExistingFile);
  app.add_option("--out", o.out, "output directory (overrides output.dir)");
  app.add_option("--seed", o.seed, "master seed");
  app.add_option("--solver", o.solver, "fem|gmsfem")->check(CLI::IsMember({"fem", "gmsfem"}));
  app.add_option("--bases", o.bases, "GMsFEM modes per neighborhood");
  app.add_option("--delta", o.delta, "relative noise level of the moments");
  app.add_option("--realizations", o.realizations, "ensemble size R");

  int csv_columns = 200;
  auto* forward = app.add_subcommand("forward", "v trace and stochastic ensemble at x0");
  forward->add_option("--csv-columns", csv_columns, "realizations kept in ensemble.csv (0: all)");

  bool exact = false;
  std::string ensemble_in, trace_in, moments_in;
  auto* moments = app.add_subcommand("moments", "E and V of I^{1-alpha}u(x0), clean and noisy");
  moments->add_flag("--exact", exact, "quadrature moments from the v trace instead of the ensemble");
  moments->add_option("--ensemble", ensemble_in, "ensemble file (default <out>/ensemble.bin)");
  moments->add_option("--vtrace", trace_in, "v trace (default <out>/v_trace.csv)");

  auto* invert = app.add_subcommand("invert", "reconstruct g1 and |g2| from moments");
  invert->add_option("--moments", moments_in, "moments file (default <out>/moments.csv)");
  invert->add_option("--vtrace", trace_in, "v trace (default <out>/v_trace.csv)");

  double tol = 0.02;
  auto* verify = app.add_subcommand("verify", "check the stability bounds");
  verify->add_option("--vtrace", trace_in, "v trace (default <out>/v_trace.csv)");
  verify->add_option("--moments", moments_in, "moments file (default: quadrature V)");
  verify->add_option("--ensemble", ensemble_in, "ensemble for E||u||_L1 (default: closed form)");
  verify->add_option("--tol", tol, "relative slack on every bound");

  auto* basis = app.add_subcommand("basis", "build or load the GMsFEM basis");

  std::string kind;
  int timing_r = 32;
  auto* study = app.add_subcommand("study", "time-order | mc-rate | dof-speedup");
  study->add_option("kind", kind)->required()->check(CLI::IsMember({"time-order", "mc-rate", "dof-speedup"}));
  study->add_option("--timing-realizations", timing_r, "ensemble size timed by dof-speedup");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*basis) o.solver = "gmsfem";
    const RunConfig cfg = resolve(o);
    if (*forward) return cmd_forward(cfg, csv_columns);
    if (*moments) return cmd_moments(cfg, exact, ensemble_in, trace_in);
    if (*invert) return cmd_invert(cfg, moments_in, trace_in);
    if (*verify) return cmd_verify(cfg, trace_in, moments_in, ensemble_in, tol);
    if (*basis) return cmd_basis(cfg);
    if (*study) return cmd_study(cfg, kind, timing_r);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const VerificationError& e) {
    std::cerr << "verification failed: " << e.what() << "\n";
    return 4;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
