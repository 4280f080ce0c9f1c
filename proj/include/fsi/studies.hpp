#pragma once

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "fsi/config.hpp"
#include "fsi/fractime.hpp"
#include "fsi/io.hpp"
#include "fsi/moments.hpp"
#include "fsi/pipeline.hpp"
#include "fsi/stochastic.hpp"
#include "fsi/verify.hpp"

namespace fsi {

/// Least-squares slope of y against x.
inline double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

struct OrderStudy {
  std::vector<int> steps;
  std::vector<double> errors;
  std::vector<double> orders;  // between consecutive refinements
};

/// L1 scheme on d^alpha y = Gamma(2+alpha) t, y(0) = 0, exact y = t^{1+alpha};
/// error at t = 1.
inline OrderStudy time_order_study(double alpha, const std::vector<int>& steps) {
  OrderStudy out;
  for (int N : steps) {
    const TimeGrid grid(1.0, N, alpha);
    const ScalarSystem sys(0.0, grid);
    std::vector<double> forcing(static_cast<std::size_t>(N) + 1);
    for (int n = 0; n <= N; ++n) forcing[n] = std::tgamma(2.0 + alpha) * grid.t(n);
    const Matrix X = l1_march(sys, grid, Vector::Zero(1), Vector::Ones(1), forcing);
    out.steps.push_back(N);
    out.errors.push_back(std::abs(X(0, N) - 1.0));
  }
  for (std::size_t i = 1; i < steps.size(); ++i) {
    out.orders.push_back(std::log(out.errors[i - 1] / out.errors[i]) /
                         std::log(static_cast<double>(steps[i]) / steps[i - 1]));
  }
  return out;
}

struct RateStudy {
  std::vector<int> realizations;
  std::vector<double> errors;  // ||E_MC - E_ref||_inf
  double slope = 0.0;          // log-log
};

/// Monte Carlo error of E against the expectation of the same discrete
/// estimator (the g2 = 0 trajectory), so only sampling error is measured.
template <L1System System>
RateStudy mc_rate_study(const System& sys, const TimeGrid& grid, const Vector& load, const SourceTimeSpec& spec,
                        const std::vector<int>& counts, std::uint64_t seed, const EnsembleOptions& opt = {}) {
  const SourceTimeSpec mean_spec{spec.g1, TimeFunction::parse("zero", true), spec.M_bound};
  const Ensemble mean_run = run_ensemble(sys, grid, load, mean_spec, 1, seed, opt);
  const Matrix W = frac_integral_weights(grid, 1.0 - grid.alpha);
  const Vector E_ref = (W * mean_run.trajectories.row(0).transpose()).tail(grid.N);
  RateStudy out;
  std::vector<double> lx, ly;
  for (int R : counts) {
    const auto m = estimate_moments(run_ensemble(sys, grid, load, spec, R, seed, opt));
    const double err = (m.E - E_ref).template lpNorm<Eigen::Infinity>();
    out.realizations.push_back(R);
    out.errors.push_back(err);
    lx.push_back(std::log(static_cast<double>(R)));
    ly.push_back(std::log(err));
  }
  out.slope = ls_slope(lx, ly);
  return out;
}

struct SpeedupStudy {
  long fem_dof = 0, gms_dof = 0;
  double fem_seconds = 0.0, gms_seconds = 0.0;  // online ensemble wall time
  double offline_seconds = 0.0;
  double trace_rel_l2 = 0.0;                    // GMsFEM vs FEM v(x0, .)
  int realizations = 0;

  double speedup() const { return fem_seconds / gms_seconds; }
};

/// FEM and GMsFEM on the same problem: deterministic traces and the wall
/// time of an ensemble stepped realization by realization (direct engine).
inline SpeedupStudy dof_speedup_study(const Problem& pb, const RunConfig& cfg, int realizations,
                                      const std::string& cache_dir = {}) {
  using clock = std::chrono::steady_clock;
  const TimeGrid grid = cfg.grid();
  const SourceTimeSpec spec = cfg.signal();
  EnsembleOptions opt;
  opt.engine = EnsembleEngine::direct;
  opt.threads = cfg.thread_count();
  SpeedupStudy s;
  s.realizations = realizations;

  const FineSystem fine(pb.ops, grid, pb.observation);
  s.fem_dof = pb.ops.size();
  const Vector vf = deterministic_trace(fine, grid, pb.f);
  auto t0 = clock::now();
  run_ensemble(fine, grid, pb.f, spec, realizations, cfg.seed, opt);
  s.fem_seconds = std::chrono::duration<double>(clock::now() - t0).count();

  const auto setup = build_gmsfem(pb, cfg, cache_dir);
  s.offline_seconds = setup.offline_seconds;
  s.gms_dof = setup.basis.total_dof;
  const ReducedSystem red(setup.reduced, setup.basis, grid, pb.observation);
  const Vector vr = deterministic_trace(red, grid, setup.reduced.source);
  t0 = clock::now();
  run_ensemble(red, grid, setup.reduced.source, spec, realizations, cfg.seed, opt);
  s.gms_seconds = std::chrono::duration<double>(clock::now() - t0).count();

  std::vector<double> diff(static_cast<std::size_t>(grid.N) + 1), ref(diff.size());
  for (int n = 0; n <= grid.N; ++n) {
    diff[n] = vr[n] - vf[n];
    ref[n] = vf[n];
  }
  s.trace_rel_l2 = l2_trapz(diff, grid.dt(), 0, grid.N) / l2_trapz(ref, grid.dt(), 0, grid.N);
  return s;
}

}  // namespace fsi
