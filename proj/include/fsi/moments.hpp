#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fsi/error.hpp"
#include "fsi/fractime.hpp"
#include "fsi/io.hpp"
#include "fsi/stochastic.hpp"

namespace fsi {

/// E(t_n) and V(t_n) of I^{1-alpha} u(x0, ., omega) at t_1..t_N.
struct MomentSeries {
  TimeGrid grid;
  Vector E;
  Vector V;
  std::string provenance = "quadrature-exact";  // or "monte-carlo"
  long realizations = 0;
  double noise_level = 0.0;
};

/// Deterministic pairwise (cascade) summation.
inline double pairwise_sum(std::span<const double> x) {
  if (x.size() <= 32) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  }
  const std::size_t half = x.size() / 2;
  return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

/// Sample mean and unbiased (R-1) variance of I^{1-alpha} u over realizations.
inline MomentSeries estimate_moments(const Ensemble& ens) {
  const Eigen::Index R = ens.realizations();
  if (R < 2) throw ConfigError("moment estimation needs at least 2 realizations for the variance");
  const TimeGrid& grid = ens.grid;
  const Matrix W = frac_integral_weights(grid, 1.0 - grid.alpha);
  // Column n of Y holds I^{1-alpha} u(x0, t_n, omega_r) for every r.
  const Matrix Y = ens.trajectories * W.transpose();
  MomentSeries out{grid, Vector(grid.N), Vector(grid.N), "monte-carlo", static_cast<long>(R), 0.0};
  std::vector<double> col(static_cast<std::size_t>(R)), dev(static_cast<std::size_t>(R));
  for (int n = 1; n <= grid.N; ++n) {
    for (Eigen::Index r = 0; r < R; ++r) col[r] = Y(r, n);
    const double mean = pairwise_sum(col) / static_cast<double>(R);
    for (Eigen::Index r = 0; r < R; ++r) dev[r] = (col[r] - mean) * (col[r] - mean);
    out.E[n - 1] = mean;
    out.V[n - 1] = pairwise_sum(dev) / static_cast<double>(R - 1);
  }
  return out;
}

/// Streaming version of estimate_moments for ensembles too large to hold at
/// once. Blocks are merged with the pairwise mean/M2 update (Chan et al.),
/// in the order they are added.
class MomentAccumulator {
 public:
  explicit MomentAccumulator(const TimeGrid& grid)
      : grid_(grid), W_(frac_integral_weights(grid, 1.0 - grid.alpha)),
        mean_(Vector::Zero(grid.N)), m2_(Vector::Zero(grid.N)) {}

  void add(const Ensemble& block) {
    const Eigen::Index R = block.realizations();
    if (block.trajectories.cols() != grid_.N + 1) throw ConfigError("ensemble block does not match the time grid");
    const Matrix Y = block.trajectories * W_.transpose();
    std::vector<double> col(static_cast<std::size_t>(R)), dev(static_cast<std::size_t>(R));
    const auto nb = static_cast<double>(R), na = static_cast<double>(count_), n = na + nb;
    for (int k = 1; k <= grid_.N; ++k) {
      for (Eigen::Index r = 0; r < R; ++r) col[r] = Y(r, k);
      const double mb = pairwise_sum(col) / nb;
      for (Eigen::Index r = 0; r < R; ++r) dev[r] = (col[r] - mb) * (col[r] - mb);
      const double m2b = pairwise_sum(dev);
      const double delta = mb - mean_[k - 1];
      mean_[k - 1] += delta * nb / n;
      m2_[k - 1] += m2b + delta * delta * na * nb / n;
    }
    count_ += R;
  }

  long count() const { return count_; }

  MomentSeries result() const {
    if (count_ < 2) throw ConfigError("moment estimation needs at least 2 realizations for the variance");
    return {grid_, mean_, m2_ / static_cast<double>(count_ - 1), "monte-carlo", count_, 0.0};
  }

 private:
  TimeGrid grid_;
  Matrix W_;
  Vector mean_, m2_;
  long count_ = 0;
};

/// Trapezoid discretization of E(t) = int_0^t g1(tau) v(x0, t - tau) dtau and
/// V(t) = int_0^t g2^2(tau) v^2(x0, t - tau) dtau, using v(x0, 0) = f(x0) = 0.
/// v_trace, g1 and g2 are sampled at t_0..t_N.
inline MomentSeries exact_moments(std::span<const double> v_trace, std::span<const double> g1,
                                  std::span<const double> g2, const TimeGrid& grid) {
  const auto size = static_cast<std::size_t>(grid.N) + 1;
  if (v_trace.size() != size || g1.size() != size || g2.size() != size) {
    throw ConfigError("exact moments: v trace, g1 and g2 need N+1 samples");
  }
  if (v_trace[0] != 0.0) {
    throw ConfigError("exact moments: v(x0, 0) must vanish (the observation point lies outside supp f)");
  }
  const double dt = grid.dt();
  MomentSeries out{grid, Vector(grid.N), Vector(grid.N), "quadrature-exact", 0, 0.0};
  for (int n = 1; n <= grid.N; ++n) {
    double e = 0.5 * g1[0] * v_trace[n];
    double v = 0.5 * g2[0] * g2[0] * v_trace[n] * v_trace[n];
    for (int k = 1; k <= n - 1; ++k) {
      e += g1[k] * v_trace[n - k];
      v += g2[k] * g2[k] * v_trace[n - k] * v_trace[n - k];
    }
    out.E[n - 1] = dt * e;
    out.V[n - 1] = dt * v;
  }
  return out;
}

inline MomentSeries exact_moments(std::span<const double> v_trace, const SourceTimeSpec& spec, const TimeGrid& grid) {
  const auto g1 = spec.g1.samples(grid, 0, grid.N);
  const auto g2 = spec.g2.samples(grid, 0, grid.N);
  return exact_moments(v_trace, g1, g2, grid);
}

/// Multiplicative relative noise E_d = E (1 + delta xi), xi ~ U(-1, 1), so
/// that ||(E_d - E) / E||_inf <= delta; entries with E = 0 stay unchanged.
template <class Engine>
MomentSeries inject_noise(const MomentSeries& series, double delta, Engine& stream) {
  if (!(delta >= 0.0)) throw ConfigError("noise level delta must be >= 0");
  MomentSeries out = series;
  out.noise_level = delta;
  if (delta == 0.0) return out;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (Eigen::Index n = 0; n < out.E.size(); ++n) out.E[n] *= 1.0 + delta * unit(stream);
  for (Eigen::Index n = 0; n < out.V.size(); ++n) out.V[n] *= 1.0 + delta * unit(stream);
  return out;
}

inline RunHeader moment_header(const MomentSeries& m, RunHeader base = {}) {
  base.set("alpha", m.grid.alpha).set("T", m.grid.T).set("N", m.grid.N);
  base.set("provenance", m.provenance).set("R", m.realizations).set("delta", m.noise_level);
  return base;
}

inline void write_moments(const std::string& path, const MomentSeries& m, const RunHeader& base = {}) {
  Table tab;
  tab.header = moment_header(m, base);
  std::vector<double> t, e, v;
  for (int n = 1; n <= m.grid.N; ++n) {
    t.push_back(m.grid.t(n));
    e.push_back(m.E[n - 1]);
    v.push_back(m.V[n - 1]);
  }
  tab.add("t", std::move(t));
  tab.add("E", std::move(e));
  tab.add("V", std::move(v));
  tab.write_file(path);
}

inline MomentSeries read_moments(const std::string& path, RunHeader* header_out = nullptr) {
  const Table tab = Table::read_file(path, "moments file");
  const RunHeader& h = tab.header;
  MomentSeries m;
  m.grid = TimeGrid(h.number("T"), static_cast<int>(h.number("N")), h.number("alpha"));
  if (tab.rows() != static_cast<std::size_t>(m.grid.N)) {
    throw ConfigError("moments file: expected N=" + std::to_string(m.grid.N) + " rows, found " +
                      std::to_string(tab.rows()));
  }
  m.E = Eigen::Map<const Vector>(tab.column("E").data(), m.grid.N);
  m.V = Eigen::Map<const Vector>(tab.column("V").data(), m.grid.N);
  m.provenance = h.has("provenance") ? h.get("provenance") : "unknown";
  m.realizations = h.has("R") ? static_cast<long>(h.number("R")) : 0;
  m.noise_level = h.has("delta") ? h.number("delta") : 0.0;
  if (header_out) *header_out = h;
  return m;
}

}  // namespace fsi
