#pragma once

#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fsi/error.hpp"
#include "fsi/fractime.hpp"
#include "fsi/io.hpp"
#include "fsi/moments.hpp"
#include "fsi/stochastic.hpp"

namespace fsi {

/// Trapezoid integral of values[i0..i1] with spacing h.
inline double trapz(std::span<const double> values, double h, std::size_t i0, std::size_t i1) {
  double s = 0.0;
  for (std::size_t i = i0; i < i1; ++i) s += 0.5 * (values[i] + values[i + 1]);
  return s * h;
}

inline double l1_trapz(std::span<const double> values, double h, std::size_t i0, std::size_t i1) {
  std::vector<double> a(values.begin(), values.end());
  for (auto& v : a) v = std::abs(v);
  return trapz(a, h, i0, i1);
}

inline double l2_trapz(std::span<const double> values, double h, std::size_t i0, std::size_t i1) {
  std::vector<double> a(values.begin(), values.end());
  for (auto& v : a) v = v * v;
  return std::sqrt(trapz(a, h, i0, i1));
}

/// Strict sign flips between consecutive samples, ignoring |value| < zero_tol.
inline int detect_sign_changes(std::span<const double> g, double zero_tol = 1e-12) {
  int changes = 0, last = 0;
  for (double v : g) {
    if (std::abs(v) < zero_tol) continue;
    const int s = v > 0.0 ? 1 : -1;
    if (last != 0 && s != last) ++changes;
    last = s;
  }
  return changes;
}

struct BoundEntry {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  bool applicable = true;  // false when the hypotheses are not met
  bool pass = false;
  std::string note;

  double margin() const { return rhs - lhs; }
};

inline BoundEntry make_entry(std::string name, double lhs, double rhs, double tol) {
  BoundEntry e{std::move(name), lhs, rhs, true, false, {}};
  e.pass = lhs <= rhs * (1.0 + tol);
  return e;
}

/// Shared constants of the stability estimates.
struct BoundConstants {
  double eta = 0.0;
  int eta_steps = 0;
  double C_alpha = 0.0;
  double B_eta = 0.0;
};

/// eta is rounded to a whole number of steps; it must satisfy 0 < eta < T.
inline BoundConstants bound_constants(std::span<const double> v_trace, const TimeGrid& grid, double eta) {
  if (!(eta > 0.0) || !(eta < grid.T)) throw ConfigError("verify.eta must satisfy 0 < eta < T");
  BoundConstants c;
  c.eta_steps = std::max(1, static_cast<int>(std::lround(eta / grid.dt())));
  if (c.eta_steps >= grid.N) throw ConfigError("verify.eta must be smaller than T");
  c.eta = c.eta_steps * grid.dt();
  c.C_alpha = 1.0 / std::tgamma(2.0 - grid.alpha);
  const double vnorm = l1_trapz(v_trace, grid.dt(), 0, static_cast<std::size_t>(c.eta_steps));
  if (!(vnorm > 0.0)) throw NumericalError("||v(x0, .)||_L1(0, eta) vanishes; B_eta is undefined");
  c.B_eta = 1.0 / vnorm;
  return c;
}

/// Sample mean of ||u(x0, ., omega)||_L1(0, T) over an ensemble.
inline double mean_trajectory_l1(const Ensemble& ens) {
  std::vector<double> norms(static_cast<std::size_t>(ens.realizations()));
  std::vector<double> row(static_cast<std::size_t>(ens.trajectories.cols()));
  for (Eigen::Index r = 0; r < ens.realizations(); ++r) {
    for (Eigen::Index n = 0; n < ens.trajectories.cols(); ++n) row[n] = ens.trajectories(r, n);
    norms[r] = l1_trapz(row, ens.grid.dt(), 0, row.size() - 1);
  }
  return pairwise_sum(norms) / static_cast<double>(norms.size());
}

/// E||u(x0,.)||_L1(0,T) without sampling. The discrete u(x0, t_n) is
/// sum_j h_{n-j+1} s_j with Gaussian s_j, hence normal with known mean mu and
/// sd sigma, and E|u| = mu erf(mu / (sigma sqrt 2)) + sigma sqrt(2/pi) exp(-mu^2 / 2 sigma^2).
inline double expected_trajectory_l1(const Vector& response, std::span<const double> g1, std::span<const double> g2,
                                     const TimeGrid& grid) {
  const int N = grid.N;
  if (response.size() != N + 1 || g1.size() != static_cast<std::size_t>(N) + 1 || g2.size() != g1.size()) {
    throw ConfigError("expected trajectory norm: response, g1 and g2 need N+1 samples");
  }
  std::vector<double> mean_abs(static_cast<std::size_t>(N) + 1, 0.0);
  for (int n = 1; n <= N; ++n) {
    double mu = 0.0, var = 0.0;
    for (int j = 1; j <= n; ++j) {
      const double h = response[n - j + 1];
      mu += h * g1[j];
      var += h * h * g2[j] * g2[j] / grid.dt();
    }
    const double sd = std::sqrt(var);
    if (sd == 0.0) {
      mean_abs[n] = std::abs(mu);
    } else {
      const double z = mu / (sd * std::sqrt(2.0));
      mean_abs[n] = mu * std::erf(z) + sd * std::sqrt(2.0 / std::numbers::pi) * std::exp(-z * z);
    }
  }
  return trapz(mean_abs, grid.dt(), 0, static_cast<std::size_t>(N));
}

/// ||g1||_L1(0,T-eta) <= C_alpha B_eta T^{1-alpha} E||u(x0,.)||_L1(0,T), g1 of one sign.
inline BoundEntry check_bound_a(std::span<const double> g1, double mean_u_l1, std::span<const double> v_trace,
                                const TimeGrid& grid, double eta, double tol = 0.02) {
  const int changes = detect_sign_changes(g1.subspan(1, g1.size() - 2));
  if (changes > 0) {
    throw ConfigError("g1 changes sign " + std::to_string(changes) + " times; use bound (b)");
  }
  const auto c = bound_constants(v_trace, grid, eta);
  const double lhs = l1_trapz(g1, grid.dt(), 0, static_cast<std::size_t>(grid.N - c.eta_steps));
  const double rhs = c.C_alpha * c.B_eta * std::pow(grid.T, 1.0 - grid.alpha) * mean_u_l1;
  return make_entry("bound_a", lhs, rhs, tol);
}

/// Bound (b) for g1 with `changes` > 0 sign changes:
///   ((B C_f T + 1)^{N+1} - 1) / (B C_f T) * (C_alpha B T^{1-alpha} E||u|| + 2 M eta).
inline BoundEntry check_bound_b(std::span<const double> g1, double mean_u_l1, std::span<const double> v_trace,
                                const TimeGrid& grid, double eta, double M_bound, double Cf, double tol = 0.02) {
  const int changes = detect_sign_changes(g1.subspan(1, g1.size() - 2));
  const auto c = bound_constants(v_trace, grid, eta);
  const double lhs = l1_trapz(g1, grid.dt(), 0, static_cast<std::size_t>(grid.N - c.eta_steps));
  const double x = c.B_eta * Cf * grid.T;
  const double factor = x > 0.0 ? (std::pow(x + 1.0, changes + 1) - 1.0) / x : static_cast<double>(changes + 1);
  const double inner = c.C_alpha * c.B_eta * std::pow(grid.T, 1.0 - grid.alpha) * mean_u_l1 + 2.0 * M_bound * c.eta;
  auto e = make_entry("bound_b", lhs, factor * inner, tol);
  e.note = "sign_changes=" + std::to_string(changes);
  return e;
}

/// ||g2||_L2(0,T-eta) <= eta^{1/2} B_eta ||V||^{1/2}_L1(0,T); V given at t_1..t_N.
inline BoundEntry check_bound_c(std::span<const double> g2, const Vector& V, std::span<const double> v_trace,
                                const TimeGrid& grid, double eta, double tol = 0.02) {
  const auto c = bound_constants(v_trace, grid, eta);
  const double lhs = l2_trapz(g2, grid.dt(), 0, static_cast<std::size_t>(grid.N - c.eta_steps));
  std::vector<double> vfull(static_cast<std::size_t>(grid.N) + 1, 0.0);
  for (int n = 1; n <= grid.N; ++n) vfull[n] = V[n - 1];
  const double vnorm = l1_trapz(vfull, grid.dt(), 0, vfull.size() - 1);
  const double rhs = std::sqrt(c.eta) * c.B_eta * std::sqrt(vnorm);
  return make_entry("bound_c", lhs, rhs, tol);
}

/// ||phi1||_L1(T1,T2) ||phi2||_L1(0,eta) <= || int_{T1}^t phi1(s) phi2(t-s) ds ||_L1(T1,T2+eta).
/// phi1 is sampled on T1 + j h over [T1, T2+eta], phi2 on j h over [0, T2-T1+eta].
inline BoundEntry check_reverse_convolution(std::span<const double> phi1, std::span<const double> phi2, double T1,
                                            double T2, double eta, double h, double tol = 0.02) {
  if (!(T2 > T1) || !(eta > 0.0) || !(h > 0.0)) throw ConfigError("reverse convolution: need T1 < T2, eta > 0, h > 0");
  const auto J = static_cast<std::size_t>(std::lround((T2 - T1 + eta) / h));
  const auto J2 = static_cast<std::size_t>(std::lround((T2 - T1) / h));
  const auto Je = static_cast<std::size_t>(std::lround(eta / h));
  if (phi1.size() != J + 1 || phi2.size() != J + 1) {
    throw ConfigError("reverse convolution: tables must cover their intervals at spacing h");
  }
  std::vector<double> conv(J + 1, 0.0), prod;
  for (std::size_t m = 1; m <= J; ++m) {
    prod.assign(m + 1, 0.0);
    for (std::size_t j = 0; j <= m; ++j) prod[j] = phi1[j] * phi2[m - j];
    conv[m] = trapz(prod, h, 0, m);
  }
  const double lhs = l1_trapz(phi1, h, 0, J2) * l1_trapz(phi2, h, 0, Je);
  const double rhs = l1_trapz(conv, h, 0, J);
  auto e = make_entry("reverse_convolution", lhs, rhs, tol);
  bool phi2_nonneg = true;
  for (double v : phi2) phi2_nonneg = phi2_nonneg && v >= 0.0;
  const bool phi1_signed = detect_sign_changes(phi1) == 0;
  if (!phi2_nonneg || !phi1_signed) {
    e.applicable = false;
    e.pass = true;
    e.note = "hypotheses violated (phi2 >= 0 and single-signed phi1 required); not asserted";
  }
  return e;
}

struct BoundsReport {
  BoundConstants constants;
  double M_bound = 0.0;
  double Cf = 0.0;
  int sign_changes = 0;
  std::vector<BoundEntry> entries;

  bool all_pass() const {
    for (const auto& e : entries)
      if (!e.pass) return false;
    return true;
  }

  void write_text(std::ostream& out) const {
    out << std::setprecision(8);
    out << "eta = " << constants.eta << " (" << constants.eta_steps << " steps)\n"
        << "C_alpha = " << constants.C_alpha << "\n"
        << "B_eta = " << constants.B_eta << "\n"
        << "M = " << M_bound << ", C_f = " << Cf << ", sign changes of g1 = " << sign_changes << "\n";
    for (const auto& e : entries) {
      out << (e.pass ? "PASS " : "FAIL ") << e.name << ": " << e.lhs << " <= " << e.rhs;
      if (!e.note.empty()) out << "  [" << e.note << "]";
      out << "\n";
    }
  }

  Table table(RunHeader header) const {
    Table tab;
    tab.header = std::move(header);
    for (const auto& e : entries) tab.comments.push_back(e.name + (e.note.empty() ? "" : ": " + e.note));
    std::vector<double> idx, lhs, rhs, margin, pass;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      idx.push_back(static_cast<double>(i));
      lhs.push_back(entries[i].lhs);
      rhs.push_back(entries[i].rhs);
      margin.push_back(entries[i].margin());
      pass.push_back(entries[i].pass ? 1.0 : 0.0);
    }
    tab.add("index", std::move(idx));
    tab.add("lhs", std::move(lhs));
    tab.add("rhs", std::move(rhs));
    tab.add("margin", std::move(margin));
    tab.add("pass", std::move(pass));
    return tab;
  }

  /// "name, lhs, rhs, margin, pass" rows.
  void write_csv(std::ostream& out, const RunHeader& header) const {
    out << header.line() << "\nname, lhs, rhs, margin, pass\n"
        << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& e : entries) {
      out << e.name << ", " << e.lhs << ", " << e.rhs << ", " << e.margin() << ", " << (e.pass ? 1 : 0) << "\n";
    }
  }
};

/// Runs bound (a) or (b) for g1 (chosen by its sign changes) and bound (c) for g2.
/// g1, g2 and v_trace are sampled at t_0..t_N; V at t_1..t_N.
inline BoundsReport verify_bounds(std::span<const double> g1, std::span<const double> g2, double mean_u_l1,
                                  const Vector& V, std::span<const double> v_trace, const TimeGrid& grid, double eta,
                                  double M_bound, double Cf, double tol = 0.02) {
  BoundsReport rep;
  rep.constants = bound_constants(v_trace, grid, eta);
  rep.M_bound = M_bound;
  rep.Cf = Cf;
  rep.sign_changes = detect_sign_changes(g1.subspan(1, g1.size() - 2));
  if (rep.sign_changes == 0) rep.entries.push_back(check_bound_a(g1, mean_u_l1, v_trace, grid, eta, tol));
  else rep.entries.push_back(check_bound_b(g1, mean_u_l1, v_trace, grid, eta, M_bound, Cf, tol));
  rep.entries.push_back(check_bound_c(g2, V, v_trace, grid, eta, tol));
  return rep;
}

}  // namespace fsi
