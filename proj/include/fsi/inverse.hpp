#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <sstream>
#include <span>
#include <string>

#include "fsi/error.hpp"
#include "fsi/fractime.hpp"
#include "fsi/io.hpp"
#include "fsi/moments.hpp"
#include "fsi/stochastic.hpp"

namespace fsi {

/// Lower-triangular Volterra matrices of the trapezoid-discretized moment
/// equations A1 g1 = E, A2 (g2^2) = V. Row i corresponds to t_{i+1}, column
/// j to the unknown at t_j, so only [0, T - dt] is recoverable.
struct VolterraSystem {
  Matrix A1;
  Matrix A2;
  Vector v_trace;  // v(x0, t_0..t_N)
  double dt = 0.0;

  Eigen::Index size() const { return A1.rows(); }
};

inline VolterraSystem assemble_volterra(std::span<const double> v_trace, const TimeGrid& grid) {
  const int N = grid.N;
  if (v_trace.size() != static_cast<std::size_t>(N) + 1) throw ConfigError("v trace must have N+1 samples");
  if (v_trace[0] != 0.0) {
    throw ConfigError("v(x0, 0) must be zero: the observation point has to lie outside supp f");
  }
  if (!(v_trace[1] > 0.0)) {
    std::ostringstream msg;
    msg << "v(x0, t_1) = " << v_trace[1]
        << " is not positive; the Volterra system is singular. Refine the time step or move x0 closer to supp f";
    throw NumericalError(msg.str());
  }
  const double dt = grid.dt();
  VolterraSystem sys{Matrix::Zero(N, N), Matrix::Zero(N, N),
                     Eigen::Map<const Vector>(v_trace.data(), N + 1), dt};
  for (int i = 0; i < N; ++i) {
    const double v = v_trace[i + 1];
    sys.A1(i, 0) = 0.5 * dt * v;
    sys.A2(i, 0) = 0.5 * dt * v * v;
    for (int j = 1; j <= i; ++j) {
      const double w = v_trace[i + 1 - j];
      sys.A1(i, j) = dt * w;
      sys.A2(i, j) = dt * w * w;
    }
  }
  return sys;
}

/// Smallest singular value of an invertible lower-triangular matrix, as
/// 1 / sqrt(lambda_max((A^T A)^{-1})) by power iteration with triangular
/// solves. Works when sigma_min is far below machine precision relative
/// to sigma_max, where a direct SVD loses all relative accuracy.
inline double smallest_singular_value(const Matrix& A, int max_iter = 20000, double tol = 1e-15) {
  const Eigen::Index n = A.rows();
  Vector x = Vector::Ones(n).normalized();
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vector y = A.triangularView<Eigen::Lower>().solve(x);
    Vector z = A.transpose().triangularView<Eigen::Upper>().solve(y);
    const double next = z.norm();
    if (!std::isfinite(next)) throw NumericalError("smallest singular value: triangular solve overflowed");
    x = z / next;
    if (it > 2 && std::abs(next - lambda) <= tol * next) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return 1.0 / std::sqrt(lambda);
}

/// rho(B) for B = I - (A^T A + gamma I)^{-1} A^T A. B is similar to
/// gamma (A^T A + gamma I)^{-1}, so rho = gamma / (sigma_min^2 + gamma).
/// `gap` = 1 - rho = sigma_min^2 / (sigma_min^2 + gamma) is kept separately
/// because rho rounds to 1.0 in double precision for severely
/// ill-conditioned A even though it is strictly below one.
struct SpectralRadius {
  double value = 0.0;
  double gap = 1.0;
  double sigma_min = 0.0;

  bool contractive() const { return gap > 0.0 && value <= 1.0; }
};

inline SpectralRadius spectral_radius(const Matrix& A, double gamma) {
  if (!(gamma > 0.0)) throw ConfigError("regularization parameter gamma must be positive");
  const double s = smallest_singular_value(A);
  const double s2 = s * s;
  return {gamma / (s2 + gamma), s2 / (s2 + gamma), s};
}

/// Independent estimate of rho(B) by power iteration on B itself, applied
/// as gamma (A^T A + gamma I)^{-1} x (B is symmetric positive definite).
inline double spectral_radius_power(const Matrix& A, double gamma, int max_iter = 5000, double tol = 1e-14) {
  const Eigen::Index n = A.cols();
  const Matrix K = A.transpose() * A + gamma * Matrix::Identity(n, n);
  const Eigen::LLT<Matrix> llt(K);
  if (llt.info() != Eigen::Success) throw NumericalError("power iteration: normal matrix factorization failed");
  Vector x = Vector::LinSpaced(n, 1.0, 2.0).normalized();
  double rq = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    const Vector y = gamma * llt.solve(x);
    const double next = x.dot(y);
    x = y.normalized();
    if (it > 2 && std::abs(next - rq) <= tol) return next;
    rq = next;
  }
  return rq;
}

/// Default gamma = gamma_rel * ||A^T A||_inf.
inline double relative_gamma(const Matrix& A, double gamma_rel) {
  const Matrix K = A.transpose() * A;
  return gamma_rel * K.cwiseAbs().rowwise().sum().maxCoeff();
}

struct LMOptions {
  double gamma1 = 0.0;  // absolute; <= 0 selects gamma_rel scaling
  double gamma2 = 0.0;
  double gamma_rel = 1e-8;
  int max_iter = 100000;
  double stop_tol = 1e-10;
};

struct LMTrace {
  Vector g;
  int iterations = 0;
  double last_change = 0.0;
  double residual = 0.0;  // ||A g - d||_2
};

/// g_{k+1} = g_k + (A^T A + gamma I)^{-1} A^T (d - A g_k) from g_0 = 0,
/// written as g_{k+1} = B g_k + c. Stops when ||g_{k+1} - g_k||_inf < stop_tol.
inline LMTrace lm_solve(const Matrix& A, const Vector& d, double gamma, int max_iter, double stop_tol) {
  if (!(gamma > 0.0)) throw ConfigError("regularization parameter gamma must be positive");
  const Eigen::Index n = A.cols();
  const Matrix K = A.transpose() * A + gamma * Matrix::Identity(n, n);
  const Eigen::LLT<Matrix> llt(K);
  if (llt.info() != Eigen::Success) throw NumericalError("regularized normal equations are not SPD");
  const Matrix P = llt.solve(A.transpose());
  const Matrix B = Matrix::Identity(n, n) - P * A;
  const Vector c = P * d;
  LMTrace tr{Vector::Zero(n)};
  Vector next(n);
  for (int k = 0; k < max_iter; ++k) {
    next.noalias() = B * tr.g;
    next += c;
    tr.last_change = (next - tr.g).lpNorm<Eigen::Infinity>();
    tr.g.swap(next);
    tr.iterations = k + 1;
    if (!std::isfinite(tr.last_change)) throw NumericalError("LM iteration diverged");
    if (tr.last_change < stop_tol) break;
  }
  tr.residual = (A * tr.g - d).norm();
  return tr;
}

/// Reconstruction of g1 and g2^2 on t_0..t_{N-1}.
struct ReconstructionResult {
  Vector g1;
  Vector g2sq;
  LMTrace trace1, trace2;
  double gamma1 = 0.0, gamma2 = 0.0;
  SpectralRadius rho1, rho2;
  double rho1_power = 0.0, rho2_power = 0.0;
};

inline ReconstructionResult lm_iterate(const VolterraSystem& sys, const Vector& E_delta, const Vector& V_delta,
                                       const LMOptions& opt = {}) {
  if (sys.size() < 2) throw ConfigError("inversion needs N >= 2");
  if (E_delta.size() != sys.size() || V_delta.size() != sys.size()) {
    throw ConfigError("moment vectors do not match the Volterra system size");
  }
  ReconstructionResult res;
  res.gamma1 = opt.gamma1 > 0.0 ? opt.gamma1 : relative_gamma(sys.A1, opt.gamma_rel);
  res.gamma2 = opt.gamma2 > 0.0 ? opt.gamma2 : relative_gamma(sys.A2, opt.gamma_rel);
  res.rho1 = spectral_radius(sys.A1, res.gamma1);
  res.rho2 = spectral_radius(sys.A2, res.gamma2);
  if (!res.rho1.contractive() || !res.rho2.contractive()) {
    throw NumericalError("LM iteration matrix is not contractive (spectral radius >= 1)");
  }
  res.rho1_power = spectral_radius_power(sys.A1, res.gamma1);
  res.rho2_power = spectral_radius_power(sys.A2, res.gamma2);
  res.trace1 = lm_solve(sys.A1, E_delta, res.gamma1, opt.max_iter, opt.stop_tol);
  res.trace2 = lm_solve(sys.A2, V_delta, res.gamma2, opt.max_iter, opt.stop_tol);
  res.g1 = res.trace1.g;
  res.g2sq = res.trace2.g;
  return res;
}

struct G2Magnitude {
  Vector values;
  int clipped = 0;
};

/// |g2| = sqrt(max(g2^2, 0)); negative entries (regularization leakage) are clipped.
inline G2Magnitude reconstruct_g2_abs(const Vector& g2sq) {
  G2Magnitude out{Vector(g2sq.size()), 0};
  for (Eigen::Index i = 0; i < g2sq.size(); ++i) {
    if (g2sq[i] < 0.0) ++out.clipped;
    out.values[i] = std::sqrt(std::max(g2sq[i], 0.0));
  }
  return out;
}

/// Writes "t, g1_rec, g2abs_rec[, g1_true, g2abs_true]" over t_0..t_{N-1}.
inline void write_reconstruction(const std::string& path, const ReconstructionResult& res, const TimeGrid& grid,
                                 RunHeader header, const SourceTimeSpec* truth = nullptr) {
  const auto g2abs = reconstruct_g2_abs(res.g2sq);
  Table tab;
  header.set("alpha", grid.alpha).set("T", grid.T).set("N", grid.N);
  header.set("gamma1", res.gamma1).set("gamma2", res.gamma2);
  header.set("iterations1", res.trace1.iterations).set("iterations2", res.trace2.iterations);
  header.set("clipped", g2abs.clipped);
  tab.header = std::move(header);
  std::vector<double> t, a, b, ta, tb;
  for (int n = 0; n < grid.N; ++n) {
    t.push_back(grid.t(n));
    a.push_back(res.g1[n]);
    b.push_back(g2abs.values[n]);
    if (truth) {
      ta.push_back((truth->g1)(grid.t(n)));
      tb.push_back(std::abs((truth->g2)(grid.t(n))));
    }
  }
  tab.add("t", std::move(t));
  tab.add("g1_rec", std::move(a));
  tab.add("g2abs_rec", std::move(b));
  if (truth) {
    tab.add("g1_true", std::move(ta));
    tab.add("g2abs_true", std::move(tb));
  }
  tab.write_file(path);
}

/// ||a - b||_2 / ||b||_2.
inline double relative_l2(const Vector& a, const Vector& b) { return (a - b).norm() / b.norm(); }

}  // namespace fsi
