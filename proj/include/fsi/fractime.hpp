#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <concepts>
#include <optional>
#include <span>
#include <sstream>
#include <vector>

#include "fsi/error.hpp"
#include "fsi/fem.hpp"

namespace fsi {

/// Uniform time mesh 0 = t_0 < ... < t_N = T for a fractional order
/// alpha in (1/2, 1).
struct TimeGrid {
  double T = 1.0;
  int N = 100;
  double alpha = 0.75;

  TimeGrid() = default;
  TimeGrid(double final_time, int steps, double order) : T(final_time), N(steps), alpha(order) {
    validate();
  }

  void validate() const {
    if (!(T > 0.0)) throw ConfigError("time.T must be positive");
    if (N < 2) throw ConfigError("time.steps must be >= 2");
    if (!(alpha > 0.5 && alpha < 1.0)) throw ConfigError("time.alpha must lie in (1/2, 1)");
  }

  double dt() const { return T / N; }
  double t(int n) const { return T * n / N; }

  std::vector<double> times() const {
    std::vector<double> out(static_cast<std::size_t>(N) + 1);
    for (int n = 0; n <= N; ++n) out[n] = t(n);
    return out;
  }
};

/// L1 weights b_{n,k} = dt^{-alpha} / Gamma(2 - alpha) * [(n-k)^{1-alpha} - (n-k-1)^{1-alpha}].
/// On a uniform grid they depend on the lag n - k only, so one row is stored.
class L1Coefficients {
 public:
  explicit L1Coefficients(const TimeGrid& grid) : N_(grid.N) {
    grid.validate();
    const double beta = 1.0 - grid.alpha;
    scale_ = std::pow(grid.dt(), -grid.alpha) / std::tgamma(2.0 - grid.alpha);
    lag_.assign(static_cast<std::size_t>(N_) + 2, 0.0);
    for (int d = 1; d <= N_ + 1; ++d) {
      lag_[d] = std::pow(static_cast<double>(d), beta) - std::pow(static_cast<double>(d - 1), beta);
    }
  }

  int steps() const { return N_; }
  double scale() const { return scale_; }

  /// b_{n,k}, 1 <= n <= N, 0 <= k <= n-1.
  double b(int n, int k) const { return scale_ * lag_[n - k]; }
  /// b as a function of the lag d = n - k >= 1.
  double by_lag(int d) const { return scale_ * lag_[d]; }
  /// The implicit weight b_{n,n-1}, constant in n.
  double leading() const { return scale_; }

 private:
  int N_;
  double scale_ = 0.0;
  std::vector<double> lag_;
};

/// L1 approximation of the Caputo derivative at t_n from psi(t_0..t_n).
inline double caputo_apply(const L1Coefficients& coeffs, std::span<const double> history) {
  if (history.size() < 2) throw ConfigError("caputo_apply needs at least psi(t_0), psi(t_1)");
  const int n = static_cast<int>(history.size()) - 1;
  if (n > coeffs.steps()) throw ConfigError("caputo_apply history longer than the time grid");
  double acc = coeffs.b(n, n - 1) * history[n] - coeffs.b(n, 0) * history[0];
  for (int k = 1; k <= n - 1; ++k) acc += (coeffs.b(n, k - 1) - coeffs.b(n, k)) * history[k];
  return acc;
}

/// Product-trapezoid weights for the Riemann-Liouville integral of order
/// beta: row n gives (I^beta psi)(t_n) = sum_j W(n, j) psi(t_j) for the
/// piecewise-linear interpolant of psi. Exact on piecewise-linear data.
inline Matrix frac_integral_weights(const TimeGrid& grid, double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("fractional integral order must lie in (0, 1)");
  const int N = grid.N;
  const double c = std::pow(grid.dt(), beta) / std::tgamma(beta + 2.0);
  auto p = [beta](int k) { return k <= 0 ? 0.0 : std::pow(static_cast<double>(k), beta + 1.0); };
  Matrix W = Matrix::Zero(N + 1, N + 1);
  for (int n = 1; n <= N; ++n) {
    W(n, 0) = c * (p(n - 1) - (n - 1 - beta) * std::pow(static_cast<double>(n), beta));
    for (int j = 1; j < n; ++j) W(n, j) = c * (p(n - j + 1) - 2.0 * p(n - j) + p(n - j - 1));
    W(n, n) = c;
  }
  return W;
}

inline Vector frac_integral_series(const TimeGrid& grid, double beta, std::span<const double> series) {
  if (series.size() != static_cast<std::size_t>(grid.N) + 1) {
    throw ConfigError("fractional integral series must have N+1 samples");
  }
  const Matrix W = frac_integral_weights(grid, beta);
  const Eigen::Map<const Vector> psi(series.data(), static_cast<Eigen::Index>(series.size()));
  return W * psi;
}

/// Spatial system consumed by the L1 time stepper: mass application,
/// solves with (b_{n,n-1} M + S) and the point observation functional.
template <class S>
concept L1System = requires(const S& s, const Vector& v) {
  { s.size() } -> std::convertible_to<Eigen::Index>;
  { s.apply_mass(v) } -> std::convertible_to<Vector>;
  { s.solve(v) } -> std::convertible_to<Vector>;
  { s.observe(v) } -> std::convertible_to<double>;
};

/// Fine-grid FEM system with the time-stepping matrix factored once.
class FineSystem {
 public:
  FineSystem(const OperatorPair& ops, const TimeGrid& grid, PointWeights observation)
      : mass_(ops.mass), obs_(std::move(observation)) {
    const L1Coefficients b(grid);
    SparseMatrix a = b.leading() * ops.mass + ops.stiffness;
    solver_.factor(a);
  }

  Eigen::Index size() const { return mass_.rows(); }
  Vector apply_mass(const Vector& v) const { return mass_ * v; }
  Vector solve(const Vector& rhs) const { return solver_.solve(rhs); }
  double observe(const Vector& v) const { return obs_.apply(v); }

 private:
  SparseMatrix mass_;
  SpdSolver solver_;
  PointWeights obs_;
};

/// Scalar fractional ODE  d^alpha y + lambda y = F  seen as a 1x1 system.
class ScalarSystem {
 public:
  ScalarSystem(double lambda, const TimeGrid& grid) : denom_(L1Coefficients(grid).leading() + lambda) {}
  Eigen::Index size() const { return 1; }
  Vector apply_mass(const Vector& v) const { return v; }
  Vector solve(const Vector& rhs) const { return rhs / denom_; }
  double observe(const Vector& v) const { return v[0]; }

 private:
  double denom_;
};

/// Marches the L1 scheme
///   (b_{n,n-1} M + S) x_n = M ( s_n * load + b_{n,0} x_0
///                               + sum_{k=1}^{n-1} (b_{n,k} - b_{n,k-1}) x_k ),
/// n = 1..N. Column n of the result is x_n; column 0 is x0.
template <L1System System>
Matrix l1_march(const System& sys, const TimeGrid& grid, const Vector& x0, const Vector& load,
                std::span<const double> forcing) {
  const int N = grid.N;
  const Eigen::Index m = sys.size();
  if (x0.size() != m || load.size() != m) throw ConfigError("L1 march: vector sizes do not match system");
  if (forcing.size() != static_cast<std::size_t>(N) + 1) {
    throw ConfigError("L1 march: forcing must be sampled at t_0..t_N");
  }
  const L1Coefficients b(grid);
  // hist_w[N-1-d] = b_{n,n-d} - b_{n,n-d-1} for lag d = 1..N-1, stored
  // reversed so that step n uses the trailing n-1 entries against x_1..x_{n-1}.
  Vector hist_w = Vector::Zero(std::max(N - 1, 0));
  for (int d = 1; d <= N - 1; ++d) hist_w[N - 1 - d] = b.by_lag(d) - b.by_lag(d + 1);

  Matrix X(m, N + 1);
  X.col(0) = x0;
  const bool has_initial = x0.squaredNorm() > 0.0;
  Vector rhs(m);
  for (int n = 1; n <= N; ++n) {
    rhs = forcing[n] * load;
    if (has_initial) rhs += b.b(n, 0) * x0;
    if (n >= 2) rhs.noalias() += X.middleCols(1, n - 1) * hist_w.tail(n - 1);
    X.col(n) = sys.solve(sys.apply_mass(rhs));
  }
  return X;
}

/// Deterministic problem with zero source and initial value f: returns the
/// interior nodal slices v(., t_0..t_N), column 0 being f itself.
template <L1System System>
Matrix step_deterministic_v(const System& sys, const TimeGrid& grid, const Vector& f) {
  const std::vector<double> zero(static_cast<std::size_t>(grid.N) + 1, 0.0);
  return l1_march(sys, grid, f, Vector::Zero(f.size()), zero);
}

template <L1System System>
Vector observe_slices(const System& sys, const Matrix& slices) {
  Vector out(slices.cols());
  for (Eigen::Index n = 0; n < slices.cols(); ++n) out[n] = sys.observe(slices.col(n));
  return out;
}

struct StochasticTrace {
  Vector trace;                     // u(x0, t_0..t_N)
  std::optional<Vector> final_field;  // u(., t_N), when requested
};

/// Combined forcing s_n = g1(t_n) + g2(t_n) * xi_n / sqrt(dt) for n = 1..N,
/// with s_0 = 0 (unused by the scheme).
inline std::vector<double> stochastic_forcing(const TimeGrid& grid, std::span<const double> g1,
                                              std::span<const double> g2, std::span<const double> noise) {
  const auto N = static_cast<std::size_t>(grid.N);
  if (g1.size() != N || g2.size() != N || noise.size() != N) {
    throw ConfigError("g1, g2 and noise must each have N samples at t_1..t_N");
  }
  const double inv_sqrt_dt = 1.0 / std::sqrt(grid.dt());
  std::vector<double> s(N + 1, 0.0);
  for (std::size_t n = 1; n <= N; ++n) s[n] = g1[n - 1] + g2[n - 1] * inv_sqrt_dt * noise[n - 1];
  return s;
}

/// Stochastic scheme with u_0 = 0, source s_n f and white noise xi_n / sqrt(dt).
template <L1System System>
StochasticTrace step_stochastic_u(const System& sys, const TimeGrid& grid, const Vector& f,
                                  std::span<const double> g1, std::span<const double> g2,
                                  std::span<const double> noise, bool keep_final = false) {
  const auto s = stochastic_forcing(grid, g1, g2, noise);
  const Matrix X = l1_march(sys, grid, Vector::Zero(f.size()), f, s);
  StochasticTrace out{observe_slices(sys, X), std::nullopt};
  if (keep_final) out.final_field = X.col(grid.N);
  return out;
}

/// Point response h_1..h_N of the stochastic scheme to a unit source at the
/// first step. The scheme is linear and shift-invariant on a uniform grid,
/// so u(x0, t_n) = sum_{j=1}^{n} h_{n-j+1} s_j for any forcing s.
template <L1System System>
Vector impulse_response(const System& sys, const TimeGrid& grid, const Vector& f) {
  std::vector<double> s(static_cast<std::size_t>(grid.N) + 1, 0.0);
  s[1] = 1.0;
  const Matrix X = l1_march(sys, grid, Vector::Zero(f.size()), f, s);
  return observe_slices(sys, X);  // entry 0 is u_0 = 0, entry n is h_n
}

/// Discrete convolution of a forcing sequence with an impulse response.
inline Vector convolve_response(const Vector& response, std::span<const double> forcing) {
  const Eigen::Index N = response.size() - 1;
  Vector u = Vector::Zero(N + 1);
  for (Eigen::Index n = 1; n <= N; ++n) {
    double acc = 0.0;
    for (Eigen::Index j = 1; j <= n; ++j) acc += response[n - j + 1] * forcing[j];
    u[n] = acc;
  }
  return u;
}

}  // namespace fsi
