#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "fsi/error.hpp"
#include "fsi/fractime.hpp"
#include "fsi/io.hpp"
#include "fsi/parallel.hpp"

namespace fsi {

namespace signals {

inline double smooth_g1(double t) {
  return t + std::sin(2.0 * std::numbers::pi * t) + std::sin(3.0 * std::numbers::pi * t);
}
inline double smooth_g2(double t) {
  return 0.5 * t + std::sin(std::numbers::pi * t) - std::sin(2.0 * std::numbers::pi * t);
}
inline double nonsmooth_g1(double t) {
  const double wave = 0.8 * std::sin(3.0 * std::numbers::pi * t);
  return (t >= 1.0 / 3.0 && t < 2.0 / 3.0) ? 0.9 + wave : 1.5 + wave;
}
inline double nonsmooth_g2(double t) {
  if (t < 1.0 / 3.0) return 1.0;
  if (t < 2.0 / 3.0) return -2.0;
  return 1.5;
}

}  // namespace signals

/// Named time profile for g1 or g2.
///   smooth | nonsmooth       built-in test signals (role dependent)
///   zero | const:<c>         constants
///   sin:<k>                  sin(k pi t)
///   table:<path>             "t, value" file, linearly interpolated
class TimeFunction {
 public:
  TimeFunction() : name_("zero"), fn_([](double) { return 0.0; }) {}
  TimeFunction(std::string name, std::function<double(double)> fn) : name_(std::move(name)), fn_(std::move(fn)) {}

  static TimeFunction parse(const std::string& spec, bool is_g2) {
    if (spec == "smooth") return {spec, is_g2 ? signals::smooth_g2 : signals::smooth_g1};
    if (spec == "nonsmooth") return {spec, is_g2 ? signals::nonsmooth_g2 : signals::nonsmooth_g1};
    if (spec == "zero") return {spec, [](double) { return 0.0; }};
    const auto colon = spec.find(':');
    const std::string kind = spec.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
    try {
      if (kind == "const") {
        const double c = std::stod(arg);
        return {spec, [c](double) { return c; }};
      }
      if (kind == "sin") {
        const double k = std::stod(arg);
        return {spec, [k](double t) { return std::sin(k * std::numbers::pi * t); }};
      }
    } catch (const std::logic_error&) {
      throw ConfigError("bad numeric argument in time function '" + spec + "'");
    }
    if (kind == "table") {
      const Table tab = Table::read_file(arg, "time table");
      if (tab.names.size() < 2 || tab.rows() < 2) throw ConfigError("time table needs columns t, value");
      auto t = std::make_shared<std::vector<double>>(tab.columns[0]);
      auto v = std::make_shared<std::vector<double>>(tab.columns[1]);
      return {spec, [t, v](double x) {
                const auto& ts = *t;
                if (x <= ts.front()) return v->front();
                if (x >= ts.back()) return v->back();
                const auto it = std::upper_bound(ts.begin(), ts.end(), x);
                const auto k = static_cast<std::size_t>(it - ts.begin());
                const double w = (x - ts[k - 1]) / (ts[k] - ts[k - 1]);
                return (1.0 - w) * (*v)[k - 1] + w * (*v)[k];
              }};
    }
    throw ConfigError("unknown time function '" + spec + "'");
  }

  double operator()(double t) const { return fn_(t); }
  const std::string& name() const { return name_; }

  /// Samples at t_from..t_to inclusive.
  std::vector<double> samples(const TimeGrid& grid, int from, int to) const {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(to - from + 1));
    for (int n = from; n <= to; ++n) out.push_back(fn_(grid.t(n)));
    return out;
  }

 private:
  std::string name_;
  std::function<double(double)> fn_;
};

/// Time components of the random source f(x)[g1(t) + g2(t) dW/dt].
struct SourceTimeSpec {
  TimeFunction g1;
  TimeFunction g2;
  double M_bound = 10.0;

  void validate(const TimeGrid& grid) const {
    for (int n = 0; n <= grid.N; ++n) {
      const double a = g1(grid.t(n)), b = g2(grid.t(n));
      if (!std::isfinite(a) || !std::isfinite(b)) throw ConfigError("g1/g2 samples must be finite");
      if (std::abs(a) > M_bound) throw ConfigError("g1 exceeds the declared bound signal.M_bound");
    }
  }
};

/// Independent substream for (seed, index, purpose); the same triple always
/// yields the same sequence regardless of which worker draws it.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t index, std::uint32_t purpose = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), purpose};
  return std::mt19937_64(seq);
}

namespace stream_purpose {
constexpr std::uint32_t brownian = 1;
constexpr std::uint32_t moment_noise = 2;
}  // namespace stream_purpose

/// N i.i.d. standard normal draws; dW/dt(t_n) is approximated by xi_n / sqrt(dt).
template <class Engine>
std::vector<double> brownian_increments(const TimeGrid& grid, Engine& stream) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> xi(static_cast<std::size_t>(grid.N));
  for (auto& x : xi) x = normal(stream);
  return xi;
}

enum class EnsembleEngine {
  direct,   // full L1 recursion for every realization
  impulse,  // one point-response solve, then per-realization convolution
};

inline EnsembleEngine parse_engine(const std::string& s) {
  if (s == "direct") return EnsembleEngine::direct;
  if (s == "impulse") return EnsembleEngine::impulse;
  throw ConfigError("unknown ensemble engine '" + s + "' (expected direct|impulse)");
}

struct EnsembleOptions {
  EnsembleEngine engine = EnsembleEngine::impulse;
  unsigned threads = default_threads();
  bool keep_final_fields = false;  // direct engine only
};

/// Single-point trajectories u(x0, t_n, omega_r), one row per realization.
struct Ensemble {
  TimeGrid grid;
  std::uint64_t seed = 0;
  std::string solver_tag = "fem";
  Matrix trajectories;                // R x (N+1)
  std::vector<Vector> final_fields;   // optional u(., T) per realization

  Eigen::Index realizations() const { return trajectories.rows(); }
};

/// Dense lower-triangular Toeplitz H with H(n, j) = h_{n-j+1} for 1 <= j <= n,
/// so that trajectories = forcing * H^T for a block of forcing rows.
inline Matrix response_toeplitz(const Vector& response) {
  const Eigen::Index C = response.size();
  Matrix H = Matrix::Zero(C, C);
  for (Eigen::Index n = 1; n < C; ++n)
    for (Eigen::Index j = 1; j <= n; ++j) H(n, j) = response[n - j + 1];
  return H;
}

/// Realizations first .. first + count - 1; realization r always draws from
/// substream (seed, r), so a run split into blocks reproduces the full run.
template <L1System System>
Ensemble run_ensemble(const System& sys, const TimeGrid& grid, const Vector& load, const SourceTimeSpec& spec,
                      int realizations, std::uint64_t seed, const EnsembleOptions& opt = {},
                      std::string solver_tag = "fem", std::uint64_t first = 0) {
  if (realizations < 1) throw ConfigError("realizations must be >= 1");
  spec.validate(grid);
  const auto g1 = spec.g1.samples(grid, 1, grid.N);
  const auto g2 = spec.g2.samples(grid, 1, grid.N);
  Ensemble ens{grid, seed, std::move(solver_tag), Matrix::Zero(realizations, grid.N + 1), {}};

  if (opt.engine == EnsembleEngine::impulse) {
    const Matrix Ht = response_toeplitz(impulse_response(sys, grid, load)).transpose();
    constexpr Eigen::Index block = 512;
    Matrix S(std::min<Eigen::Index>(block, realizations), grid.N + 1);
    for (Eigen::Index b0 = 0; b0 < realizations; b0 += block) {
      const Eigen::Index nb = std::min<Eigen::Index>(block, realizations - b0);
      parallel_for(static_cast<std::size_t>(nb), opt.threads, [&](std::size_t i) {
        auto stream = make_stream(seed, first + static_cast<std::uint64_t>(b0) + i, stream_purpose::brownian);
        const auto s = stochastic_forcing(grid, g1, g2, brownian_increments(grid, stream));
        S.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Vector>(s.data(), grid.N + 1).transpose();
      });
      ens.trajectories.middleRows(b0, nb).noalias() = S.topRows(nb) * Ht;
    }
    return ens;
  }

  if (opt.keep_final_fields) ens.final_fields.resize(static_cast<std::size_t>(realizations));
  parallel_for(static_cast<std::size_t>(realizations), opt.threads, [&](std::size_t r) {
    auto stream = make_stream(seed, first + r, stream_purpose::brownian);
    const auto xi = brownian_increments(grid, stream);
    try {
      auto tr = step_stochastic_u(sys, grid, load, g1, g2, xi, opt.keep_final_fields);
      ens.trajectories.row(static_cast<Eigen::Index>(r)) = tr.trace.transpose();
      if (opt.keep_final_fields) ens.final_fields[r] = std::move(*tr.final_field);
    } catch (const NumericalError& e) {
      throw NumericalError("realization " + std::to_string(first + r) + ": " + e.what());
    }
  });
  return ens;
}

inline RunHeader ensemble_header(const Ensemble& ens) {
  RunHeader h;
  h.set("alpha", ens.grid.alpha).set("T", ens.grid.T).set("N", ens.grid.N).set("seed", ens.seed);
  h.set("solver", ens.solver_tag).set("R", ens.realizations());
  return h;
}

/// Delimited export: header row "t, r0, r1, ..."; at most max_columns
/// realizations are written (evenly thinned) when max_columns > 0.
inline void write_ensemble_csv(const std::string& path, const Ensemble& ens, RunHeader header, int max_columns = 0) {
  const Eigen::Index R = ens.realizations();
  Eigen::Index stride = 1;
  if (max_columns > 0 && R > max_columns) stride = (R + max_columns - 1) / max_columns;
  Table tab;
  tab.header = std::move(header);
  tab.add("t", ens.grid.times());
  for (Eigen::Index r = 0; r < R; r += stride) {
    std::vector<double> col(ens.trajectories.cols());
    for (Eigen::Index n = 0; n < ens.trajectories.cols(); ++n) col[n] = ens.trajectories(r, n);
    tab.add("r" + std::to_string(r), std::move(col));
  }
  tab.write_file(path);
}

namespace detail {
constexpr char kEnsembleMagic[8] = {'F', 'S', 'I', 'E', 'N', 'S', '0', '1'};
}

/// Compact binary form: magic, provenance line, R, N+1, row-major doubles.
inline void write_ensemble_binary(const std::string& path, const Ensemble& ens, const RunHeader& header) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out.write(detail::kEnsembleMagic, sizeof(detail::kEnsembleMagic));
  const std::string line = header.line();
  const auto len = static_cast<std::uint32_t>(line.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(line.data(), len);
  const std::int64_t R = ens.realizations(), C = ens.trajectories.cols();
  out.write(reinterpret_cast<const char*>(&R), sizeof(R));
  out.write(reinterpret_cast<const char*>(&C), sizeof(C));
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = ens.trajectories;
  out.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(sizeof(double) * rm.size()));
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

inline Ensemble read_ensemble_binary(const std::string& path, RunHeader* header_out = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open ensemble '" + path + "'");
  char magic[sizeof(detail::kEnsembleMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::string(magic, sizeof(magic)) != std::string(detail::kEnsembleMagic, sizeof(magic))) {
    throw ConfigError("'" + path + "' is not an ensemble file");
  }
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string line(len, '\0');
  in.read(line.data(), len);
  const RunHeader header = RunHeader::parse(line);
  std::int64_t R = 0, C = 0;
  in.read(reinterpret_cast<char*>(&R), sizeof(R));
  in.read(reinterpret_cast<char*>(&C), sizeof(C));
  if (!in || R < 1 || C < 3) throw ConfigError("ensemble '" + path + "' has a corrupt header");
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(R, C);
  in.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(sizeof(double) * rm.size()));
  if (!in) throw ConfigError("ensemble '" + path + "' is truncated");
  Ensemble ens;
  ens.grid = TimeGrid(header.number("T"), static_cast<int>(header.number("N")), header.number("alpha"));
  if (ens.grid.N + 1 != C) throw ConfigError("ensemble '" + path + "': N does not match the stored columns");
  ens.seed = static_cast<std::uint64_t>(std::stoull(header.get("seed")));
  ens.solver_tag = header.get("solver");
  ens.trajectories = rm;
  if (header_out) *header_out = header;
  return ens;
}

}  // namespace fsi
