#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>

#include "fsi/config.hpp"
#include "fsi/fractime.hpp"
#include "fsi/gmsfem.hpp"
#include "fsi/io.hpp"

namespace fsi {

struct GmsfemSetup {
  CoarseGrid coarse;
  MultiscaleBasis basis;
  ReducedOperators reduced;
  double offline_seconds = 0.0;
  bool from_cache = false;
};

/// Offline stage for a config, reusing `cache_dir/basis_<tag>.bin` when its
/// key matches. An empty cache_dir disables caching.
inline GmsfemSetup build_gmsfem(const Problem& pb, const RunConfig& cfg, const std::string& cache_dir = {}) {
  GmsfemSetup s{build_coarse_grid(pb.mesh, cfg.blocks), {}, {}, 0.0, false};
  const auto key = make_basis_key(s.coarse, pb.medium, cfg.snapshots, cfg.bases);
  const std::string path = cache_dir.empty() ? "" : (std::filesystem::path(cache_dir) / key.tag()).string();
  const auto t0 = std::chrono::steady_clock::now();
  std::optional<MultiscaleBasis> cached;
  if (!path.empty()) cached = read_basis_cache(path, key);
  if (cached) {
    s.basis = std::move(*cached);
    s.from_cache = true;
  } else {
    s.basis = build_multiscale_basis(pb.mesh, s.coarse, pb.medium, cfg.snapshots, cfg.bases, cfg.thread_count());
    if (!path.empty()) write_basis_cache(path, key, s.basis);
  }
  s.offline_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  s.reduced = reduce(pb.ops, s.basis, pb.f);
  return s;
}

/// Calls fn(system, load, solver_tag) with the configured spatial solver.
template <class Fn>
decltype(auto) with_system(const Problem& pb, const RunConfig& cfg, const TimeGrid& grid, Fn&& fn,
                           const std::string& cache_dir = {}) {
  if (cfg.solver == SolverKind::fem) {
    const FineSystem sys(pb.ops, grid, pb.observation);
    return fn(sys, pb.f, std::string("fem"));
  }
  const auto setup = build_gmsfem(pb, cfg, cache_dir);
  const ReducedSystem sys(setup.reduced, setup.basis, grid, pb.observation);
  return fn(sys, setup.reduced.source, "gmsfem-" + std::to_string(cfg.bases));
}

/// v(x0, t_0..t_N). Entry 0 is f(x0) = 0 by construction; a reduced solver
/// would otherwise report the projection error of f at x0 there.
template <L1System System>
Vector deterministic_trace(const System& sys, const TimeGrid& grid, const Vector& load) {
  Vector v = observe_slices(sys, step_deterministic_v(sys, grid, load));
  v[0] = 0.0;
  return v;
}

inline void write_trace(const std::string& path, const TimeGrid& grid, const Vector& v, RunHeader header) {
  Table tab;
  tab.header = std::move(header);
  tab.add("t", grid.times());
  tab.add("v", std::vector<double>(v.data(), v.data() + v.size()));
  tab.write_file(path);
}

inline std::pair<TimeGrid, Vector> read_trace(const std::string& path, RunHeader* header_out = nullptr) {
  const Table tab = Table::read_file(path, "v trace");
  const TimeGrid grid(tab.header.number("T"), static_cast<int>(tab.header.number("N")), tab.header.number("alpha"));
  const auto& v = tab.column("v");
  if (v.size() != static_cast<std::size_t>(grid.N) + 1) throw ConfigError("v trace: expected N+1 rows");
  if (header_out) *header_out = tab.header;
  return {grid, Eigen::Map<const Vector>(v.data(), grid.N + 1)};
}

}  // namespace fsi
