#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "fsi/error.hpp"
#include "fsi/fem.hpp"
#include "fsi/fractime.hpp"
#include "fsi/gmsfem.hpp"
#include "fsi/io.hpp"
#include "fsi/mesh.hpp"
#include "fsi/stochastic.hpp"

namespace fsi {

enum class SolverKind { fem, gmsfem };

inline SolverKind parse_solver(const std::string& s) {
  if (s == "fem") return SolverKind::fem;
  if (s == "gmsfem") return SolverKind::gmsfem;
  throw ConfigError("solver.kind: expected fem|gmsfem, got '" + s + "'");
}
inline const char* to_string(SolverKind k) { return k == SolverKind::fem ? "fem" : "gmsfem"; }

/// Every knob of a run. Loaded from an INI file; sections and keys:
///   [time] alpha T steps          [mesh] cells blocks
///   [medium] type=homogeneous|channels|file value contrast seed channels width margin inclusions path
///   [source] type=bump|file cx cy radius amplitude Cf path
///   [observation] x y             [signal] g1 g2 M
///   [solver] kind bases snapshots engine threads
///   [ensemble] realizations seed  [inverse] delta gamma1 gamma2 gamma_rel max_iter stop_tol
///   [verify] eta                  [output] dir
struct RunConfig {
  double alpha = 0.75, T = 1.0;
  int steps = 100;
  int cells = 50, blocks = 10;

  std::string medium_type = "homogeneous";
  double kappa_value = 1.0, contrast = 1e3;
  std::uint64_t medium_seed = 1;
  int channels = 3, channel_width = 2, channel_margin = -1, inclusions = 0;
  std::string medium_path;

  std::string source_type = "bump";
  double source_cx = 0.6, source_cy = 0.6, source_radius = 0.3, source_amplitude = 1.0;
  double Cf = 0.0;  // 0: take the amplitude (bump) or the raster maximum
  std::string source_path;

  Point2 x0{0.4, 0.2};
  std::string g1 = "smooth", g2 = "smooth";
  double M_bound = 10.0;

  SolverKind solver = SolverKind::fem;
  int bases = 2;
  SnapshotKind snapshots = SnapshotKind::harmonic;
  EnsembleEngine engine = EnsembleEngine::impulse;
  unsigned threads = 0;  // 0: hardware concurrency

  int realizations = 30000;
  std::uint64_t seed = 42;

  double delta = 0.01;
  double gamma1 = 0.0, gamma2 = 0.0, gamma_rel = 1e-8;
  int max_iter = 100000;
  double stop_tol = 1e-10;

  double eta = 0.0;  // 0: five time steps

  std::string out_dir = "out";

  TimeGrid grid() const { return TimeGrid(T, steps, alpha); }
  double eta_or_default() const { return eta > 0.0 ? eta : 5.0 * T / steps; }
  unsigned thread_count() const { return threads ? threads : default_threads(); }
  SourceTimeSpec signal() const {
    return {TimeFunction::parse(g1, false), TimeFunction::parse(g2, true), M_bound};
  }

  void validate() const {
    const TimeGrid g(T, steps, alpha);
    (void)g;
    if (cells < 2) throw ConfigError("mesh.cells must be >= 2");
    if (blocks < 1 || cells % blocks != 0) throw ConfigError("mesh.blocks must divide mesh.cells");
    if (!(x0.x > 0.0 && x0.x < 1.0 && x0.y > 0.0 && x0.y < 1.0)) {
      throw ConfigError("observation.x/y must lie strictly inside (0,1)^2");
    }
    if (bases < 1) throw ConfigError("solver.bases must be >= 1");
    if (realizations < 0) throw ConfigError("ensemble.realizations must be >= 0");
    if (!(delta >= 0.0)) throw ConfigError("inverse.delta must be >= 0");
    if (gamma1 < 0.0 || gamma2 < 0.0 || !(gamma_rel > 0.0)) throw ConfigError("inverse.gamma* must be positive");
    if (max_iter < 1 || !(stop_tol > 0.0)) throw ConfigError("inverse.max_iter/stop_tol must be positive");
    if (eta < 0.0 || eta_or_default() >= T) throw ConfigError("verify.eta must satisfy 0 < eta < T");
    if (!(M_bound > 0.0)) throw ConfigError("signal.M must be positive");
    if (medium_type != "homogeneous" && medium_type != "channels" && medium_type != "file") {
      throw ConfigError("medium.type: expected homogeneous|channels|file");
    }
    if (source_type != "bump" && source_type != "file") throw ConfigError("source.type: expected bump|file");
    signal();  // parses g1/g2
  }

  /// Relative data paths (rasters, "table:" signals) are resolved against `base`.
  static RunConfig from_tree(const boost::property_tree::ptree& pt, const std::filesystem::path& base = {}) {
    RunConfig c;
    auto get = [&](const char* key, auto& field) {
      using T = std::remove_reference_t<decltype(field)>;
      try {
        if (!pt.get_optional<std::string>(key)) return;
        const auto v = pt.get_optional<T>(key);
        if (!v) throw ConfigError(std::string("config field '") + key + "' has the wrong type");
        field = *v;
      } catch (const boost::property_tree::ptree_error&) {
        throw ConfigError(std::string("config field '") + key + "' has the wrong type");
      }
    };
    get("time.alpha", c.alpha);
    get("time.T", c.T);
    get("time.steps", c.steps);
    get("mesh.cells", c.cells);
    get("mesh.blocks", c.blocks);
    get("medium.type", c.medium_type);
    get("medium.value", c.kappa_value);
    get("medium.contrast", c.contrast);
    get("medium.seed", c.medium_seed);
    get("medium.channels", c.channels);
    get("medium.width", c.channel_width);
    get("medium.margin", c.channel_margin);
    get("medium.inclusions", c.inclusions);
    get("medium.path", c.medium_path);
    get("source.type", c.source_type);
    get("source.cx", c.source_cx);
    get("source.cy", c.source_cy);
    get("source.radius", c.source_radius);
    get("source.amplitude", c.source_amplitude);
    get("source.Cf", c.Cf);
    get("source.path", c.source_path);
    get("observation.x", c.x0.x);
    get("observation.y", c.x0.y);
    get("signal.g1", c.g1);
    get("signal.g2", c.g2);
    get("signal.M", c.M_bound);
    if (auto v = pt.get_optional<std::string>("solver.kind")) c.solver = parse_solver(*v);
    get("solver.bases", c.bases);
    if (auto v = pt.get_optional<std::string>("solver.snapshots")) c.snapshots = parse_snapshot_kind(*v);
    if (auto v = pt.get_optional<std::string>("solver.engine")) c.engine = parse_engine(*v);
    get("solver.threads", c.threads);
    get("ensemble.realizations", c.realizations);
    get("ensemble.seed", c.seed);
    get("inverse.delta", c.delta);
    get("inverse.gamma1", c.gamma1);
    get("inverse.gamma2", c.gamma2);
    get("inverse.gamma_rel", c.gamma_rel);
    get("inverse.max_iter", c.max_iter);
    get("inverse.stop_tol", c.stop_tol);
    get("verify.eta", c.eta);
    get("output.dir", c.out_dir);
    auto rebase = [&](std::string& p) {
      if (!p.empty() && !base.empty() && std::filesystem::path(p).is_relative()) p = (base / p).string();
    };
    rebase(c.medium_path);
    rebase(c.source_path);
    for (std::string* g : {&c.g1, &c.g2}) {
      if (g->rfind("table:", 0) == 0) {
        std::string p = g->substr(6);
        rebase(p);
        *g = "table:" + p;
      }
    }
    c.validate();
    return c;
  }

  static RunConfig load(const std::string& path) {
    boost::property_tree::ptree pt;
    try {
      boost::property_tree::read_ini(path, pt);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError("cannot read config: " + std::string(e.what()));
    }
    return from_tree(pt, std::filesystem::path(path).parent_path());
  }

  /// Provenance fields shared by all outputs of a run.
  RunHeader header() const {
    RunHeader h;
    h.set("alpha", alpha).set("T", T).set("N", steps).set("mesh", cells).set("seed", seed);
    h.set("solver", std::string(to_string(solver)));
    if (solver == SolverKind::gmsfem) h.set("bases", bases).set("blocks", blocks);
    h.set("medium", medium_type).set("x0", std::to_string(x0.x) + "," + std::to_string(x0.y));
    h.set("g1", g1).set("g2", g2);
    return h;
  }
};

/// Spatial setup materialized from a config: mesh, medium, operators,
/// source and observation functional. Enforces f(x0) = 0.
struct Problem {
  FineMesh mesh;
  MediumField medium;
  OperatorPair ops;
  SpatialSource source;
  Vector f;  // interior values of the source
  PointWeights observation;
  double Cf = 0.0;

  explicit Problem(const RunConfig& cfg) : mesh(cfg.cells) {
    if (cfg.medium_type == "homogeneous") {
      medium = MediumField::homogeneous(cfg.cells, cfg.kappa_value);
    } else if (cfg.medium_type == "channels") {
      medium = MediumField::synthetic_channels(cfg.cells, cfg.contrast, cfg.medium_seed, cfg.channels,
                                               cfg.channel_width, cfg.inclusions, cfg.channel_margin);
    } else {
      medium = MediumField::from_raster_file(cfg.medium_path);
    }
    medium.validate(mesh);
    ops = assemble(mesh, medium);
    if (cfg.source_type == "bump") {
      source = SpatialSource::bump(mesh, {cfg.source_cx, cfg.source_cy}, cfg.source_radius, cfg.source_amplitude);
    } else {
      source = SpatialSource::from_raster_file(mesh, cfg.source_path);
    }
    Cf = cfg.Cf > 0.0 ? cfg.Cf : std::max(source.max_value(), cfg.source_type == "bump" ? cfg.source_amplitude : 0.0);
    source.validate(mesh, Cf);
    if (!(source.max_value() > 0.0)) throw ConfigError("source: f vanishes identically");
    const double fx0 = evaluate_at_point(mesh, source.values, cfg.x0);
    if (fx0 != 0.0) {
      throw ConfigError("observation: f(x0) = " + std::to_string(fx0) +
                        " but x0 must lie outside supp f (move observation.x/y or shrink the source)");
    }
    f = restrict_to_interior(mesh, source.values);
    observation = point_weights(mesh, cfg.x0);
  }
};

}  // namespace fsi
