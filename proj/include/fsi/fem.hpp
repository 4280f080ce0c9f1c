#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fsi/error.hpp"
#include "fsi/mesh.hpp"

namespace fsi {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

namespace detail {

// Reads "rows cols" followed by rows*cols whitespace-separated reals.
inline std::vector<double> read_raster(std::istream& in, int& rows, int& cols,
                                       const std::string& what) {
  if (!(in >> rows >> cols) || rows <= 0 || cols <= 0) {
    throw ConfigError(what + ": raster header must be \"rows cols\"");
  }
  std::vector<double> values(static_cast<std::size_t>(rows) * cols);
  for (auto& v : values) {
    if (!(in >> v)) throw ConfigError(what + ": raster has fewer values than rows*cols");
  }
  return values;
}

inline std::ifstream open_input(const std::string& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw ConfigError(what + ": cannot open '" + path + "'");
  return in;
}

}  // namespace detail

/// Piecewise-constant conductivity kappa, one value per fine cell (both
/// triangles of a cell share it). Cell (i, j) is stored at j*m + i, so the
/// first raster row is the strip y in (0, h).
struct MediumField {
  int cells_per_side = 0;
  std::vector<double> kappa;

  double cell(int i, int j) const { return kappa[static_cast<std::size_t>(j) * cells_per_side + i]; }

  void validate(const FineMesh& mesh) const {
    if (cells_per_side != mesh.cells_per_side() ||
        kappa.size() != static_cast<std::size_t>(cells_per_side) * cells_per_side) {
      throw ConfigError("medium grid does not match the fine mesh (" +
                        std::to_string(cells_per_side) + " vs " +
                        std::to_string(mesh.cells_per_side()) + ")");
    }
    for (double k : kappa) {
      if (!(k > 0.0) || !std::isfinite(k)) throw ConfigError("kappa must be positive and finite");
    }
  }

  static MediumField homogeneous(int cells_per_side, double value) {
    if (!(value > 0.0)) throw ConfigError("homogeneous kappa must be positive");
    return {cells_per_side,
            std::vector<double>(static_cast<std::size_t>(cells_per_side) * cells_per_side, value)};
  }

  static MediumField from_raster(std::istream& in) {
    int rows = 0, cols = 0;
    auto values = detail::read_raster(in, rows, cols, "kappa raster");
    if (rows != cols) throw ConfigError("kappa raster must be square");
    MediumField m{rows, std::move(values)};
    for (double k : m.kappa) {
      if (!(k > 0.0)) throw ConfigError("kappa raster contains a non-positive value");
    }
    return m;
  }

  static MediumField from_raster_file(const std::string& path) {
    auto in = detail::open_input(path, "kappa raster");
    return from_raster(in);
  }

  /// Background 1 with `channels` thin wavy horizontal layers of value
  /// `contrast`, evenly spaced with a random offset and waviness drawn from
  /// `seed`, plus optional square inclusions. Layers stop `margin_cells`
  /// short of the left and right edges (negative: m / 10); a layer touching
  /// the Dirichlet boundary drains the whole field. Same seed, same field.
  static MediumField synthetic_channels(int cells_per_side, double contrast, unsigned long long seed,
                                        int channels = 3, int width_cells = 2, int inclusions = 0,
                                        int margin_cells = -1) {
    if (!(contrast > 0.0)) throw ConfigError("channel contrast must be positive");
    if (channels < 0 || inclusions < 0 || width_cells < 1) throw ConfigError("bad channel layout parameters");
    if (margin_cells < 0) margin_cells = cells_per_side / 10;
    constexpr double two_pi = 6.283185307179586;
    const int m = cells_per_side;
    MediumField field = homogeneous(m, 1.0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int c = 0; c < channels; ++c) {
      const double base = (c + 0.5 + 0.2 * (unit(rng) - 0.5)) / channels;
      const double amp = 0.02 * unit(rng);
      const double freq = 1.0 + 2.0 * unit(rng);
      const double phase = two_pi * unit(rng);
      for (int i = margin_cells; i < m - margin_cells; ++i) {
        const double x = (i + 0.5) / m;
        const double yc = base + amp * std::sin(two_pi * freq * x + phase);
        const int j0 = std::clamp(static_cast<int>(std::floor(yc * m)) - width_cells / 2, 0, m - 1);
        for (int w = 0; w < width_cells && j0 + w < m; ++w) {
          field.kappa[static_cast<std::size_t>(j0 + w) * m + i] = contrast;
        }
      }
    }
    const int side = std::max(1, m / 25);
    for (int k = 0; k < inclusions; ++k) {
      const int i0 = static_cast<int>(unit(rng) * (m - side));
      const int j0 = static_cast<int>(unit(rng) * (m - side));
      for (int j = j0; j < j0 + side; ++j) {
        for (int i = i0; i < i0 + side; ++i) field.kappa[static_cast<std::size_t>(j) * m + i] = contrast;
      }
    }
    return field;
  }
};

/// Spatial source component f, sampled at every fine node.
struct SpatialSource {
  std::vector<double> values;
  std::vector<bool> support_mask;

  double max_value() const { return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end()); }

  void validate(const FineMesh& mesh, double bound) const {
    if (values.size() != mesh.node_count()) throw ConfigError("source length does not match mesh nodes");
    for (std::size_t n = 0; n < values.size(); ++n) {
      if (values[n] < 0.0 || values[n] > bound) {
        throw ConfigError("source must satisfy 0 <= f <= C_f at every node");
      }
      if (!mesh.is_interior(static_cast<int>(n)) && values[n] != 0.0) {
        throw ConfigError("source must vanish on the domain boundary");
      }
    }
  }

  /// f(x, y) = amplitude * b((x - cx)/r) * b((y - cy)/r) with the smooth
  /// bump b(s) = exp(1 - 1/(1 - s^2)) on |s| < 1, so max f = amplitude.
  static SpatialSource bump(const FineMesh& mesh, Point2 center, double radius, double amplitude) {
    if (!(radius > 0.0) || !(amplitude >= 0.0)) throw ConfigError("bump radius/amplitude invalid");
    auto b = [](double s) { return std::abs(s) < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - s * s)) : 0.0; };
    SpatialSource f;
    f.values.resize(mesh.node_count());
    f.support_mask.resize(mesh.node_count());
    for (std::size_t n = 0; n < mesh.node_count(); ++n) {
      const Point2& p = mesh.coord(static_cast<int>(n));
      double v = amplitude * b((p.x - center.x) / radius) * b((p.y - center.y) / radius);
      if (!mesh.is_interior(static_cast<int>(n))) v = 0.0;
      v = std::clamp(v, 0.0, amplitude);
      f.values[n] = v;
      f.support_mask[n] = v > 0.0;
    }
    return f;
  }

  static SpatialSource from_raster(const FineMesh& mesh, std::istream& in) {
    int rows = 0, cols = 0;
    auto values = detail::read_raster(in, rows, cols, "source raster");
    if (rows != mesh.nodes_per_side() || cols != mesh.nodes_per_side()) {
      throw ConfigError("source raster must be (cells+1) x (cells+1) nodes");
    }
    SpatialSource f;
    f.values = std::move(values);
    f.support_mask.resize(f.values.size());
    for (std::size_t n = 0; n < f.values.size(); ++n) f.support_mask[n] = f.values[n] > 0.0;
    return f;
  }

  static SpatialSource from_raster_file(const FineMesh& mesh, const std::string& path) {
    auto in = detail::open_input(path, "source raster");
    return from_raster(mesh, in);
  }
};

/// Mass and stiffness over all fine nodes, before Dirichlet elimination.
struct FullOperators {
  SparseMatrix mass;
  SparseMatrix stiffness;
};

/// Mass M and stiffness S over interior nodes only (homogeneous Dirichlet
/// eliminated). Row/column d corresponds to mesh.node_of_dof(d).
struct OperatorPair {
  SparseMatrix mass;
  SparseMatrix stiffness;
  Eigen::Index size() const { return mass.rows(); }
};

namespace detail {

// P1 gradients (constant) of the three barycentric functions of triangle t.
inline std::array<std::array<double, 2>, 3> p1_gradients(const FineMesh& mesh, int t) {
  const auto& tri = mesh.triangle(t);
  const Point2& a = mesh.coord(tri[0]);
  const Point2& b = mesh.coord(tri[1]);
  const Point2& c = mesh.coord(tri[2]);
  const double det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
  return {{{(b.y - c.y) / det, (c.x - b.x) / det},
           {(c.y - a.y) / det, (a.x - c.x) / det},
           {(a.y - b.y) / det, (b.x - a.x) / det}}};
}

inline Eigen::Matrix3d element_stiffness(const FineMesh& mesh, int t, double kappa) {
  const auto g = p1_gradients(mesh, t);
  const double area = mesh.signed_area(t);
  Eigen::Matrix3d k;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) k(a, b) = kappa * area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
  return k;
}

inline Eigen::Matrix3d element_mass(const FineMesh& mesh, int t, double weight) {
  const double area = mesh.signed_area(t);
  Eigen::Matrix3d m;
  m.setConstant(weight * area / 12.0);
  m.diagonal().setConstant(weight * area / 6.0);
  return m;
}

}  // namespace detail

inline FullOperators assemble_full(const FineMesh& mesh, const MediumField& medium) {
  medium.validate(mesh);
  std::vector<Eigen::Triplet<double>> mt, st;
  mt.reserve(9 * mesh.triangle_count());
  st.reserve(9 * mesh.triangle_count());
  for (int t = 0; t < static_cast<int>(mesh.triangle_count()); ++t) {
    const double kappa = medium.kappa[FineMesh::cell_of_triangle(t)];
    const auto ke = detail::element_stiffness(mesh, t, kappa);
    const auto me = detail::element_mass(mesh, t, 1.0);
    const auto& tri = mesh.triangle(t);
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        mt.emplace_back(tri[a], tri[b], me(a, b));
        st.emplace_back(tri[a], tri[b], ke(a, b));
      }
    }
  }
  const auto n = static_cast<Eigen::Index>(mesh.node_count());
  FullOperators ops{SparseMatrix(n, n), SparseMatrix(n, n)};
  ops.mass.setFromTriplets(mt.begin(), mt.end());
  ops.stiffness.setFromTriplets(st.begin(), st.end());
  return ops;
}

/// Restriction/extension between all fine nodes and interior unknowns.
inline Vector restrict_to_interior(const FineMesh& mesh, const std::vector<double>& nodal) {
  Vector out(static_cast<Eigen::Index>(mesh.interior_count()));
  for (Eigen::Index d = 0; d < out.size(); ++d) out[d] = nodal[mesh.node_of_dof(static_cast<int>(d))];
  return out;
}

inline std::vector<double> extend_from_interior(const FineMesh& mesh, const Vector& interior) {
  std::vector<double> out(mesh.node_count(), 0.0);
  for (Eigen::Index d = 0; d < interior.size(); ++d) out[mesh.node_of_dof(static_cast<int>(d))] = interior[d];
  return out;
}

inline SparseMatrix eliminate_boundary(const FineMesh& mesh, const SparseMatrix& full) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(full.nonZeros()));
  for (int k = 0; k < full.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(full, k); it; ++it) {
      const int r = mesh.dof_of_node(static_cast<int>(it.row()));
      const int c = mesh.dof_of_node(static_cast<int>(it.col()));
      if (r >= 0 && c >= 0) trip.emplace_back(r, c, it.value());
    }
  }
  const auto m = static_cast<Eigen::Index>(mesh.interior_count());
  SparseMatrix out(m, m);
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

/// P1 Galerkin mass and kappa-weighted stiffness over H^1_0 (interior nodes).
inline OperatorPair assemble(const FineMesh& mesh, const MediumField& medium) {
  const FullOperators full = assemble_full(mesh, medium);
  return {eliminate_boundary(mesh, full.mass), eliminate_boundary(mesh, full.stiffness)};
}

/// Sparse SPD solver: a single LDL^T factorization reused for every
/// right-hand side. Each solve is checked against ||r|| <= tol * ||b|| and
/// refined once before failing.
class SpdSolver {
 public:
  SpdSolver() = default;
  explicit SpdSolver(const SparseMatrix& a, double tol = 1e-10) { factor(a, tol); }

  void factor(const SparseMatrix& a, double tol = 1e-10) {
    if (a.rows() != a.cols()) throw NumericalError("SPD solve: matrix is not square");
    a_ = a;
    tol_ = tol;
    ldlt_.compute(a_);
    if (ldlt_.info() != Eigen::Success) throw NumericalError("SPD solve: factorization failed");
    const Vector d = ldlt_.vectorD();
    if ((d.array() <= 0.0).any()) throw NumericalError("SPD solve: matrix is not positive definite");
  }

  Vector solve(const Vector& rhs) const {
    Vector x = ldlt_.solve(rhs);
    const double bnorm = rhs.norm();
    Vector r = rhs - a_ * x;
    if (r.norm() > tol_ * bnorm) {
      x += ldlt_.solve(r);
      r = rhs - a_ * x;
    }
    const double rn = r.norm();
    if (!std::isfinite(rn) || rn > tol_ * bnorm) {
      std::ostringstream msg;
      msg << "SPD solve did not reach tolerance: residual " << rn << " vs " << tol_ * bnorm;
      throw NumericalError(msg.str());
    }
    return x;
  }

  Eigen::Index size() const { return a_.rows(); }

 private:
  SparseMatrix a_;
  Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
  double tol_ = 1e-10;
};

inline Vector solve_spd(const SparseMatrix& a, const Vector& rhs) { return SpdSolver(a).solve(rhs); }

/// P1 interpolation weights of point p, expressed on interior unknowns
/// (boundary nodes carry the zero Dirichlet value and are dropped).
struct PointWeights {
  std::vector<std::pair<int, double>> entries;  // (interior dof, weight)

  double apply(const Vector& interior) const {
    double s = 0.0;
    for (auto [d, w] : entries) s += w * interior[d];
    return s;
  }

  Vector dense(Eigen::Index size) const {
    Vector w = Vector::Zero(size);
    for (auto [d, wt] : entries) w[d] += wt;
    return w;
  }
};

inline void require_inside(Point2 p) {
  if (!(p.x > 0.0 && p.x < 1.0 && p.y > 0.0 && p.y < 1.0)) {
    std::ostringstream msg;
    msg << "observation point (" << p.x << ", " << p.y << ") is not strictly inside the unit square";
    throw ConfigError(msg.str());
  }
}

inline PointWeights point_weights(const FineMesh& mesh, Point2 p) {
  require_inside(p);
  const int t = *mesh.locate(p);
  const auto lam = mesh.barycentric(t, p);
  PointWeights w;
  for (int a = 0; a < 3; ++a) {
    const int d = mesh.dof_of_node(mesh.triangle(t)[a]);
    if (d >= 0 && lam[a] != 0.0) w.entries.emplace_back(d, lam[a]);
  }
  return w;
}

/// Barycentric P1 interpolation of a full nodal vector at p.
inline double evaluate_at_point(const FineMesh& mesh, const std::vector<double>& nodal, Point2 p) {
  require_inside(p);
  if (nodal.size() != mesh.node_count()) throw ConfigError("nodal vector length does not match mesh");
  const int t = *mesh.locate(p);
  const auto lam = mesh.barycentric(t, p);
  const auto& tri = mesh.triangle(t);
  return lam[0] * nodal[tri[0]] + lam[1] * nodal[tri[1]] + lam[2] * nodal[tri[2]];
}

}  // namespace fsi
