#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fsi/error.hpp"
#include "fsi/fem.hpp"
#include "fsi/fractime.hpp"
#include "fsi/mesh.hpp"
#include "fsi/parallel.hpp"

namespace fsi {

enum class SnapshotKind { full_fine, harmonic };

inline const char* to_string(SnapshotKind k) { return k == SnapshotKind::harmonic ? "harmonic" : "full"; }

inline SnapshotKind parse_snapshot_kind(const std::string& s) {
  if (s == "harmonic") return SnapshotKind::harmonic;
  if (s == "full" || s == "full-fine" || s == "full_fine") return SnapshotKind::full_fine;
  throw ConfigError("unknown snapshot kind '" + s + "' (expected harmonic|full)");
}

/// kappa * sum_i |grad chi_i|^2 per fine triangle, with chi_i the P1
/// interpolant of the coarse hat functions.
inline std::vector<double> kappa_tilde(const FineMesh& mesh, const CoarseGrid& coarse, const MediumField& medium) {
  std::vector<double> grad_sq(mesh.triangle_count(), 0.0);
  std::vector<int> local_of_node(mesh.node_count(), -1);
  for (const auto& nb : coarse.neighborhoods()) {
    for (std::size_t k = 0; k < nb.nodes.size(); ++k) local_of_node[nb.nodes[k]] = static_cast<int>(k);
    for (int t : nb.triangles) {
      const auto g = detail::p1_gradients(mesh, t);
      double gx = 0.0, gy = 0.0;
      for (int a = 0; a < 3; ++a) {
        const double c = nb.chi[local_of_node[mesh.triangle(t)[a]]];
        gx += c * g[a][0];
        gy += c * g[a][1];
      }
      grad_sq[t] += gx * gx + gy * gy;
    }
    for (int n : nb.nodes) local_of_node[n] = -1;
  }
  for (std::size_t t = 0; t < grad_sq.size(); ++t) grad_sq[t] *= medium.kappa[FineMesh::cell_of_triangle(static_cast<int>(t))];
  return grad_sq;
}

/// Neumann (free) local matrices over the box nodes of one neighborhood:
/// kappa-stiffness and kappa-tilde weighted mass.
struct LocalOperators {
  SparseMatrix stiffness;
  SparseMatrix weighted_mass;
  std::vector<bool> dirichlet;  // local node lies on the domain boundary
};

inline LocalOperators local_operators(const FineMesh& mesh, const MediumField& medium,
                                      const std::vector<double>& ktilde, const Neighborhood& nb) {
  const auto n = static_cast<Eigen::Index>(nb.nodes.size());
  std::vector<Eigen::Triplet<double>> st, mt;
  auto local_of = [&](int node) {
    const Point2& p = mesh.coord(node);
    const int i = static_cast<int>(std::lround(p.x * mesh.cells_per_side()));
    const int j = static_cast<int>(std::lround(p.y * mesh.cells_per_side()));
    return nb.local(i, j);
  };
  for (int t : nb.triangles) {
    const auto ke = detail::element_stiffness(mesh, t, medium.kappa[FineMesh::cell_of_triangle(t)]);
    const auto me = detail::element_mass(mesh, t, ktilde[t]);
    const auto& tri = mesh.triangle(t);
    const int l[3] = {local_of(tri[0]), local_of(tri[1]), local_of(tri[2])};
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        st.emplace_back(l[a], l[b], ke(a, b));
        mt.emplace_back(l[a], l[b], me(a, b));
      }
    }
  }
  LocalOperators out{SparseMatrix(n, n), SparseMatrix(n, n), std::vector<bool>(nb.nodes.size())};
  out.stiffness.setFromTriplets(st.begin(), st.end());
  out.weighted_mass.setFromTriplets(mt.begin(), mt.end());
  for (std::size_t k = 0; k < nb.nodes.size(); ++k) out.dirichlet[k] = !mesh.is_interior(nb.nodes[k]);
  return out;
}

/// Snapshot functions of one neighborhood as columns over its box nodes.
struct SnapshotSpace {
  std::size_t neighborhood_id = 0;
  SnapshotKind kind = SnapshotKind::harmonic;
  Matrix basis;

  Eigen::Index count() const { return basis.cols(); }
};

/// full_fine: unit vectors on every box node off the domain boundary.
/// harmonic: discrete kappa-harmonic extensions of fine delta data placed on
/// each node of the box boundary (nodes on the domain boundary stay zero).
inline SnapshotSpace build_snapshots(const Neighborhood& nb, const LocalOperators& local, std::size_t id,
                                     SnapshotKind kind) {
  const auto n = static_cast<Eigen::Index>(nb.nodes.size());
  SnapshotSpace snap{id, kind, {}};
  std::vector<int> free_nodes, bdry_nodes, inner_nodes;
  for (int j = nb.iy0; j <= nb.iy1; ++j) {
    for (int i = nb.ix0; i <= nb.ix1; ++i) {
      const int l = nb.local(i, j);
      if (local.dirichlet[l]) continue;
      free_nodes.push_back(l);
      (nb.on_box_boundary(i, j) ? bdry_nodes : inner_nodes).push_back(l);
    }
  }
  if (kind == SnapshotKind::full_fine) {
    snap.basis = Matrix::Zero(n, static_cast<Eigen::Index>(free_nodes.size()));
    for (std::size_t k = 0; k < free_nodes.size(); ++k) snap.basis(free_nodes[k], static_cast<Eigen::Index>(k)) = 1.0;
    return snap;
  }
  // Harmonic: A_II u_I = -A_IB delta_k.
  std::vector<int> inner_index(static_cast<std::size_t>(n), -1), bdry_index(static_cast<std::size_t>(n), -1);
  for (std::size_t k = 0; k < inner_nodes.size(); ++k) inner_index[inner_nodes[k]] = static_cast<int>(k);
  for (std::size_t k = 0; k < bdry_nodes.size(); ++k) bdry_index[bdry_nodes[k]] = static_cast<int>(k);
  const auto ni = static_cast<Eigen::Index>(inner_nodes.size());
  const auto nbd = static_cast<Eigen::Index>(bdry_nodes.size());
  std::vector<Eigen::Triplet<double>> aii;
  Matrix rhs = Matrix::Zero(ni, nbd);
  for (int k = 0; k < local.stiffness.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(local.stiffness, k); it; ++it) {
      const int r = inner_index[it.row()];
      if (r < 0) continue;
      const int ci = inner_index[it.col()], cb = bdry_index[it.col()];
      if (ci >= 0) aii.emplace_back(r, ci, it.value());
      if (cb >= 0) rhs(r, cb) -= it.value();
    }
  }
  snap.basis = Matrix::Zero(n, nbd);
  for (Eigen::Index k = 0; k < nbd; ++k) snap.basis(bdry_nodes[k], k) = 1.0;
  if (ni > 0) {
    SparseMatrix A(ni, ni);
    A.setFromTriplets(aii.begin(), aii.end());
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(A);
    if (ldlt.info() != Eigen::Success) throw NumericalError("harmonic snapshots: singular local system");
    const Matrix u = ldlt.solve(rhs);
    for (Eigen::Index r = 0; r < ni; ++r) snap.basis.row(inner_nodes[r]) = u.row(r);
  }
  return snap;
}

/// Eigenpairs of the local spectral problem projected on a snapshot space,
/// sorted ascending. `coefficients` holds B-orthonormal eigenvectors in the
/// snapshot basis, `modes` the same functions on the box nodes.
struct LocalEigen {
  Vector values;
  Matrix coefficients;
  Matrix modes;
};

inline LocalEigen local_spectral(const LocalOperators& local, const SnapshotSpace& snap) {
  if (snap.count() == 0) throw NumericalError("local spectral problem: empty snapshot space");
  const Matrix& P = snap.basis;
  const Matrix A = P.transpose() * (local.stiffness * P);
  const Matrix B = P.transpose() * (local.weighted_mass * P);
  Eigen::LLT<Matrix> llt(B);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("local spectral problem: weighted mass is not positive definite on the snapshots");
  }
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(0.5 * (A + A.transpose()), 0.5 * (B + B.transpose()));
  if (es.info() != Eigen::Success) throw NumericalError("local spectral problem: eigensolver failed");
  LocalEigen out{es.eigenvalues(), es.eigenvectors(), {}};
  out.modes = P * out.coefficients;
  return out;
}

/// Offline space: columns chi_i * psi^{i,off}_l restricted to interior fine
/// unknowns, ordered by neighborhood then by eigenvalue.
struct MultiscaleBasis {
  SparseMatrix R;
  std::vector<Vector> eigenvalues;  // selected eigenvalues per neighborhood
  std::vector<int> per_neighborhood;
  int total_dof = 0;
};

inline MultiscaleBasis assemble_offline(const FineMesh& mesh, const CoarseGrid& coarse,
                                        const std::vector<LocalEigen>& eigen, int bases_per_neighborhood) {
  if (bases_per_neighborhood < 1) throw ConfigError("bases_per_neighborhood must be >= 1");
  if (eigen.size() != coarse.vertex_count()) throw ConfigError("one eigen decomposition per neighborhood expected");
  MultiscaleBasis basis;
  std::vector<Eigen::Triplet<double>> trip;
  int col = 0;
  for (std::size_t i = 0; i < eigen.size(); ++i) {
    const auto& nb = coarse.neighborhood(i);
    const int L = bases_per_neighborhood;
    if (eigen[i].values.size() < L) {
      throw ConfigError("neighborhood " + std::to_string(i) + " has only " +
                        std::to_string(eigen[i].values.size()) + " eigenpairs, " + std::to_string(L) + " requested");
    }
    basis.eigenvalues.push_back(eigen[i].values.head(L));
    basis.per_neighborhood.push_back(L);
    for (int l = 0; l < L; ++l, ++col) {
      for (std::size_t k = 0; k < nb.nodes.size(); ++k) {
        const int d = mesh.dof_of_node(nb.nodes[k]);
        const double v = nb.chi[k] * eigen[i].modes(static_cast<Eigen::Index>(k), l);
        if (d >= 0 && v != 0.0) trip.emplace_back(d, col, v);
      }
    }
  }
  basis.total_dof = col;
  basis.R.resize(static_cast<Eigen::Index>(mesh.interior_count()), col);
  basis.R.setFromTriplets(trip.begin(), trip.end());
  return basis;
}

/// Snapshot, spectral and offline stages for every neighborhood.
inline MultiscaleBasis build_multiscale_basis(const FineMesh& mesh, const CoarseGrid& coarse,
                                              const MediumField& medium, SnapshotKind kind,
                                              int bases_per_neighborhood, unsigned threads = default_threads()) {
  medium.validate(mesh);
  const auto ktilde = kappa_tilde(mesh, coarse, medium);
  std::vector<LocalEigen> eigen(coarse.vertex_count());
  parallel_for(coarse.vertex_count(), threads, [&](std::size_t i) {
    const auto& nb = coarse.neighborhood(i);
    const auto local = local_operators(mesh, medium, ktilde, nb);
    const auto snap = build_snapshots(nb, local, i, kind);
    auto e = local_spectral(local, snap);
    // Only the leading modes are kept; drop the rest to bound memory.
    const auto keep = std::min<Eigen::Index>(e.values.size(), bases_per_neighborhood);
    e.values.conservativeResize(keep);
    e.coefficients.resize(0, 0);
    e.modes = e.modes.leftCols(keep).eval();
    eigen[i] = std::move(e);
  });
  return assemble_offline(mesh, coarse, eigen, bases_per_neighborhood);
}

/// Galerkin projection on the offline space.
struct ReducedOperators {
  Matrix mass;       // R^T M R
  Matrix stiffness;  // R^T S R
  Vector source;     // f_H: coefficients of the L2 projection of f, M_H f_H = R^T M f
  Eigen::Index size() const { return mass.rows(); }
};

inline ReducedOperators reduce(const OperatorPair& ops, const MultiscaleBasis& basis, const Vector& f) {
  if (basis.R.rows() != ops.size() || f.size() != ops.size()) throw ConfigError("reduce: dimension mismatch");
  const SparseMatrix MR = ops.mass * basis.R;
  const SparseMatrix SR = ops.stiffness * basis.R;
  ReducedOperators red;
  red.mass = Matrix(SparseMatrix(basis.R.transpose() * MR));
  red.stiffness = Matrix(SparseMatrix(basis.R.transpose() * SR));
  red.mass = 0.5 * (red.mass + red.mass.transpose()).eval();
  red.stiffness = 0.5 * (red.stiffness + red.stiffness.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> es(red.mass, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
  if (!(lo > 1e-14 * hi)) {
    std::ostringstream msg;
    msg << "offline basis is rank deficient: reduced mass eigenvalue ratio " << lo / hi;
    throw NumericalError(msg.str());
  }
  const Vector load = basis.R.transpose() * (ops.mass * f);
  red.source = red.mass.llt().solve(load);
  return red;
}

/// Reduced system for the L1 stepper. Observation at x0 prolongates with R
/// and interpolates: u(x0) = w^T R u_H.
class ReducedSystem {
 public:
  ReducedSystem(const ReducedOperators& red, const MultiscaleBasis& basis, const TimeGrid& grid,
                const PointWeights& observation)
      : mass_(red.mass) {
    const L1Coefficients b(grid);
    llt_.compute(b.leading() * red.mass + red.stiffness);
    if (llt_.info() != Eigen::Success) throw NumericalError("reduced time-stepping matrix is not SPD");
    obs_ = basis.R.transpose() * observation.dense(basis.R.rows());
  }

  Eigen::Index size() const { return mass_.rows(); }
  Vector apply_mass(const Vector& v) const { return mass_ * v; }
  Vector solve(const Vector& rhs) const { return llt_.solve(rhs); }
  double observe(const Vector& v) const { return obs_.dot(v); }

 private:
  Matrix mass_;
  Eigen::LLT<Matrix> llt_;
  Vector obs_;
};

// ---------------------------------------------------------------------------
// Basis cache

/// Identifies a basis: fine mesh, medium, snapshot kind and modes per neighborhood.
struct BasisKey {
  std::int32_t cells_per_side = 0;
  std::int32_t blocks_per_side = 0;
  std::uint64_t kappa_hash = 0;
  std::int32_t kind = 0;
  std::int32_t bases = 0;

  bool operator==(const BasisKey&) const = default;

  std::string tag() const {
    std::ostringstream s;
    s << "basis_m" << cells_per_side << "_b" << blocks_per_side << "_" << (kind ? "harmonic" : "full") << "_L"
      << bases << "_" << std::hex << kappa_hash << ".bin";
    return s.str();
  }
};

/// FNV-1a over the raw bytes of the kappa values.
inline std::uint64_t hash_medium(const MediumField& medium) {
  std::uint64_t h = 1469598103934665603ull;
  for (double k : medium.kappa) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &k, sizeof(double));
    for (unsigned char c : bytes) {
      h ^= c;
      h *= 1099511628211ull;
    }
  }
  return h;
}

inline BasisKey make_basis_key(const CoarseGrid& coarse, const MediumField& medium, SnapshotKind kind, int bases) {
  return {medium.cells_per_side, coarse.blocks_per_side(), hash_medium(medium),
          kind == SnapshotKind::harmonic ? 1 : 0, bases};
}

namespace detail {
constexpr char kBasisMagic[8] = {'F', 'S', 'I', 'B', 'A', 'S', '0', '1'};

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ConfigError("binary file truncated");
  return v;
}
}  // namespace detail

inline void write_basis_cache(const std::string& path, const BasisKey& key, const MultiscaleBasis& basis) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write basis cache '" + path + "'");
  out.write(detail::kBasisMagic, sizeof(detail::kBasisMagic));
  detail::write_pod(out, key);
  detail::write_pod(out, static_cast<std::int64_t>(basis.R.rows()));
  detail::write_pod(out, static_cast<std::int64_t>(basis.R.cols()));
  detail::write_pod(out, static_cast<std::int64_t>(basis.per_neighborhood.size()));
  for (std::size_t i = 0; i < basis.per_neighborhood.size(); ++i) {
    detail::write_pod(out, static_cast<std::int32_t>(basis.per_neighborhood[i]));
    for (Eigen::Index l = 0; l < basis.eigenvalues[i].size(); ++l) detail::write_pod(out, basis.eigenvalues[i][l]);
  }
  detail::write_pod(out, static_cast<std::int64_t>(basis.R.nonZeros()));
  for (int k = 0; k < basis.R.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(basis.R, k); it; ++it) {
      detail::write_pod(out, static_cast<std::int32_t>(it.row()));
      detail::write_pod(out, static_cast<std::int32_t>(it.col()));
      detail::write_pod(out, it.value());
    }
  }
  if (!out) throw ConfigError("failed writing basis cache '" + path + "'");
}

/// Loads a cached basis; nullopt when the file is missing or keyed differently.
inline std::optional<MultiscaleBasis> read_basis_cache(const std::string& path, const BasisKey& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[sizeof(detail::kBasisMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, detail::kBasisMagic, sizeof(magic)) != 0) {
    throw ConfigError("'" + path + "' is not a basis cache");
  }
  const auto key = detail::read_pod<BasisKey>(in);
  if (!(key == expected)) return std::nullopt;
  MultiscaleBasis basis;
  const auto rows = detail::read_pod<std::int64_t>(in);
  const auto cols = detail::read_pod<std::int64_t>(in);
  const auto nbs = detail::read_pod<std::int64_t>(in);
  for (std::int64_t i = 0; i < nbs; ++i) {
    const auto L = detail::read_pod<std::int32_t>(in);
    Vector ev(L);
    for (int l = 0; l < L; ++l) ev[l] = detail::read_pod<double>(in);
    basis.per_neighborhood.push_back(L);
    basis.eigenvalues.push_back(std::move(ev));
    basis.total_dof += L;
  }
  const auto nnz = detail::read_pod<std::int64_t>(in);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(nnz));
  for (std::int64_t k = 0; k < nnz; ++k) {
    const auto r = detail::read_pod<std::int32_t>(in);
    const auto c = detail::read_pod<std::int32_t>(in);
    trip.emplace_back(r, c, detail::read_pod<double>(in));
  }
  if (basis.total_dof != cols) throw ConfigError("basis cache '" + path + "' is inconsistent");
  basis.R.resize(rows, cols);
  basis.R.setFromTriplets(trip.begin(), trip.end());
  return basis;
}

}  // namespace fsi
