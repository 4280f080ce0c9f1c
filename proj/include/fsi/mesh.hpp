#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "fsi/error.hpp"

namespace fsi {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

using Triangle = std::array<int, 3>;

/// Structured triangulation of the unit square. The square is cut into
/// cells_per_side^2 cells, each split along its (0,0)-(1,1) diagonal into
/// two counter-clockwise triangles. Nodes are numbered row-major:
/// node(i, j) = j * (cells_per_side + 1) + i, with x = i*h and y = j*h.
class FineMesh {
 public:
  explicit FineMesh(int cells_per_side) : cells_(cells_per_side) {
    if (cells_per_side < 2) {
      throw ConfigError("fine mesh needs cells_per_side >= 2, got " +
                        std::to_string(cells_per_side));
    }
    const int np = cells_ + 1;
    const double h = 1.0 / cells_;
    nodes_.reserve(static_cast<std::size_t>(np) * np);
    interior_.reserve(nodes_.capacity());
    dof_of_node_.assign(static_cast<std::size_t>(np) * np, -1);
    for (int j = 0; j < np; ++j) {
      for (int i = 0; i < np; ++i) {
        nodes_.push_back({i * h, j * h});
        const bool inner = i > 0 && i < cells_ && j > 0 && j < cells_;
        interior_.push_back(inner);
        if (inner) {
          dof_of_node_[node(i, j)] = static_cast<int>(node_of_dof_.size());
          node_of_dof_.push_back(node(i, j));
        }
      }
    }
    triangles_.reserve(2 * static_cast<std::size_t>(cells_) * cells_);
    for (int j = 0; j < cells_; ++j) {
      for (int i = 0; i < cells_; ++i) {
        const int n00 = node(i, j), n10 = node(i + 1, j);
        const int n01 = node(i, j + 1), n11 = node(i + 1, j + 1);
        triangles_.push_back({n00, n10, n11});
        triangles_.push_back({n00, n11, n01});
      }
    }
  }

  int cells_per_side() const { return cells_; }
  int nodes_per_side() const { return cells_ + 1; }
  double h() const { return 1.0 / cells_; }

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t triangle_count() const { return triangles_.size(); }
  std::size_t interior_count() const { return node_of_dof_.size(); }

  int node(int i, int j) const { return j * (cells_ + 1) + i; }
  const Point2& coord(int n) const { return nodes_[n]; }
  const std::vector<Point2>& nodes() const { return nodes_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  const Triangle& triangle(int t) const { return triangles_[t]; }
  const std::vector<bool>& interior_mask() const { return interior_; }
  bool is_interior(int n) const { return interior_[n]; }

  /// Interior (Dirichlet-free) unknown index of a node, or -1 on the boundary.
  int dof_of_node(int n) const { return dof_of_node_[n]; }
  int node_of_dof(int d) const { return node_of_dof_[d]; }

  /// Cell index (row-major) owning triangle t.
  static int cell_of_triangle(int t) { return t / 2; }

  double signed_area(int t) const {
    const auto& tri = triangles_[t];
    const Point2& a = nodes_[tri[0]];
    const Point2& b = nodes_[tri[1]];
    const Point2& c = nodes_[tri[2]];
    return 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
  }

  /// Triangle containing p (closed unit square), or nullopt outside.
  std::optional<int> locate(Point2 p) const {
    if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0)) {
      return std::nullopt;
    }
    const double sx = p.x * cells_, sy = p.y * cells_;
    int i = std::min(static_cast<int>(std::floor(sx)), cells_ - 1);
    int j = std::min(static_cast<int>(std::floor(sy)), cells_ - 1);
    const double lx = sx - i, ly = sy - j;
    const int base = 2 * (j * cells_ + i);
    return ly <= lx ? base : base + 1;
  }

  /// Barycentric coordinates of p with respect to triangle t.
  std::array<double, 3> barycentric(int t, Point2 p) const {
    const auto& tri = triangles_[t];
    const Point2& a = nodes_[tri[0]];
    const Point2& b = nodes_[tri[1]];
    const Point2& c = nodes_[tri[2]];
    const double det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    const double l1 = ((p.x - a.x) * (c.y - a.y) - (c.x - a.x) * (p.y - a.y)) / det;
    const double l2 = ((b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y)) / det;
    return {1.0 - l1 - l2, l1, l2};
  }

 private:
  int cells_;
  std::vector<Point2> nodes_;
  std::vector<Triangle> triangles_;
  std::vector<bool> interior_;
  std::vector<int> dof_of_node_;
  std::vector<int> node_of_dof_;
};

inline FineMesh build_fine_mesh(int cells_per_side) { return FineMesh(cells_per_side); }

/// Coarse neighborhood omega_i: the union of coarse blocks sharing coarse
/// vertex i, stored as a box of fine nodes [ix0, ix1] x [iy0, iy1].
struct Neighborhood {
  int vertex = 0;
  Point2 center;
  int ix0 = 0, ix1 = 0, iy0 = 0, iy1 = 0;
  std::vector<int> nodes;      // global fine node ids, row-major inside the box
  std::vector<int> triangles;  // global fine triangle ids inside the box
  std::vector<double> chi;     // partition of unity value per entry of `nodes`
  int block_count = 0;

  int width() const { return ix1 - ix0 + 1; }
  int height() const { return iy1 - iy0 + 1; }
  int local(int i, int j) const { return (j - iy0) * width() + (i - ix0); }
  bool on_box_boundary(int i, int j) const {
    return i == ix0 || i == ix1 || j == iy0 || j == iy1;
  }
};

/// Coarse grid of blocks_per_side^2 square blocks aligned with the fine mesh,
/// with one neighborhood and one bilinear hat (partition of unity) per
/// coarse vertex, boundary vertices included.
class CoarseGrid {
 public:
  CoarseGrid(const FineMesh& mesh, int blocks_per_side) : blocks_(blocks_per_side) {
    const int m = mesh.cells_per_side();
    if (blocks_per_side < 1 || m % blocks_per_side != 0) {
      throw ConfigError("coarse blocks_per_side (" + std::to_string(blocks_per_side) +
                        ") must be positive and divide cells_per_side (" +
                        std::to_string(m) + ")");
    }
    ratio_ = m / blocks_;
    const double H = 1.0 / blocks_;
    for (int J = 0; J <= blocks_; ++J) {
      for (int I = 0; I <= blocks_; ++I) {
        Neighborhood nb;
        nb.vertex = J * (blocks_ + 1) + I;
        nb.center = {I * H, J * H};
        nb.ix0 = std::max(I - 1, 0) * ratio_;
        nb.ix1 = std::min(I + 1, blocks_) * ratio_;
        nb.iy0 = std::max(J - 1, 0) * ratio_;
        nb.iy1 = std::min(J + 1, blocks_) * ratio_;
        nb.block_count = ((nb.ix1 - nb.ix0) / ratio_) * ((nb.iy1 - nb.iy0) / ratio_);
        for (int j = nb.iy0; j <= nb.iy1; ++j) {
          const double hy = hat(j, J);
          for (int i = nb.ix0; i <= nb.ix1; ++i) {
            nb.nodes.push_back(mesh.node(i, j));
            nb.chi.push_back(hat(i, I) * hy);
          }
        }
        for (int j = nb.iy0; j < nb.iy1; ++j) {
          for (int i = nb.ix0; i < nb.ix1; ++i) {
            const int cell = j * m + i;
            nb.triangles.push_back(2 * cell);
            nb.triangles.push_back(2 * cell + 1);
          }
        }
        coarse_nodes_.push_back(nb.center);
        neighborhoods_.push_back(std::move(nb));
      }
    }
  }

  int blocks_per_side() const { return blocks_; }
  int cells_per_block() const { return ratio_; }
  std::size_t vertex_count() const { return coarse_nodes_.size(); }
  const std::vector<Point2>& coarse_nodes() const { return coarse_nodes_; }
  const std::vector<Neighborhood>& neighborhoods() const { return neighborhoods_; }
  const Neighborhood& neighborhood(std::size_t i) const { return neighborhoods_[i]; }

  /// chi_i sampled at every fine node (zero outside omega_i).
  std::vector<double> partition_of_unity(const FineMesh& mesh, std::size_t i) const {
    std::vector<double> out(mesh.node_count(), 0.0);
    const auto& nb = neighborhoods_[i];
    for (std::size_t k = 0; k < nb.nodes.size(); ++k) out[nb.nodes[k]] = nb.chi[k];
    return out;
  }

 private:
  // 1-D hat of coarse index K evaluated at fine index i.
  double hat(int i, int K) const {
    const double s = std::abs(static_cast<double>(i) / ratio_ - K);
    return s >= 1.0 ? 0.0 : 1.0 - s;
  }

  int blocks_;
  int ratio_ = 1;
  std::vector<Point2> coarse_nodes_;
  std::vector<Neighborhood> neighborhoods_;
};

inline CoarseGrid build_coarse_grid(const FineMesh& mesh, int blocks_per_side) {
  return CoarseGrid(mesh, blocks_per_side);
}

}  // namespace fsi
