#include <catch_amalgamated.hpp>

#include <sstream>

#include "fsi/fem.hpp"

using namespace fsi;
using Catch::Approx;

TEST_CASE("full mass integrates to the area, stiffness kills constants", "[fem]") {
  const FineMesh mesh(8);
  const auto ops = assemble_full(mesh, MediumField::homogeneous(8, 1.0));
  const Vector one = Vector::Ones(static_cast<Eigen::Index>(mesh.node_count()));
  CHECK(one.dot(ops.mass * one) == Approx(1.0).epsilon(1e-14));
  CHECK((ops.stiffness * one).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("stiffness is linear in kappa", "[fem]") {
  const FineMesh mesh(6);
  const auto a = assemble(mesh, MediumField::homogeneous(6, 1.0));
  const auto b = assemble(mesh, MediumField::homogeneous(6, 2.0));
  CHECK((Matrix(b.stiffness) - 2.0 * Matrix(a.stiffness)).norm() < 1e-12);
  CHECK((Matrix(b.mass) - Matrix(a.mass)).norm() == 0.0);
}

TEST_CASE("homogeneous stiffness is the five-point Laplacian", "[fem]") {
  const FineMesh mesh(5);
  const auto ops = assemble(mesh, MediumField::homogeneous(5, 1.0));
  const Matrix S(ops.stiffness);
  for (Eigen::Index i = 0; i < S.rows(); ++i) {
    CHECK(S(i, i) == Approx(4.0));
    CHECK(S.row(i).sum() >= -1e-12);  // diagonally dominant M-matrix
  }
}

TEST_CASE("SPD solver", "[fem]") {
  SparseMatrix I(4, 4);
  I.setIdentity();
  const Vector b = Vector::LinSpaced(4, 1.0, 4.0);
  CHECK((solve_spd(I, b) - b).norm() == 0.0);

  const FineMesh mesh(6);
  const auto ops = assemble(mesh, MediumField::homogeneous(6, 1.0));
  const Vector e1 = Vector::Unit(ops.size(), 0);
  CHECK((solve_spd(ops.mass, ops.mass * e1) - e1).norm() < 1e-10);

  Matrix A(5, 5);
  A << 4, 1, 0, 0, 1, 1, 5, 2, 0, 0, 0, 2, 6, 1, 0, 0, 0, 1, 3, 1, 1, 0, 0, 1, 7;
  const Vector rhs = Vector::LinSpaced(5, -1.0, 3.0);
  const Vector oracle = A.llt().solve(rhs);
  CHECK((solve_spd(A.sparseView(), rhs) - oracle).norm() < 1e-9);

  Matrix indefinite = Matrix::Identity(3, 3);
  indefinite(2, 2) = -1.0;
  CHECK_THROWS_AS(SpdSolver(indefinite.sparseView()), NumericalError);
}

TEST_CASE("point evaluation", "[fem]") {
  const FineMesh mesh(10);
  std::vector<double> c(mesh.node_count(), 3.5), lin(mesh.node_count());
  for (std::size_t n = 0; n < lin.size(); ++n) lin[n] = mesh.coord(static_cast<int>(n)).x + mesh.coord(static_cast<int>(n)).y;
  CHECK(evaluate_at_point(mesh, c, {0.37, 0.61}) == Approx(3.5));
  CHECK(evaluate_at_point(mesh, lin, {0.4, 0.2}) == Approx(0.6));
  CHECK(evaluate_at_point(mesh, lin, {0.33, 0.71}) == Approx(1.04));
  CHECK(evaluate_at_point(mesh, lin, {0.3, 0.5}) == Approx(0.8));  // a node
  CHECK_THROWS_AS(point_weights(mesh, {0.0, 0.5}), ConfigError);
}

TEST_CASE("medium and source rasters", "[fem]") {
  std::istringstream good("2 2\n1 2\n3 4\n");
  const auto med = MediumField::from_raster(good);
  CHECK(med.cell(1, 0) == 2.0);
  CHECK(med.cell(0, 1) == 3.0);
  std::istringstream bad("2 2\n1 -2\n3 4\n");
  CHECK_THROWS_AS(MediumField::from_raster(bad), ConfigError);
  std::istringstream short_("2 2\n1 2 3\n");
  CHECK_THROWS_AS(MediumField::from_raster(short_), ConfigError);
  CHECK_THROWS_AS(MediumField::homogeneous(4, 1.0).validate(FineMesh(5)), ConfigError);
}

TEST_CASE("bump source is clipped, vanishes on the boundary and away from its support", "[fem]") {
  const FineMesh mesh(50);
  const auto f = SpatialSource::bump(mesh, {0.6, 0.6}, 0.3, 1.0);
  CHECK(f.max_value() <= 1.0);
  CHECK(f.max_value() > 0.99);
  CHECK(evaluate_at_point(mesh, f.values, {0.4, 0.2}) == 0.0);
  CHECK(evaluate_at_point(mesh, f.values, {0.6, 0.6}) == Approx(1.0));
  for (std::size_t n = 0; n < mesh.node_count(); ++n)
    if (!mesh.is_interior(static_cast<int>(n))) REQUIRE(f.values[n] == 0.0);
}

TEST_CASE("synthetic channels are reproducible and bounded", "[fem]") {
  const auto a = MediumField::synthetic_channels(100, 1e3, 1);
  const auto b = MediumField::synthetic_channels(100, 1e3, 1);
  const auto c = MediumField::synthetic_channels(100, 1e3, 2);
  CHECK(a.kappa == b.kappa);
  CHECK(a.kappa != c.kappa);
  int high = 0;
  for (double k : a.kappa) {
    REQUIRE((k == 1.0 || k == 1e3));
    high += k == 1e3;
  }
  CHECK(high == 3 * 2 * 80);  // 3 channels, 2 cells wide, 10-cell margins
}
