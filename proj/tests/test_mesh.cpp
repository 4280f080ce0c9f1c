#include <catch_amalgamated.hpp>

#include "fsi/mesh.hpp"

using namespace fsi;
using Catch::Approx;

TEST_CASE("fine mesh counts", "[mesh]") {
  const FineMesh two(2);
  CHECK(two.node_count() == 9);
  CHECK(two.triangle_count() == 8);
  CHECK(two.interior_count() == 1);
  CHECK(FineMesh(100).interior_count() == 9801);
  CHECK(FineMesh(50).interior_count() == 2401);
  CHECK_THROWS_AS(FineMesh(1), ConfigError);
}

TEST_CASE("triangles are counter-clockwise and tile the square", "[mesh]") {
  const FineMesh mesh(7);
  double area = 0.0;
  for (int t = 0; t < static_cast<int>(mesh.triangle_count()); ++t) {
    REQUIRE(mesh.signed_area(t) > 0.0);
    area += mesh.signed_area(t);
  }
  CHECK(area == Approx(1.0).epsilon(1e-14));
}

TEST_CASE("point location and barycentrics", "[mesh]") {
  const FineMesh mesh(10);
  const Point2 p{0.43, 0.27};
  const auto t = mesh.locate(p);
  REQUIRE(t.has_value());
  const auto lam = mesh.barycentric(*t, p);
  double x = 0, y = 0, s = 0;
  for (int a = 0; a < 3; ++a) {
    CHECK(lam[a] >= -1e-14);
    x += lam[a] * mesh.coord(mesh.triangle(*t)[a]).x;
    y += lam[a] * mesh.coord(mesh.triangle(*t)[a]).y;
    s += lam[a];
  }
  CHECK(s == Approx(1.0));
  CHECK(x == Approx(p.x));
  CHECK(y == Approx(p.y));
  CHECK_FALSE(mesh.locate({1.5, 0.5}).has_value());
}

TEST_CASE("coarse grid vertices and neighborhoods", "[mesh]") {
  const FineMesh fine(100);
  CHECK(CoarseGrid(fine, 10).vertex_count() == 121);
  const FineMesh small(4);
  const CoarseGrid cg(small, 2);
  CHECK(cg.vertex_count() == 9);
  CHECK(cg.neighborhood(0).block_count == 1);  // corner
  CHECK(cg.neighborhood(1).block_count == 2);  // edge
  CHECK(cg.neighborhood(4).block_count == 4);  // center
  CHECK_THROWS_AS(CoarseGrid(fine, 7), ConfigError);
}

TEST_CASE("partition of unity sums to one", "[mesh]") {
  const FineMesh fine(100);
  const CoarseGrid cg(fine, 10);
  std::vector<double> sum(fine.node_count(), 0.0);
  for (std::size_t i = 0; i < cg.vertex_count(); ++i) {
    const auto chi = cg.partition_of_unity(fine, i);
    for (std::size_t n = 0; n < sum.size(); ++n) sum[n] += chi[n];
  }
  for (double s : sum) REQUIRE(s == Approx(1.0).margin(1e-13));
}
