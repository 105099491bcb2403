#include <doctest.h>

#include <cmath>

#include <Eigen/Geometry>

#include "garmentgen/losses.hpp"
#include "garmentgen/primitives.hpp"
#include "garmentgen/random.hpp"
#include "oracles.hpp"

using namespace garmentgen;

namespace {

std::vector<Vec3> random_points(std::size_t n, std::uint64_t seed, double lo, double hi) {
  Rng rng(seed);
  std::vector<Vec3> pts(n);
  for (Vec3& p : pts) {
    for (int k = 0; k < 3; ++k) p[k] = lo + (hi - lo) * uniform01(rng);
  }
  return pts;
}

TriMesh bumpy_grid(int n, std::uint64_t seed) {
  TriMesh m = make_grid(n, n, 1.0, 1.0);
  Rng rng(seed);
  for (Vec3& v : m.vertices) {
    v.z() = 0.15 * (uniform01(rng) - 0.5);
    v.x() += 0.02 * (uniform01(rng) - 0.5);
  }
  return m;
}

TriMesh with_vertices(TriMesh m, const std::vector<Vec3>& v) {
  m.vertices = v;
  return m;
}

}  // namespace

TEST_CASE("collision loss") {
  const BodySdf sdf(make_box(Vec3(1, 1, 1)));
  SUBCASE("single penetrating sample") {
    const std::vector<Vec3> p{Vec3(0.99, 0.0, 0.0)};
    const SampleLoss l = collision_loss(p, sdf, 0.005);
    CHECK(l.value == doctest::Approx(0.015).epsilon(1e-12));
    CHECK(l.grad[0].isApprox(Vec3(-1, 0, 0)));
  }
  SUBCASE("samples beyond epsilon contribute nothing") {
    const std::vector<Vec3> p{Vec3(1.006, 0, 0), Vec3(0, 3, 0), Vec3(2, 2, 2)};
    const SampleLoss l = collision_loss(p, sdf, 0.005);
    CHECK(l.value == 0.0);
    for (const Vec3& g : l.grad) CHECK(g.isZero());
  }
  SUBCASE("gradient matches finite differences") {
    const BodySdf sphere(make_icosphere(3));
    auto pts = random_points(300, 11, -1.2, 1.2);
    auto f = [&](const std::vector<Vec3>& x) { return collision_loss(x, sphere, 0.05).value; };
    const SampleLoss l = collision_loss(pts, sphere, 0.05);
    CHECK(l.value > 0.0);
    CHECK(oracle::relative_error(l.grad, oracle::fd_gradient(f, pts, 1e-7)) < 1e-4);
  }
}

TEST_CASE("blocking loss") {
  const auto cyl = BlockingCylinder::make(Vec3::Zero(), Vec3(2, 0, 0), 0.5, "wrist");
  CHECK(cyl.axis == Vec3::UnitX());
  SUBCASE("sample on the axis") {
    const std::vector<Vec3> p{Vec3(0.2, 0, 0)};
    const std::vector<BlockingCylinder> c{cyl};
    const SampleLoss l = blocking_loss(p, c);
    CHECK(l.value == doctest::Approx(0.2));
    CHECK(l.grad[0] == Vec3(1, 0, 0));
  }
  SUBCASE("just outside the radius") {
    const std::vector<Vec3> p{Vec3(0.2, 0.51, 0)};
    const std::vector<BlockingCylinder> c{cyl};
    CHECK(blocking_loss(p, c).value == 0.0);
  }
  SUBCASE("behind the closed end") {
    const std::vector<Vec3> p{Vec3(-0.2, 0, 0)};
    const std::vector<BlockingCylinder> c{cyl};
    CHECK(blocking_loss(p, c).value == 0.0);
  }
  SUBCASE("random samples and cylinders") {
    const std::vector<BlockingCylinder> c{
        BlockingCylinder::make(Vec3(0.1, 0.2, 0), Vec3(1, 0.3, 0.1), 0.6),
        BlockingCylinder::make(Vec3(-0.2, 0, 0.1), Vec3(-0.2, 1, 0.4), 0.4),
    };
    const auto pts = random_points(400, 4, -1, 1);
    const SampleLoss l = blocking_loss(pts, c);
    CHECK(l.value > 0.0);
    auto f = [&](const std::vector<Vec3>& x) { return blocking_loss(x, c).value; };
    CHECK(oracle::relative_error(l.grad, oracle::fd_gradient(f, pts, 1e-7)) < 1e-4);

    const Vec3 shift(0.3, -1.7, 2.2);
    std::vector<Vec3> moved = pts;
    for (Vec3& p : moved) p += shift;
    std::vector<BlockingCylinder> moved_c = c;
    for (auto& m : moved_c) m.closed_end_center += shift;
    CHECK(std::abs(blocking_loss(moved, moved_c).value - l.value) < 1e-12);
  }
  SUBCASE("invalid cylinders") {
    CHECK_THROWS_AS(BlockingCylinder::make(Vec3::Zero(), Vec3::Zero(), 1.0), std::invalid_argument);
    CHECK_THROWS_AS(BlockingCylinder::make(Vec3::Zero(), Vec3::UnitX(), 0.0), std::invalid_argument);
  }
}

TEST_CASE("cylinder json") {
  const auto c = parse_cylinders(R"([{"center":[0,1,0],"axis":[0,3,0],"radius":0.2,"name":"neck"}])");
  REQUIRE(c.size() == 1);
  CHECK(c[0].axis == Vec3::UnitY());
  CHECK(c[0].name == "neck");
  const auto again = parse_cylinders(format_cylinders(c));
  CHECK(again[0].closed_end_center == c[0].closed_end_center);
  CHECK(again[0].radius == c[0].radius);
  CHECK(parse_cylinders(R"({"cylinders":[]})").empty());
  CHECK_THROWS(parse_cylinders(R"([{"center":[0,1],"axis":[1,0,0],"radius":1}])"));
  CHECK_THROWS(parse_cylinders(R"([{"center":[0,0,0],"axis":[1,0,0]}])"));
}

TEST_CASE("symmetry loss") {
  SUBCASE("single sample") {
    const std::vector<Vec3> p{Vec3(1, 0, 0)};
    const SampleLoss l = symmetry_loss(p);
    CHECK(l.value == doctest::Approx(8.0));
    // L = 2 (2x)^2 with x = 1
    CHECK(l.grad[0].isApprox(Vec3(16, 0, 0)));
  }
  SUBCASE("mirror-symmetric set") {
    auto pts = random_points(50, 2, -1, 1);
    const std::size_t n = pts.size();
    for (std::size_t i = 0; i < n; ++i) pts.push_back(mirror_x(pts[i]));
    const SampleLoss l = symmetry_loss(pts);
    CHECK(l.value == 0.0);
  }
  SUBCASE("matches brute force and finite differences") {
    const auto pts = random_points(200, 21, -1, 1);
    const SampleLoss l = symmetry_loss(pts);
    CHECK(l.value == oracle::mirror_chamfer(pts));
    auto f = [](const std::vector<Vec3>& x) { return symmetry_loss(x).value; };
    CHECK(oracle::relative_error(l.grad, oracle::fd_gradient(f, pts, 1e-7)) < 1e-4);
  }
  SUBCASE("invariant under motions commuting with the reflection") {
    const auto pts = random_points(150, 8, -1, 1);
    const double base = symmetry_loss(pts).value;
    const Eigen::Matrix3d rot = Eigen::AngleAxisd(0.7, Vec3::UnitX()).toRotationMatrix();
    std::vector<Vec3> rotated, mirrored;
    for (const Vec3& p : pts) {
      rotated.push_back(rot * p + Vec3(0, 0.4, -0.3));
      mirrored.push_back(mirror_x(p));
    }
    CHECK(std::abs(symmetry_loss(rotated).value - base) < 1e-9);
    CHECK(std::abs(symmetry_loss(mirrored).value - base) < 1e-9);
  }
}

TEST_CASE("laplacian loss") {
  SUBCASE("flat grid interior") {
    const TriMesh g = make_grid(8, 6, 2.0, 1.5);
    CHECK(laplacian_loss(g, LaplacianScope::InteriorOnly).value < 1e-28);
  }
  SUBCASE("lifted hexagon center") {
    TriMesh hex = make_hex_patch(1.0);
    const double h = 0.3;
    hex.vertices[0].z() = h;
    const LaplacianLoss l = laplacian_loss(hex);
    CHECK(l.per_vertex[0] == doctest::Approx(h * h / 7.0));
    const LaplacianLoss interior = laplacian_loss(hex, LaplacianScope::InteriorOnly);
    CHECK(interior.value == doctest::Approx(h * h));
  }
  SUBCASE("isolated vertices are skipped and counted") {
    TriMesh hex = make_hex_patch(1.0);
    hex.vertices.emplace_back(5, 5, 5);
    const LaplacianLoss l = laplacian_loss(hex);
    CHECK(l.isolated == 1);
    CHECK(l.grad[7].isZero());
  }
  SUBCASE("gradient matches finite differences") {
    const TriMesh m = bumpy_grid(6, 3);
    auto f = [&](const std::vector<Vec3>& x) { return laplacian_loss(with_vertices(m, x)).value; };
    const LaplacianLoss l = laplacian_loss(m);
    CHECK(oracle::relative_error(l.grad, oracle::fd_gradient(f, m.vertices, 1e-6)) < 1e-4);
  }
}

TEST_CASE("normal consistency loss") {
  SUBCASE("flat mesh") {
    CHECK(normal_consistency_loss(make_grid(5, 5, 1, 1)).value < 1e-15);
  }
  SUBCASE("ninety degree fold") {
    TriMesh m;
    m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
    // (0,1) is the shared edge; face 0 lies in z=0, face 1 in y=0
    m.faces = {{0, 1, 2}, {1, 0, 3}};
    CHECK(normal_consistency_loss(m).value == doctest::Approx(1.0));
  }
  SUBCASE("no interior edge") {
    TriMesh m;
    m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
    m.faces = {{0, 1, 2}};
    CHECK_THROWS_AS(normal_consistency_loss(m), std::invalid_argument);
  }
  SUBCASE("gradient matches finite differences") {
    const TriMesh m = bumpy_grid(6, 5);
    auto f = [&](const std::vector<Vec3>& x) { return normal_consistency_loss(with_vertices(m, x)).value; };
    const VertexLoss l = normal_consistency_loss(m);
    CHECK(l.value > 0.0);
    CHECK(oracle::relative_error(l.grad, oracle::fd_gradient(f, m.vertices, 1e-6)) < 1e-4);
  }
}

TEST_CASE("loss weights validation names the field") {
  LossWeights w;
  w.blocking = -1.0;
  try {
    w.validate();
    FAIL("expected invalid_argument");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("lambda_blk") != std::string::npos);
  }
  LossWeights e;
  e.epsilon = 0.0;
  CHECK_THROWS_AS(e.validate(), std::invalid_argument);
}

TEST_CASE("total geometry loss") {
  // sleeve tube slightly inside an arm capsule, crossing a wrist cylinder
  const TriMesh sleeve = make_tube(0.28, -0.5, 0.75, 16, 12);
  REQUIRE(sleeve.num_vertices() >= 200);
  const BodySdf arm(make_capsule(0.3, 0.8, 24, 16));
  const std::vector<BlockingCylinder> cyl{BlockingCylinder::make(Vec3(0.6, 0, 0), Vec3::UnitX(), 0.45)};
  const SamplePoints samples = sample_surface(sleeve, 800, 42);

  SUBCASE("zero weights") {
    const LossWeights w{0, 0, 0, 0, 0, 0.005};
    const GeometryLoss l = total_geometry_loss(sleeve, samples, &arm, cyl, w, true);
    CHECK(l.value == 0.0);
    for (const Vec3& g : l.grad) CHECK(g.isZero());
  }

  SUBCASE("components recomputed independently") {
    const LossWeights w;
    const GeometryLoss l = total_geometry_loss(sleeve, samples, &arm, cyl, w, true);
    const auto pos = sample_positions(sleeve, samples);
    const double coll = collision_loss(pos, arm, w.epsilon).value;
    const double blk = blocking_loss(pos, cyl).value;
    const double sym = symmetry_loss(pos).value;
    const double lap = laplacian_loss(sleeve).value;
    const double nc = normal_consistency_loss(sleeve).value;
    CHECK(coll > 0.0);
    CHECK(blk > 0.0);
    CHECK(l.terms.collision == coll);
    CHECK(l.terms.blocking == blk);
    CHECK(l.terms.symmetry == sym);
    CHECK(l.terms.laplacian == lap);
    CHECK(l.terms.normal_consistency == nc);
    const double expected = 5e5 * coll + 1e5 * blk + 5e5 * sym + 2e4 * lap + 2e4 * nc;
    CHECK(l.value == doctest::Approx(expected).epsilon(1e-14));

    const GeometryLoss no_sym = total_geometry_loss(sleeve, samples, &arm, cyl, w, false);
    CHECK(no_sym.terms.symmetry == 0.0);
    CHECK(no_sym.value == doctest::Approx(expected - 5e5 * sym).epsilon(1e-14));
  }

  SUBCASE("gradient matches finite differences") {
    const LossWeights w;
    const GeometryLoss l = total_geometry_loss(sleeve, samples, &arm, cyl, w, true);
    auto f = [&](const std::vector<Vec3>& x) {
      return total_geometry_loss(with_vertices(sleeve, x), samples, &arm, cyl, w, true).value;
    };
    CHECK(oracle::relative_error(l.grad, oracle::fd_gradient(f, sleeve.vertices, 1e-7)) < 1e-3);
  }

  SUBCASE("losses are non-negative") {
    for (std::uint64_t s = 0; s < 5; ++s) {
      const SamplePoints sp = sample_surface(sleeve, 200, s);
      const GeometryLoss l = total_geometry_loss(sleeve, sp, &arm, cyl, LossWeights{}, true);
      CHECK(l.terms.collision >= 0.0);
      CHECK(l.terms.blocking >= 0.0);
      CHECK(l.terms.symmetry >= 0.0);
      CHECK(l.value >= 0.0);
    }
  }
}
