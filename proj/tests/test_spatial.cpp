#include <doctest.h>

#include <cmath>

#include "garmentgen/primitives.hpp"
#include "garmentgen/random.hpp"
#include "garmentgen/spatial.hpp"
#include "oracles.hpp"

using namespace garmentgen;

namespace {

Vec3 random_point(Rng& rng, double lo, double hi) {
  return {lo + (hi - lo) * uniform01(rng), lo + (hi - lo) * uniform01(rng), lo + (hi - lo) * uniform01(rng)};
}

// Non-convex closed surface: icosphere with a radial bump field.
TriMesh bumpy_sphere() {
  TriMesh m = make_icosphere(3);
  for (Vec3& v : m.vertices) {
    const Vec3 d = v.normalized();
    v = d * (1.0 + 0.25 * std::sin(4.0 * d.x()) * std::cos(3.0 * d.y()) + 0.1 * d.z() * d.z());
  }
  return m;
}

}  // namespace

TEST_CASE("sphere signed distance") {
  const BodySdf sdf(make_icosphere(4));
  CHECK(sdf.signed_distance(Vec3::Zero()) == doctest::Approx(-1.0).epsilon(2e-2));
  CHECK(sdf.signed_distance(Vec3(2, 0, 0)) == doctest::Approx(1.0).epsilon(2e-2));
}

TEST_CASE("surface points and normal offsets") {
  const TriMesh sphere = make_icosphere(3);
  const BodySdf sdf(sphere);
  for (int v = 0; v < 40; ++v) CHECK(std::abs(sdf.signed_distance(sphere.vertices[static_cast<std::size_t>(v)])) < 1e-9);

  const auto normals = face_normals(sphere);
  for (std::size_t f = 0; f < sphere.faces.size(); f += 37) {
    const auto& t = sphere.faces[f];
    const Vec3 c = (sphere.vertices[t[0]] + sphere.vertices[t[1]] + sphere.vertices[t[2]]) / 3.0;
    CHECK(std::abs(sdf.signed_distance(c + 0.1 * normals[f]) - 0.1) < 1e-6);
    const SdfQuery q = sdf.query(c + 0.1 * normals[f]);
    CHECK((q.gradient - normals[f]).norm() < 1e-9);
    // on-surface gradient falls back to the face normal
    CHECK(sdf.query(c).gradient.isApprox(normals[static_cast<std::size_t>(sdf.query(c).face)]));
  }
}

TEST_CASE("accelerated distance equals brute-force scan") {
  const TriMesh body = bumpy_sphere();
  const BodySdf sdf(body);
  Rng rng(2024);
  double worst = 0.0;
  for (int i = 0; i < 500; ++i) {
    const Vec3 p = random_point(rng, -1.6, 1.6);
    worst = std::max(worst, std::abs(std::abs(sdf.signed_distance(p)) - oracle::unsigned_distance(body, p)));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("sign agrees with winding number") {
  for (const TriMesh& body : {bumpy_sphere(), merge_meshes({make_capsule(0.3, 0.6, 24, 20), make_box(Vec3(0.3, 0.4, 0.2), Vec3(0, 0, 1.0))})}) {
    const BodySdf sdf(body);
    Rng rng(77);
    int compared = 0, agree = 0;
    for (int i = 0; i < 1000; ++i) {
      const Vec3 p = random_point(rng, -1.5, 1.5);
      const double d = sdf.signed_distance(p);
      if (std::abs(d) < 1e-4) continue;
      const bool inside = winding_number(body, p) > 0.5;
      ++compared;
      agree += (d < 0.0) == inside;
    }
    CHECK(compared > 900);
    CHECK(agree == compared);
  }
}

TEST_CASE("signed distance is 1-Lipschitz") {
  const BodySdf sdf(bumpy_sphere());
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const Vec3 p = random_point(rng, -1.5, 1.5);
    const Vec3 q = p + 0.2 * random_point(rng, -1.0, 1.0);
    CHECK(std::abs(sdf.signed_distance(p) - sdf.signed_distance(q)) <= (p - q).norm() + 1e-12);
  }
}

TEST_CASE("sdf gradient matches finite differences away from the surface") {
  const BodySdf sdf(bumpy_sphere());
  Rng rng(8);
  int checked = 0;
  for (int i = 0; i < 200 && checked < 50; ++i) {
    const Vec3 p = random_point(rng, -1.4, 1.4);
    const SdfQuery q = sdf.query(p);
    if (std::abs(q.distance) < 0.05) continue;
    const double h = 1e-6;
    Vec3 fd;
    for (int k = 0; k < 3; ++k) {
      Vec3 a = p, b = p;
      a[k] += h;
      b[k] -= h;
      fd[k] = (sdf.signed_distance(a) - sdf.signed_distance(b)) / (2 * h);
    }
    // medial-axis points can have a kink; those disagree wildly, real ones to ~1e-6
    if ((fd - q.gradient).norm() < 1e-2) {
      CHECK((fd - q.gradient).norm() < 1e-5);
      ++checked;
    }
  }
  CHECK(checked >= 40);
}

TEST_CASE("open body surfaces are rejected") {
  try {
    BodySdf sdf(make_tube(0.3, -0.5, 0.5, 8, 2));
    FAIL("expected OpenSurfaceError");
  } catch (const OpenSurfaceError& e) {
    CHECK(e.boundary_edges().size() == 16);
  }
}

TEST_CASE("winding number") {
  const TriMesh cube = make_box(Vec3(0.5, 0.5, 0.5));
  CHECK(winding_number(cube, Vec3::Zero()) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::abs(winding_number(cube, Vec3(5, 5, 5))) < 1e-6);
  const double on_surface = winding_number(cube, Vec3(0.1, 0.2, 0.5));
  CHECK(on_surface > 0.4);
  CHECK(on_surface < 0.6);
}

TEST_CASE("nearest neighbor") {
  SUBCASE("single point") {
    const PointIndex idx({Vec3::Zero()});
    const auto [id, d] = idx.nearest(Vec3(1, 0, 0));
    CHECK(id == 0);
    CHECK(d == 1.0);
  }
  SUBCASE("grid matches linear scan exactly") {
    std::vector<Vec3> pts;
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 10; ++j)
        for (int k = 0; k < 10; ++k) pts.emplace_back(0.1 * i, 0.1 * j, 0.1 * k);
    const PointIndex idx(pts);
    Rng rng(3);
    for (int q = 0; q < 100; ++q) {
      const Vec3 p = random_point(rng, -0.2, 1.1);
      const auto fast = idx.nearest(p);
      const auto slow = oracle::nearest(pts, p);
      CHECK(fast.first == slow.first);
      CHECK(fast.second == slow.second);
    }
    const auto self = idx.nearest(pts[417]);
    CHECK(self.first == 417);
    CHECK(self.second == 0.0);
  }
  SUBCASE("random clouds with duplicates") {
    Rng rng(9);
    std::vector<Vec3> pts;
    for (int i = 0; i < 700; ++i) pts.push_back(random_point(rng, -1, 1));
    for (int i = 0; i < 50; ++i) pts.push_back(pts[static_cast<std::size_t>(i * 3)]);
    const PointIndex idx(pts);
    for (int q = 0; q < 300; ++q) {
      const Vec3 p = q % 3 == 0 ? pts[static_cast<std::size_t>(q)] : random_point(rng, -1.2, 1.2);
      const auto fast = idx.nearest(p);
      const auto slow = oracle::nearest(pts, p);
      CHECK(fast.first == slow.first);
      CHECK(fast.second == slow.second);
    }
  }
  SUBCASE("empty index") {
    const PointIndex idx({});
    CHECK_THROWS_AS(idx.nearest(Vec3::Zero()), std::logic_error);
  }
}

TEST_CASE("chamfer distance equals the quadratic scan") {
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Vec3> a, b;
    for (int i = 0; i < 200; ++i) a.push_back(random_point(rng, -1, 1));
    for (int i = 0; i < 200 - 17 * trial; ++i) b.push_back(random_point(rng, -0.5, 1.5));
    CHECK(chamfer_distance(a, b) == oracle::chamfer(a, b));
  }
  const std::vector<Vec3> p{Vec3(0, 0, 0), Vec3(1, 0, 0)};
  const std::vector<Vec3> q{Vec3(0, 2, 0)};
  CHECK(chamfer_distance(p, q) == doctest::Approx((4.0 + 5.0) / 2.0 + 4.0));
  CHECK(chamfer_distance(p, p) == 0.0);
  CHECK_THROWS_AS(chamfer_distance(p, {}), std::invalid_argument);
}

TEST_CASE("bvh leaves hold at most four triangles") {
  const TriMesh m = make_icosphere(4);
  const TriangleBvh bvh(m);
  CHECK(bvh.node_count() >= 2 * m.num_faces() / TriangleBvh::kMaxLeafSize - 1);
  CHECK(bvh.depth() < 40);
}
