#include <doctest.h>

#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "garmentgen/guidance.hpp"
#include "garmentgen/njf.hpp"
#include "garmentgen/primitives.hpp"
#include "oracles.hpp"

using namespace garmentgen;

namespace {

CameraView front_ortho(int res, double half = 1.0) {
  CameraView cam;
  cam.position = Vec3(0, 0, 5);
  cam.projection = Projection::Orthographic;
  cam.ortho_half_height = half;
  cam.width = res;
  cam.height = res;
  return cam;
}

LatentImage random_image(int h, int w, int c, std::uint64_t seed) {
  Rng rng(seed);
  LatentImage img(h, w, c);
  for (double& v : img.data) v = standard_normal(rng);
  return img;
}

// Nearest two-sided ray hit over all faces: (t, face, min barycentric).
struct OracleHit {
  double t = std::numeric_limits<double>::infinity();
  int face = -1;
};

OracleHit cast(const TriMesh& m, const Vec3& o, const Vec3& d) {
  OracleHit best;
  for (std::size_t f = 0; f < m.faces.size(); ++f) {
    const auto& t = m.faces[f];
    const auto hit = oracle::ray_triangle(o, d, m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]);
    if (hit && *hit < best.t) {
      best.t = *hit;
      best.face = static_cast<int>(f);
    }
  }
  return best;
}

double loss_on_normals(const NormalRender& r, const std::vector<Vec3>& weights) {
  double s = 0.0;
  for (std::size_t i = 0; i < r.normals.size(); ++i) s += weights[i].dot(r.normals[i]);
  return s;
}

std::vector<Vec3> random_vecs(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vec3> v(n);
  for (Vec3& x : v) x = Vec3(standard_normal(rng), standard_normal(rng), standard_normal(rng));
  return v;
}

}  // namespace

TEST_CASE("camera projection and rays agree") {
  CameraView cam;
  cam.position = Vec3(1, 2, 3);
  cam.target = Vec3(0, 0.2, 0);
  cam.width = 64;
  cam.height = 48;
  for (Projection proj : {Projection::Perspective, Projection::Orthographic}) {
    cam.projection = proj;
    Vec3 o, d;
    cam.ray(20.5, 11.25, o, d);
    const Vec3 p = o + 2.5 * d;
    const Vec3 s = cam.project(p);
    CHECK(s.x() == doctest::Approx(20.5));
    CHECK(s.y() == doctest::Approx(11.25));
    CHECK(s.z() == doctest::Approx((p - cam.position).dot(cam.basis().forward)));
  }
  CameraView bad = cam;
  bad.up = (cam.target - cam.position);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cam;
  bad.width = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("rasterizer matches ray casting") {
  const TriMesh scene = merge_meshes({make_icosphere(2, 0.6, Vec3(0.2, 0, 0)), make_box(Vec3(0.3, 0.5, 0.2), Vec3(-0.4, 0.1, -0.5))});
  CameraView cam;
  cam.position = Vec3(0.5, 0.8, 3);
  cam.width = 80;
  cam.height = 64;
  const Raster r = rasterize(scene, cam);
  int covered = 0, compared = 0;
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      Vec3 o, d;
      cam.ray(x + 0.5, y + 0.5, o, d);
      const OracleHit h = cast(scene, o, d);
      if (h.face < 0) {
        CHECK_FALSE(r.covered(x, y));
        continue;
      }
      ++covered;
      if (!r.covered(x, y)) continue;  // grazing edge pixel
      ++compared;
      CHECK(r.depth[r.index(x, y)] == doctest::Approx(h.t).epsilon(1e-9));
    }
  }
  CHECK(compared > covered - 20);
}

TEST_CASE("coincident faces resolve to the lower id") {
  TriMesh m;
  m.vertices = {Vec3(-1, -1, 0), Vec3(1, -1, 0), Vec3(0, 1, 0)};
  m.faces = {{0, 1, 2}, {0, 1, 2}};
  const Raster r = rasterize(m, front_ortho(16, 1.5));
  for (int f : r.face) CHECK(f <= 0);
}

TEST_CASE("normal render") {
  SUBCASE("front-facing quad") {
    const NormalRender r = render_normal_map(make_grid(2, 2, 1.0, 1.0), front_ortho(32));
    int fg = 0;
    for (std::size_t i = 0; i < r.normals.size(); ++i) {
      if (r.raster.face[i] < 0) {
        CHECK(r.normals[i].isZero());
        continue;
      }
      ++fg;
      CHECK((r.normals[i] - Vec3(0, 0, 1)).norm() < 1e-12);
    }
    CHECK(fg == 16 * 16);
  }
  SUBCASE("sphere normals follow the radial direction") {
    const TriMesh sphere = make_icosphere(4);
    CameraView cam;
    cam.width = cam.height = 128;
    const NormalRender r = render_normal_map(sphere, cam);
    Rng rng(12);
    int checked = 0;
    double worst = 0.0;
    while (checked < 100) {
      const int x = static_cast<int>(uniform01(rng) * 128);
      const int y = static_cast<int>(uniform01(rng) * 128);
      if (!r.raster.covered(x, y)) continue;
      Vec3 o, d;
      cam.ray(x + 0.5, y + 0.5, o, d);
      const OracleHit h = cast(sphere, o, d);
      REQUIRE(h.face >= 0);
      const Vec3 radial = (o + h.t * d).normalized();
      const Vec3& n = r.normals[r.raster.index(x, y)];
      CHECK(std::abs(n.norm() - 1.0) < 1e-6);
      worst = std::max(worst, (n - radial).norm());
      ++checked;
    }
    CHECK(worst < 2e-2);
  }
  SUBCASE("empty mesh") {
    const NormalRender r = render_normal_map(TriMesh{}, front_ortho(8));
    for (int f : r.raster.face) CHECK(f == -1);
  }
}

TEST_CASE("normal render backprop") {
  CameraView cam;
  cam.position = Vec3(0.3, 0.4, 2.5);
  cam.width = cam.height = 40;

  SUBCASE("zero image gradient") {
    const TriMesh m = make_icosphere(1);
    const NormalRender r = render_normal_map(m, cam);
    for (const Vec3& g : backprop_normal_render(m, r, std::vector<Vec3>(r.normals.size(), Vec3::Zero()))) {
      CHECK(g.isZero());
    }
  }

  for (const TriMesh& base : {make_grid(1, 1, 1.2, 1.0), make_icosphere(1, 0.8)}) {
    TriMesh m = base;
    if (m.num_faces() == 2) m.faces.pop_back();  // single triangle
    Rng rng(4);
    for (Vec3& v : m.vertices) v += 0.05 * Vec3(uniform01(rng), uniform01(rng), uniform01(rng));
    const NormalRender frozen = render_normal_map(m, cam);
    const auto w = random_vecs(frozen.normals.size(), 9);
    const auto grad = backprop_normal_render(m, frozen, w);
    auto f = [&](const std::vector<Vec3>& x) {
      TriMesh moved = m;
      moved.vertices = x;
      NormalRender r = frozen;
      reshade_normals(moved, r);
      return loss_on_normals(r, w);
    };
    CHECK(oracle::relative_error(grad, oracle::fd_gradient(f, m.vertices, 1e-6)) < 1e-4);

    // a rigid translation leaves every normal unchanged
    const Vec3 shift = 0.3 * cam.basis().right + 0.2 * cam.basis().up;
    double along = 0.0, scale = 0.0;
    for (const Vec3& g : grad) {
      along += g.dot(shift);
      scale += g.norm() * shift.norm();
    }
    CHECK(std::abs(along) <= 1e-10 * scale);
  }
}

TEST_CASE("trajectory inversion") {
  const LatentImage x0 = random_image(4, 4, 2, 1);
  SUBCASE("zero field") {
    const LatentImage x = invert_trajectory(ZeroField{}, x0, 700, 10);
    CHECK(x.data == x0.data);
  }
  SUBCASE("constant field") {
    const LatentImage c = random_image(4, 4, 2, 2);
    const LatentImage x = invert_trajectory(ConstantField(c), x0, 640, 7);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(x.data[i] - (x0.data[i] + 0.64 * c.data[i])) < 1e-14);
  }
  SUBCASE("linear field converges at first order") {
    const double omega = 2.0;
    Eigen::MatrixXd a(2, 2);
    a << 0.0, -omega, omega, 0.0;
    const LinearField field(a);
    const double tau = 0.8;
    const Eigen::Matrix2d rot = Eigen::Rotation2Dd(omega * tau).toRotationMatrix();
    double prev = 0.0;
    for (int steps : {10, 20, 40, 80, 160}) {
      const LatentImage x = invert_trajectory(field, x0, 1000 * tau, steps);
      double err = 0.0;
      for (std::size_t p = 0; p < 16; ++p) {
        const Eigen::Vector2d expect = rot * Eigen::Vector2d(x0.data[2 * p], x0.data[2 * p + 1]);
        err = std::max(err, (Eigen::Vector2d(x.data[2 * p], x.data[2 * p + 1]) - expect).norm());
      }
      if (prev > 0.0) {
        CHECK(err < prev);
        CHECK(prev / err == doctest::Approx(2.0).epsilon(0.2));
      }
      prev = err;
    }
  }
  SUBCASE("preconditions") {
    CHECK_THROWS_AS(invert_trajectory(ZeroField{}, x0, 0, 10), std::invalid_argument);
    CHECK_THROWS_AS(invert_trajectory(ZeroField{}, x0, 1001, 10), std::invalid_argument);
    CHECK_THROWS_AS(invert_trajectory(ZeroField{}, x0, 500, 0), std::invalid_argument);
  }
  SUBCASE("non-finite intermediate") {
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(2, 2) * 1e308;
    CHECK_THROWS_AS(invert_trajectory(LinearField(a), x0, 1000, 2), std::runtime_error);
  }
}

TEST_CASE("interval score matching") {
  const LatentImage x0 = random_image(8, 8, 4, 3);
  const LatentImage delta = random_image(8, 8, 4, 4);
  const ConditionToken y{"a red dress"};

  SUBCASE("constant conditional offset with zero drift") {
    const OffsetConditionalField field(std::make_shared<ZeroField>(), delta);
    const LatentImage g = ism_gradient(field, x0, 800, 750, y, 1.5);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g.data[i] == 1.5 * delta.data[i]);
  }
  SUBCASE("condition-independent drift cancels") {
    const OffsetConditionalField field(std::make_shared<ConstantField>(random_image(8, 8, 4, 5)), delta);
    const LatentImage g = ism_gradient(field, x0, 600, 550, y, 1.0);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(g.data[i] - delta.data[i]) < 1e-14);
  }
  SUBCASE("zero weight") {
    const OffsetConditionalField field(std::make_shared<ZeroField>(), delta);
    const LatentImage g = ism_gradient(field, x0, 800, 750, y, 0.0);
    for (double v : g.data) CHECK(v == 0.0);
  }
  SUBCASE("s may be zero") {
    const OffsetConditionalField field(std::make_shared<ZeroField>(), delta);
    CHECK(ism_gradient(field, x0, 50, 0, y, 1.0).data == delta.data);
  }
  SUBCASE("point attractor direction") {
    const LatentImage a_null = random_image(8, 8, 4, 6);
    const LatentImage a_y = random_image(8, 8, 4, 7);
    const PointAttractorField field(a_null, {{y.id, a_y}});
    LatentImage expect = a_y;
    axpy(expect, -1.0, a_null);
    for (double t : {100.0, 500.0, 980.0}) {
      const LatentImage g = ism_gradient(field, x0, t, t - 50, y, 1.0);
      const double cosine = dot(g, expect) / std::sqrt(dot(g, g) * dot(expect, expect));
      CHECK(cosine > 0.99);
    }
    CHECK_THROWS_AS(ism_gradient(field, x0, 500, 450, ConditionToken{"unknown"}, 1.0), std::out_of_range);
  }
  SUBCASE("preconditions") {
    const ZeroField field;
    CHECK_THROWS_AS(ism_gradient(field, x0, 500, 500, y, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(ism_gradient(field, x0, 1200, 500, y, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(ism_gradient(field, x0, 500, -1, y, 1.0), std::invalid_argument);
  }
  SUBCASE("target latent field is the gradient of a quadratic") {
    const LatentImage target = random_image(8, 8, 4, 8);
    const TargetLatentField field(target);
    const LatentImage g = ism_gradient(field, x0, 700, 650, y, 1.0);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g.data[i] == doctest::Approx(x0.data[i] - target.data[i]));
  }
}

TEST_CASE("latent encoding") {
  const LatentImage img = random_image(16, 12, 3, 10);
  CHECK(encode_latent(img, 1).data == img.data);
  const LatentImage flat(8, 8, 2, 0.37);
  for (double v : encode_latent(flat, 4).data) CHECK(v == doctest::Approx(0.37));
  const LatentImage b = random_image(4, 3, 3, 11);
  CHECK(std::abs(dot(encode_latent(img, 4), b) - dot(img, decode_gradient(b, 4))) < 1e-10);
  CHECK_THROWS_AS(encode_latent(img, 5), std::invalid_argument);
}

TEST_CASE("target shape guidance") {
  const TriMesh tpl = make_icosphere(2, 0.5);
  SUBCASE("identical meshes") {
    const ShapeGuidance g = target_shape_guidance(tpl, tpl, 500, 3);
    CHECK(g.value == 0.0);
    for (const Vec3& v : g.grad) CHECK(v.norm() < 1e-6);
  }
  SUBCASE("translated mesh is pulled back") {
    TriMesh moved = tpl;
    for (Vec3& v : moved.vertices) v.x() += 0.1;
    const ShapeGuidance g = target_shape_guidance(moved, tpl, 2000, 3);
    Vec3 total = Vec3::Zero();
    for (const Vec3& v : g.grad) total += v;
    // each direction contributes about 2 * 0.1 per unit sample weight
    CHECK(total.normalized().x() > 0.99);
    CHECK(total.x() == doctest::Approx(0.4).epsilon(0.25));
  }
  SUBCASE("finite differences") {
    TriMesh m = make_icosphere(1, 0.5);
    Rng rng(2);
    for (Vec3& v : m.vertices) v += 0.05 * Vec3(uniform01(rng), uniform01(rng), uniform01(rng));
    const TriMesh target = make_icosphere(2, 0.6, Vec3(0.05, 0, 0));
    const ShapeGuidance g = target_shape_guidance(m, target, 300, 5);
    auto f = [&](const std::vector<Vec3>& x) {
      TriMesh mm = m;
      mm.vertices = x;
      return target_shape_guidance(mm, target, 300, 5).value;
    };
    CHECK(oracle::relative_error(g.grad, oracle::fd_gradient(f, m.vertices, 1e-7)) < 1e-3);
  }
}

TEST_CASE("full chain gradient matches finite differences") {
  const TriMesh tpl = make_icosphere(1, 0.7);
  const PoissonSystem sys(tpl);
  Rng rng(21);
  JacobianField j(sys.num_faces());
  for (Mat3& m : j) {
    m = Mat3::Identity();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) m(r, c) += 0.1 * standard_normal(rng);
  }
  CameraView cam;
  cam.position = Vec3(0.6, 0.5, 2.6);
  cam.width = cam.height = 48;
  const int factor = 4;
  const NormalRender frozen = render_normal_map(sys.deform(j), cam);
  const LatentImage weights = random_image(12, 12, 3, 22);

  auto loss = [&](const JacobianField& jj) {
    NormalRender r = frozen;
    reshade_normals(sys.deform(jj), r);
    return dot(encode_latent(normals_to_image(r), factor), weights);
  };

  const TriMesh current = sys.deform(j);
  const auto dimage = image_to_normal_grads(decode_gradient(weights, factor));
  const auto dv = backprop_normal_render(current, frozen, dimage);
  const JacobianField dj = sys.backprop(dv);

  const double h = 1e-6;
  double num = 0.0, den = 1e-12;
  for (int trial = 0; trial < 40; ++trial) {
    const auto f = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(sys.num_faces()));
    const int r = static_cast<int>(uniform01(rng) * 3);
    const int c = static_cast<int>(uniform01(rng) * 3);
    JacobianField jp = j, jm = j;
    jp[f](r, c) += h;
    jm[f](r, c) -= h;
    const double fd = (loss(jp) - loss(jm)) / (2 * h);
    num = std::max(num, std::abs(fd - dj[f](r, c)));
    den = std::max(den, std::abs(fd));
  }
  CHECK(num / den < 1e-3);
}

TEST_CASE("guidance camera sampling") {
  Rng rng(1);
  CameraDistribution dist;
  const Vec3 center(0.1, 0.2, 0.3);
  const auto cams = sample_cameras(rng, center, dist, 200);
  CHECK(cams.size() == 200);
  for (const CameraView& c : cams) {
    const Vec3 d = c.position - center;
    CHECK(d.norm() == doctest::Approx(dist.radius));
    const double el = std::asin(d.y() / d.norm()) * 180.0 / std::numbers::pi;
    CHECK(el >= -15.0 - 1e-9);
    CHECK(el <= 30.0 + 1e-9);
    CHECK(c.target == center);
    CHECK(c.width == 512);
  }
}
