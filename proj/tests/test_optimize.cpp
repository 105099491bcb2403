#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "garmentgen/optimize.hpp"
#include "garmentgen/primitives.hpp"
#include "garmentgen/scenes.hpp"

using namespace garmentgen;

namespace {

DeformConfig quiet_config(int iterations) {
  DeformConfig cfg;
  cfg.iterations = iterations;
  cfg.num_samples = 2000;
  cfg.seed = 7;
  return cfg;
}

bool same_trace(const std::vector<IterationRecord>& a, const std::vector<IterationRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a[i];
    const auto& y = b[i];
    if (x.iteration != y.iteration || x.timestep != y.timestep || x.ism != y.ism || x.total != y.total ||
        x.terms.collision != y.terms.collision || x.terms.blocking != y.terms.blocking ||
        x.terms.symmetry != y.terms.symmetry || x.terms.laplacian != y.terms.laplacian ||
        x.terms.normal_consistency != y.terms.normal_consistency)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters") {
    AdamState s(3, 0.1);
    std::vector<double> p{1, 2, 3};
    adam_step(s, p, std::vector<double>{0, 0, 0});
    CHECK(p == std::vector<double>{1, 2, 3});
    CHECK(s.step == 1);
  }
  SUBCASE("first step has magnitude lr") {
    AdamState s(2, 0.002);
    std::vector<double> p{0, 0};
    adam_step(s, p, std::vector<double>{3.0, -0.5});
    CHECK(p[0] == doctest::Approx(-0.002 * 3.0 / (3.0 + 1e-8)).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.002 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
  }
  SUBCASE("matches a textbook transcription") {
    Rng rng(5);
    AdamState s(4, 0.01);
    std::vector<double> p(4), m(4, 0.0), v(4, 0.0);
    for (double& x : p) x = standard_normal(rng);
    std::vector<double> q(p.begin(), p.end());
    for (int t = 1; t <= 50; ++t) {
      std::vector<double> g(4);
      for (double& x : g) x = standard_normal(rng);
      adam_step(s, p, g);
      for (int i = 0; i < 4; ++i) {
        m[i] = 0.9 * m[i] + 0.1 * g[i];
        v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
        const double mhat = m[i] / (1.0 - std::pow(0.9, t));
        const double vhat = v[i] / (1.0 - std::pow(0.999, t));
        q[i] -= 0.01 * mhat / (std::sqrt(vhat) + 1e-8);
      }
    }
    for (int i = 0; i < 4; ++i) CHECK(p[i] == doctest::Approx(q[i]).epsilon(1e-12));
  }
  SUBCASE("quadratic bowl descends") {
    AdamState s(2, 0.05);
    std::vector<double> p{1.0, -2.0};
    auto loss = [&] { return p[0] * p[0] + 3.0 * p[1] * p[1]; };
    std::vector<double> values;
    for (int t = 0; t < 100; ++t) {
      values.push_back(loss());
      adam_step(s, p, std::vector<double>{2.0 * p[0], 6.0 * p[1]});
    }
    for (std::size_t t = 1; t < 30; ++t) CHECK(values[t] < values[t - 1]);
    CHECK(values.back() < 1e-2 * values.front());
  }
  SUBCASE("bad input") {
    AdamState s(2, 0.1);
    std::vector<double> p{1, 1};
    CHECK_THROWS_AS(adam_step(s, p, std::vector<double>{1.0}), std::invalid_argument);
    CHECK_THROWS_AS(adam_step(s, p, std::vector<double>{1.0, std::nan("")}), NonFiniteError);
    CHECK(s.step == 0);
    CHECK(p == std::vector<double>{1, 1});
  }
}

TEST_CASE("timestep schedule") {
  CHECK(timestep_range(0) == std::pair{500, 980});
  CHECK(timestep_range(299) == std::pair{500, 980});
  CHECK(timestep_range(300) == std::pair{50, 980});
  CHECK(timestep_range(599) == std::pair{50, 980});
  CHECK_THROWS_AS(timestep_range(-1), std::invalid_argument);
}

TEST_CASE("deform config defaults and validation") {
  const DeformConfig d;
  CHECK(d.iterations == 600);
  CHECK(d.learning_rate == 0.002);
  CHECK(d.batch_size == 4);
  CHECK(d.num_samples == 50000);
  CHECK(d.weights.collision == 5e5);
  CHECK(d.weights.blocking == 1e5);
  CHECK(d.weights.epsilon == 0.005);
  CHECK_NOTHROW(d.validate());

  auto message = [](DeformConfig c) {
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  DeformConfig c;
  c.learning_rate = 0.0;
  CHECK(message(c).find("learning_rate") != std::string::npos);
  c = {};
  c.weights.collision = -1.0;
  CHECK(message(c).find("lambda_coll") != std::string::npos);
  c = {};
  c.guidance.latent_factor = 7;
  CHECK(message(c).find("resolution") != std::string::npos);
  c = {};
  c.schedule.max = 1001;
  CHECK(message(c).find("schedule.max") != std::string::npos);
  CHECK(parse_guidance_kind(to_string(GuidanceKind::RenderedTarget)) == GuidanceKind::RenderedTarget);
  CHECK_THROWS_AS(parse_guidance_kind("sds"), std::invalid_argument);
}

TEST_CASE("sleeve scene resolves penetration and blocking") {
  const SleeveScene s = make_sleeve_scene();
  const BodySdf sdf(s.body);
  CHECK(penetrating_fraction(s.sleeve, sdf, 5000, 1) > 0.1);
  CHECK(max_blocked_depth(s.sleeve, s.cylinders, 5000, 1) > 0.05);

  DeformConfig cfg;
  cfg.num_samples = 5000;
  cfg.seed = 3;
  const DeformResult r = run_deformation(s.sleeve, s.body, s.cylinders, cfg);
  CHECK(r.mesh.faces == s.sleeve.faces);
  CHECK(r.trace.size() == 600);
  CHECK(penetrating_fraction(r.mesh, sdf, 20000, 2) < 1e-3);
  CHECK(max_blocked_depth(r.mesh, s.cylinders, 20000, 2) <= 0.01);

  int windows = 0, descending = 0;
  for (std::size_t i = 0; i + 50 < r.trace.size(); ++i) {
    ++windows;
    descending += r.trace[i + 50].total <= r.trace[i].total ? 1 : 0;
  }
  CHECK(descending >= 0.95 * windows);
}

TEST_CASE("deformation is reproducible and resumable") {
  const SleeveScene s = make_sleeve_scene();
  DeformConfig cfg = quiet_config(40);
  cfg.checkpoint_every = 15;
  std::vector<Checkpoint> saved;
  DeformHooks hooks;
  hooks.on_checkpoint = [&](const Checkpoint& cp, const TriMesh& mesh) {
    CHECK(mesh.faces == s.sleeve.faces);
    saved.push_back(cp);
  };
  const DeformResult a = run_deformation(s.sleeve, s.body, s.cylinders, cfg, nullptr, hooks);
  const DeformResult b = run_deformation(s.sleeve, s.body, s.cylinders, cfg);
  CHECK(same_trace(a.trace, b.trace));
  CHECK(a.mesh.vertices == b.mesh.vertices);
  REQUIRE(saved.size() == 2);
  CHECK(saved[1].iteration == 30);

  const auto path = std::filesystem::temp_directory_path() / "garmentgen_checkpoint.json";
  save_checkpoint(path, saved[0]);
  const Checkpoint loaded = load_checkpoint(path);
  std::filesystem::remove(path);
  CHECK(loaded.iteration == 15);
  CHECK(loaded.adam.m == saved[0].adam.m);
  CHECK(loaded.adam.v == saved[0].adam.v);

  DeformHooks resume;
  resume.resume = &loaded;
  const DeformResult c = run_deformation(s.sleeve, s.body, s.cylinders, cfg, nullptr, resume);
  CHECK(same_trace(a.trace, c.trace));
  CHECK(a.mesh.vertices == c.mesh.vertices);

  cfg.seed = 8;
  const DeformResult d = run_deformation(s.sleeve, s.body, s.cylinders, cfg);
  CHECK_FALSE(same_trace(a.trace, d.trace));
}

TEST_CASE("target shape guidance at the template is a fixed point") {
  const SleeveScene s = make_sleeve_scene();
  DeformConfig cfg = quiet_config(50);
  cfg.weights = {0, 0, 0, 0, 0, 0.005};
  cfg.guidance.kind = GuidanceKind::TargetShape;
  cfg.guidance.shape_samples = 1000;
  const DeformResult r = run_deformation(s.sleeve, s.body, s.cylinders, cfg, &s.sleeve);
  double worst = 0.0;
  for (std::size_t v = 0; v < r.mesh.num_vertices(); ++v)
    worst = std::max(worst, (r.mesh.vertices[v] - s.sleeve.vertices[v]).norm());
  CHECK(worst < 1e-3);
  CHECK_THROWS_AS(run_deformation(s.sleeve, s.body, s.cylinders, cfg), std::invalid_argument);
}

TEST_CASE("symmetry loss straightens a tapered sleeve") {
  const SleeveScene s = make_sleeve_scene();
  TriMesh tapered = s.sleeve;
  for (Vec3& v : tapered.vertices) {
    v.y() *= 1.0 + 0.15 * v.x();
    v.z() *= 1.0 + 0.15 * v.x();
  }
  const TriMesh far_body = make_icosphere(2, 0.2, Vec3(0, 5, 0));
  DeformConfig cfg = quiet_config(150);
  cfg.enable_symmetry = true;
  cfg.num_samples = 50000;
  cfg.normalize = false;
  cfg.guidance.kind = GuidanceKind::TargetShape;
  cfg.guidance.shape_samples = 4000;
  const DeformResult r = run_deformation(tapered, far_body, {}, cfg, &s.sleeve);
  CHECK(r.trace.front().terms.symmetry > 1e-3);
  double tail = 0.0;
  for (std::size_t i = r.trace.size() - 10; i < r.trace.size(); ++i) tail += r.trace[i].terms.symmetry / 10.0;
  CHECK(tail < 1e-4);
}

TEST_CASE("rendered target guidance pulls toward the target") {
  const TriMesh tpl = make_icosphere(2, 0.6);
  TriMesh target = tpl;
  for (Vec3& v : target.vertices) v.y() *= 1.3;
  const TriMesh far_body = make_icosphere(1, 0.1, Vec3(0, 0, 8));
  DeformConfig cfg = quiet_config(150);
  cfg.weights = {0, 0, 0, 0, 0, 0.005};
  cfg.normalize = false;
  cfg.learning_rate = 0.005;
  cfg.guidance.kind = GuidanceKind::RenderedTarget;
  cfg.guidance.cameras.resolution = 64;
  cfg.guidance.latent_factor = 4;
  const DeformResult r = run_deformation(tpl, far_body, {}, cfg, &target);
  for (const IterationRecord& rec : r.trace) {
    const auto [lo, hi] = timestep_range(rec.iteration);
    CHECK(rec.timestep >= lo);
    CHECK(rec.timestep <= hi);
  }
  // normal maps do not see scale, so compare proportions
  auto aspect = [](const TriMesh& m) {
    Vec3 lo = m.vertices[0], hi = m.vertices[0];
    for (const Vec3& v : m.vertices) {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    const Vec3 ext = hi - lo;
    return 2.0 * ext.y() / (ext.x() + ext.z());
  };
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 10; ++i) {
    head += r.trace[static_cast<std::size_t>(i)].ism;
    tail += r.trace[r.trace.size() - 1 - static_cast<std::size_t>(i)].ism;
  }
  CHECK(aspect(r.mesh) > 1.15);
  CHECK(tail < 0.5 * head);
}

TEST_CASE("non-finite losses name their term") {
  const SleeveScene s = make_sleeve_scene();
  DeformConfig cfg = quiet_config(3);
  cfg.weights.collision = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  TriMesh bad = s.sleeve;
  DeformConfig ok = quiet_config(3);
  ok.normalize = false;
  std::vector<BlockingCylinder> cyl{BlockingCylinder::make(Vec3(0, 0, 0), Vec3::UnitX(), 1e300)};
  cyl[0].closed_end_center = Vec3(-1e308, 0, 0);
  try {
    run_deformation(bad, s.body, cyl, ok);
    FAIL("expected a non-finite error");
  } catch (const NonFiniteError& e) {
    CHECK(e.term() == "L_blk");
    CHECK(e.iteration() == 0);
  }
}

TEST_CASE("loss csv") {
  std::vector<IterationRecord> trace(2);
  trace[1].iteration = 1;
  trace[1].terms.collision = 0.25;
  trace[1].total = 1e5;
  const auto path = std::filesystem::temp_directory_path() / "garmentgen_loss.csv";
  write_loss_csv(path, trace);
  std::ifstream in(path);
  std::string header, row0, row1;
  std::getline(in, header);
  std::getline(in, row0);
  std::getline(in, row1);
  CHECK(header == "iteration,L_ISM-proxy,L_coll,L_blk,L_sym,L_lap,L_nc,total");
  CHECK(row1 == "1,0,0.25,0,0,0,0,100000");
  std::filesystem::remove(path);
}
