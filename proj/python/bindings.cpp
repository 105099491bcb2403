#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cli.hpp"
#include "garmentgen/config.hpp"
#include "garmentgen/losses.hpp"
#include "garmentgen/mesh.hpp"
#include "garmentgen/njf.hpp"
#include "garmentgen/optimize.hpp"
#include "garmentgen/primitives.hpp"
#include "garmentgen/scenes.hpp"
#include "garmentgen/spatial.hpp"
#include "garmentgen/texsync.hpp"
#include "garmentgen/version.hpp"

namespace py = pybind11;
using namespace garmentgen;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IndexArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

std::vector<Vec3> to_points(const Array& a, const char* what) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw py::value_error(std::string(what) + " must have shape (n, 3)");
  std::vector<Vec3> pts(static_cast<std::size_t>(a.shape(0)));
  auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i) pts[static_cast<std::size_t>(i)] = Vec3(r(i, 0), r(i, 1), r(i, 2));
  return pts;
}

py::array_t<double> from_points(const std::vector<Vec3>& pts) {
  py::array_t<double> a({static_cast<py::ssize_t>(pts.size()), py::ssize_t{3}});
  auto w = a.mutable_unchecked<2>();
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int k = 0; k < 3; ++k) w(static_cast<py::ssize_t>(i), k) = pts[i][k];
  return a;
}

py::array_t<int> from_faces(const std::vector<Face>& faces) {
  py::array_t<int> a({static_cast<py::ssize_t>(faces.size()), py::ssize_t{3}});
  auto w = a.mutable_unchecked<2>();
  for (std::size_t i = 0; i < faces.size(); ++i)
    for (int k = 0; k < 3; ++k) w(static_cast<py::ssize_t>(i), k) = faces[i][static_cast<std::size_t>(k)];
  return a;
}

std::vector<Face> to_faces(const IndexArray& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw py::value_error("faces must have shape (m, 3)");
  std::vector<Face> faces(static_cast<std::size_t>(a.shape(0)));
  auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i) faces[static_cast<std::size_t>(i)] = {r(i, 0), r(i, 1), r(i, 2)};
  return faces;
}

Vec3 to_point(const Array& a, const char* what) {
  if (a.size() != 3) throw py::value_error(std::string(what) + " must have 3 components");
  const double* d = a.data();
  return Vec3(d[0], d[1], d[2]);
}

py::tuple loss_tuple(double value, const std::vector<Vec3>& grad) { return py::make_tuple(value, from_points(grad)); }

py::array_t<double> trace_array(const std::vector<IterationRecord>& trace) {
  py::array_t<double> a({static_cast<py::ssize_t>(trace.size()), py::ssize_t{8}});
  auto w = a.mutable_unchecked<2>();
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& r = trace[i];
    const double row[8] = {static_cast<double>(r.iteration), r.ism, r.terms.collision, r.terms.blocking,
                           r.terms.symmetry, r.terms.laplacian, r.terms.normal_consistency, r.total};
    for (int k = 0; k < 8; ++k) w(static_cast<py::ssize_t>(i), k) = row[k];
  }
  return a;
}

}  // namespace

PYBIND11_MODULE(_garmentgen, m) {
  m.doc() = "Garment deformation and multi-view texture synchronization";
  m.attr("__version__") = version();

  py::register_exception<MeshError>(m, "MeshError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NonFiniteError>(m, "NonFiniteError", PyExc_ArithmeticError);

  py::class_<TriMesh>(m, "TriMesh")
      .def(py::init<>())
      .def(py::init([](const Array& v, const IndexArray& f) {
             TriMesh mesh;
             mesh.vertices = to_points(v, "vertices");
             mesh.faces = to_faces(f);
             validate_mesh(mesh);
             return mesh;
           }),
           py::arg("vertices"), py::arg("faces"))
      .def_property(
          "vertices", [](const TriMesh& t) { return from_points(t.vertices); },
          [](TriMesh& t, const Array& v) {
            auto pts = to_points(v, "vertices");
            if (pts.size() != t.vertices.size()) throw py::value_error("vertex count must not change");
            t.vertices = std::move(pts);
          })
      .def_property_readonly("faces", [](const TriMesh& t) { return from_faces(t.faces); })
      .def_property_readonly("has_uvs", &TriMesh::has_uvs)
      .def_property_readonly("num_vertices", &TriMesh::num_vertices)
      .def_property_readonly("num_faces", &TriMesh::num_faces)
      .def("__repr__", [](const TriMesh& t) {
        return "<TriMesh " + std::to_string(t.num_vertices()) + " vertices, " + std::to_string(t.num_faces()) + " faces>";
      });

  m.def("load_mesh", &load_mesh, py::arg("path"));
  m.def("save_mesh", &save_mesh, py::arg("mesh"), py::arg("path"));
  m.def("face_areas", [](const TriMesh& t) { return py::array_t<double>(py::cast(face_areas(t))); });

  m.def("make_icosphere", [](int s, double r) { return make_icosphere(s, r); }, py::arg("subdivisions"),
        py::arg("radius") = 1.0);
  m.def("make_tube", [](double r, double x0, double x1, int seg, int rings) { return make_tube(r, x0, x1, seg, rings); },
        py::arg("radius"), py::arg("x_begin"), py::arg("x_end"), py::arg("segments"), py::arg("rings"));
  m.def("make_capsule", [](double r, double h, int seg, int rings) { return make_capsule(r, h, seg, rings); },
        py::arg("radius"), py::arg("half_length"), py::arg("segments"), py::arg("rings"));
  m.def("make_grid", [](int nx, int ny, double w, double h, double z) { return make_grid(nx, ny, w, h, z); },
        py::arg("nx"), py::arg("ny"), py::arg("width"), py::arg("height"), py::arg("z") = 0.0);

  py::class_<BlockingCylinder>(m, "BlockingCylinder")
      .def(py::init([](const Array& center, const Array& axis, double radius, std::string name) {
             return BlockingCylinder::make(to_point(center, "center"), to_point(axis, "axis"), radius, std::move(name));
           }),
           py::arg("center"), py::arg("axis"), py::arg("radius"), py::arg("name") = "")
      .def_property_readonly("radius", [](const BlockingCylinder& c) { return c.radius; })
      .def_property_readonly("name", [](const BlockingCylinder& c) { return c.name; })
      .def("contains", [](const BlockingCylinder& c, const Array& p) { return c.contains(to_point(p, "p")); });
  m.def("load_cylinders", &load_cylinders, py::arg("path"));

  py::class_<BodySdf>(m, "BodySdf")
      .def(py::init<TriMesh>(), py::arg("body"))
      .def("signed_distance", [](const BodySdf& sdf, const Array& pts) {
        const auto p = to_points(pts, "points");
        py::array_t<double> out(static_cast<py::ssize_t>(p.size()));
        auto w = out.mutable_unchecked<1>();
        for (std::size_t i = 0; i < p.size(); ++i) w(static_cast<py::ssize_t>(i)) = sdf.signed_distance(p[i]);
        return out;
      });
  m.def("winding_number", [](const TriMesh& t, const Array& p) { return winding_number(t, to_point(p, "p")); });
  m.def("chamfer_distance", [](const Array& a, const Array& b) { return chamfer_distance(to_points(a, "a"), to_points(b, "b")); });

  m.def("collision_loss", [](const Array& p, const BodySdf& sdf, double eps) {
    const auto l = collision_loss(to_points(p, "points"), sdf, eps);
    return loss_tuple(l.value, l.grad);
  }, py::arg("points"), py::arg("body"), py::arg("epsilon") = 0.005, "(value, gradient) of the collision loss");
  m.def("blocking_loss", [](const Array& p, const std::vector<BlockingCylinder>& c) {
    const auto l = blocking_loss(to_points(p, "points"), c);
    return loss_tuple(l.value, l.grad);
  }, py::arg("points"), py::arg("cylinders"));
  m.def("symmetry_loss", [](const Array& p) {
    const auto l = symmetry_loss(to_points(p, "points"));
    return loss_tuple(l.value, l.grad);
  }, py::arg("points"));
  m.def("laplacian_loss", [](const TriMesh& t) {
    const auto l = laplacian_loss(t);
    return loss_tuple(l.value, l.grad);
  });
  m.def("normal_consistency_loss", [](const TriMesh& t) {
    const auto l = normal_consistency_loss(t);
    return loss_tuple(l.value, l.grad);
  });

  py::class_<PoissonSystem>(m, "PoissonSystem")
      .def(py::init<const TriMesh&>(), py::arg("template"))
      .def_property_readonly("num_vertices", &PoissonSystem::num_vertices)
      .def_property_readonly("num_faces", &PoissonSystem::num_faces)
      .def("solve", [](const PoissonSystem& sys, const Array& j) {
        if (j.ndim() != 3 || j.shape(1) != 3 || j.shape(2) != 3) throw py::value_error("jacobians must have shape (F, 3, 3)");
        auto r = j.unchecked<3>();
        JacobianField field(static_cast<std::size_t>(j.shape(0)));
        for (py::ssize_t f = 0; f < j.shape(0); ++f)
          for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) field[static_cast<std::size_t>(f)](a, b) = r(f, a, b);
        return from_points(sys.solve(field));
      }, py::arg("jacobians"), "Vertex positions (V, 3) for per-face Jacobians (F, 3, 3)");

  m.def("sleeve_scene", [] {
    const SleeveScene s = make_sleeve_scene();
    return py::make_tuple(s.body, s.sleeve, s.cylinders);
  }, "(body, sleeve, cylinders) of the bundled capsule-arm scene");

  m.def("deform", [](const TriMesh& tpl, const TriMesh& body, const std::vector<BlockingCylinder>& cylinders,
                     int iterations, std::size_t num_samples, std::uint64_t seed, bool enable_symmetry) {
    DeformConfig cfg;
    cfg.iterations = iterations;
    cfg.num_samples = num_samples;
    cfg.seed = seed;
    cfg.enable_symmetry = enable_symmetry;
    DeformResult r;
    {
      py::gil_scoped_release release;
      r = run_deformation(tpl, body, cylinders, cfg);
    }
    return py::make_tuple(r.mesh, trace_array(r.trace));
  }, py::arg("template"), py::arg("body"), py::arg("cylinders") = std::vector<BlockingCylinder>{},
     py::arg("iterations") = 600, py::arg("num_samples") = 50000, py::arg("seed") = 0, py::arg("enable_symmetry") = false,
     "Run the optimizer with default weights. Returns (mesh, trace) where trace columns are iteration, "
     "L_ISM-proxy, L_coll, L_blk, L_sym, L_lap, L_nc, total.");
  m.def("penetrating_fraction", &penetrating_fraction, py::arg("garment"), py::arg("body"), py::arg("n"), py::arg("seed"));

  m.def("reweight_side_views", [](const Array& alpha, int front, int back) {
    if (alpha.ndim() != 2) throw py::value_error("alpha must have shape (texels, views)");
    WeightTable w{static_cast<int>(alpha.shape(1)), std::vector<double>(alpha.data(), alpha.data() + alpha.size())};
    reweight_side_views(w, front, back);
    py::array_t<double> out({alpha.shape(0), alpha.shape(1)});
    std::copy(w.alpha.begin(), w.alpha.end(), out.mutable_data());
    return out;
  }, py::arg("alpha"), py::arg("front"), py::arg("back") = -1);
  m.def("symmetric_attention_bias", [](const Array& a, const Array& b, double wd, double wm, double ell) {
    const Eigen::MatrixXd bias = symmetric_attention_bias(to_points(a, "a"), to_points(b, "b"), wd, wm, ell);
    py::array_t<double> out({bias.rows(), bias.cols()});
    auto w = out.mutable_unchecked<2>();
    for (Eigen::Index i = 0; i < bias.rows(); ++i)
      for (Eigen::Index j = 0; j < bias.cols(); ++j) w(i, j) = bias(i, j);
    return out;
  }, py::arg("a"), py::arg("b"), py::arg("w_direct"), py::arg("w_mirror"), py::arg("length_scale"));

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::vector<std::string> full{"garmentgen"};
    full.insert(full.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& s : full) argv.push_back(s.c_str());
    std::ostringstream out, err;
    int code;
    {
      py::gil_scoped_release release;
      code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"), "Run the command-line tool in-process. Returns (exit code, stdout, stderr).");
}
