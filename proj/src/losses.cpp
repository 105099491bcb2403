#include "garmentgen/losses.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <Eigen/Geometry>
#include <json.hpp>

namespace garmentgen {

namespace {

using nlohmann::json;

Vec3 read_vec3(const json& j, const char* field, std::size_t index) {
  if (!j.contains(field) || !j[field].is_array() || j[field].size() != 3) {
    throw std::invalid_argument("cylinder " + std::to_string(index) + ": '" + field +
                                "' must be an array of 3 numbers");
  }
  return {j[field][0].get<double>(), j[field][1].get<double>(), j[field][2].get<double>()};
}

const Vec3& vtx(const TriMesh& m, int i) { return m.vertices[static_cast<std::size_t>(i)]; }

// Derivative of n = c / |c| pulled back to c.
Vec3 normalize_backward(const Vec3& c, const Vec3& grad_n) {
  const double len = c.norm();
  const Vec3 n = c / len;
  return (grad_n - n * n.dot(grad_n)) / len;
}

}  // namespace

BlockingCylinder BlockingCylinder::make(const Vec3& center, const Vec3& axis, double radius, std::string name) {
  const double len = axis.norm();
  if (!(len > 0.0) || !std::isfinite(len)) throw std::invalid_argument("blocking cylinder axis must be non-zero");
  if (!(radius > 0.0)) throw std::invalid_argument("blocking cylinder radius must be positive");
  return BlockingCylinder{center, axis / len, radius, std::move(name)};
}

bool BlockingCylinder::contains(const Vec3& p) const {
  const Vec3 rel = p - closed_end_center;
  const double a = rel.dot(axis);
  if (a < 0.0) return false;
  return (rel - a * axis).norm() <= radius;
}

std::vector<BlockingCylinder> parse_cylinders(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("cylinder file is not valid JSON: ") + e.what());
  }
  if (doc.is_object() && doc.contains("cylinders")) doc = doc["cylinders"];
  if (!doc.is_array()) throw std::invalid_argument("cylinder document must be an array");
  std::vector<BlockingCylinder> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& c = doc[i];
    if (!c.contains("radius") || !c["radius"].is_number()) {
      throw std::invalid_argument("cylinder " + std::to_string(i) + ": 'radius' must be a number");
    }
    out.push_back(BlockingCylinder::make(read_vec3(c, "center", i), read_vec3(c, "axis", i),
                                         c["radius"].get<double>(), c.value("name", std::string())));
  }
  return out;
}

std::vector<BlockingCylinder> load_cylinders(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open cylinder file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_cylinders(ss.str());
}

std::string format_cylinders(std::span<const BlockingCylinder> cylinders) {
  json doc = json::array();
  for (const auto& c : cylinders) {
    json item{{"center", {c.closed_end_center.x(), c.closed_end_center.y(), c.closed_end_center.z()}},
              {"axis", {c.axis.x(), c.axis.y(), c.axis.z()}},
              {"radius", c.radius}};
    if (!c.name.empty()) item["name"] = c.name;
    doc.push_back(std::move(item));
  }
  return doc.dump(2);
}

void LossWeights::validate() const {
  auto check = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string(name) + " must be a non-negative finite number");
    }
  };
  check(collision, "lambda_coll");
  check(blocking, "lambda_blk");
  check(symmetry, "lambda_sym");
  check(laplacian, "lambda_lap");
  check(normal_consistency, "lambda_nc");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw std::invalid_argument("epsilon must be positive");
}

SampleLoss collision_loss(std::span<const Vec3> positions, const BodySdf& sdf, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  const std::size_t n = positions.size();
  SampleLoss out;
  out.grad.assign(n, Vec3::Zero());
  if (n == 0) return out;
  std::vector<double> term(n, 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    const auto k = static_cast<std::size_t>(i);
    const SdfQuery q = sdf.query(positions[k]);
    const double violation = epsilon - q.distance;
    if (violation > 0.0) {
      term[k] = violation;
      out.grad[k] = -q.gradient * inv_n;
    }
  }
  double sum = 0.0;
  for (double t : term) sum += t;
  out.value = sum * inv_n;
  return out;
}

SampleLoss blocking_loss(std::span<const Vec3> positions, std::span<const BlockingCylinder> cylinders) {
  const std::size_t n = positions.size();
  SampleLoss out;
  out.grad.assign(n, Vec3::Zero());
  if (n == 0 || cylinders.empty()) return out;
  std::vector<double> term(n, 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    const auto k = static_cast<std::size_t>(i);
    for (const BlockingCylinder& c : cylinders) {
      if (c.contains(positions[k])) {
        term[k] += c.axial(positions[k]);
        out.grad[k] += c.axis * inv_n;
      }
    }
  }
  double sum = 0.0;
  for (double t : term) sum += t;
  out.value = sum * inv_n;
  return out;
}

SampleLoss symmetry_loss(std::span<const Vec3> positions) {
  const std::size_t n = positions.size();
  SampleLoss out;
  out.grad.assign(n, Vec3::Zero());
  if (n == 0) return out;
  std::vector<Vec3> mirrored(n);
  for (std::size_t i = 0; i < n; ++i) mirrored[i] = mirror_x(positions[i]);
  const PointIndex original_index(std::vector<Vec3>(positions.begin(), positions.end()));
  const PointIndex mirrored_index(mirrored);

  std::vector<int> forward_nn(n), backward_nn(n);
  std::vector<double> forward_d(n), backward_d(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    const auto k = static_cast<std::size_t>(i);
    std::tie(forward_nn[k], forward_d[k]) = mirrored_index.nearest(positions[k]);
    std::tie(backward_nn[k], backward_d[k]) = original_index.nearest(mirrored[k]);
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  double forward = 0.0, backward = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    forward += forward_d[i];
    backward += backward_d[i];
    // p_i against its nearest mirrored point R p_j
    {
      const auto j = static_cast<std::size_t>(forward_nn[i]);
      const Vec3 diff = positions[i] - mirrored[j];
      out.grad[i] += 2.0 * inv_n * diff;
      out.grad[j] -= 2.0 * inv_n * mirror_x(diff);
    }
    // R p_i against its nearest original point p_j
    {
      const auto j = static_cast<std::size_t>(backward_nn[i]);
      const Vec3 diff = mirrored[i] - positions[j];
      out.grad[i] += 2.0 * inv_n * mirror_x(diff);
      out.grad[j] -= 2.0 * inv_n * diff;
    }
  }
  out.value = forward * inv_n + backward * inv_n;
  return out;
}

LaplacianLoss laplacian_loss(const TriMesh& mesh, LaplacianScope scope) {
  const std::size_t nv = mesh.vertices.size();
  const auto nbrs = vertex_neighbors(mesh);
  std::vector<bool> counted(nv, false);
  const std::vector<bool> boundary =
      scope == LaplacianScope::InteriorOnly ? boundary_vertices(mesh) : std::vector<bool>(nv, false);

  LaplacianLoss out;
  std::size_t m = 0;
  for (std::size_t i = 0; i < nv; ++i) {
    if (nbrs[i].empty()) {
      ++out.isolated;
      continue;
    }
    if (boundary[i]) continue;
    counted[i] = true;
    ++m;
  }
  out.grad.assign(nv, Vec3::Zero());
  out.per_vertex.assign(nv, 0.0);
  if (m == 0) {
    throw std::invalid_argument("laplacian loss needs at least one vertex with neighbors");
  }
  const double inv_m = 1.0 / static_cast<double>(m);

  std::vector<Vec3> residual(nv, Vec3::Zero());
  for (std::size_t i = 0; i < nv; ++i) {
    if (!counted[i]) continue;
    Vec3 mean = Vec3::Zero();
    for (int j : nbrs[i]) mean += vtx(mesh, j);
    mean /= static_cast<double>(nbrs[i].size());
    residual[i] = mesh.vertices[i] - mean;
    out.per_vertex[i] = residual[i].squaredNorm() * inv_m;
    out.value += out.per_vertex[i];
  }
  for (std::size_t i = 0; i < nv; ++i) {
    if (!counted[i]) continue;
    out.grad[i] += 2.0 * inv_m * residual[i];
    const double share = 2.0 * inv_m / static_cast<double>(nbrs[i].size());
    for (int j : nbrs[i]) out.grad[static_cast<std::size_t>(j)] -= share * residual[i];
  }
  return out;
}

VertexLoss normal_consistency_loss(const TriMesh& mesh) {
  const std::vector<Edge> edges = build_edges(mesh);
  const std::size_t nf = mesh.faces.size();
  std::vector<Vec3> cross(nf), normal(nf);
  std::vector<int> bad;
  for (std::size_t f = 0; f < nf; ++f) {
    const Face& t = mesh.faces[f];
    cross[f] = (vtx(mesh, t[1]) - vtx(mesh, t[0])).cross(vtx(mesh, t[2]) - vtx(mesh, t[0]));
    const double len = cross[f].norm();
    if (0.5 * len <= kMinFaceArea) {
      bad.push_back(static_cast<int>(f));
      continue;
    }
    normal[f] = cross[f] / len;
  }
  if (!bad.empty()) throw DegenerateFaceError(std::move(bad));

  std::vector<Vec3> grad_n(nf, Vec3::Zero());
  double sum = 0.0;
  std::size_t interior = 0;
  for (const Edge& e : edges) {
    if (e.faces.size() == 2) ++interior;
  }
  if (interior == 0) throw std::invalid_argument("normal consistency loss needs at least one interior edge");
  const double inv_e = 1.0 / static_cast<double>(interior);
  for (const Edge& e : edges) {
    if (e.faces.size() != 2) continue;
    const auto a = static_cast<std::size_t>(e.faces[0]);
    const auto b = static_cast<std::size_t>(e.faces[1]);
    sum += 1.0 - normal[a].dot(normal[b]);
    grad_n[a] -= inv_e * normal[b];
    grad_n[b] -= inv_e * normal[a];
  }

  VertexLoss out;
  out.value = sum * inv_e;
  out.grad.assign(mesh.vertices.size(), Vec3::Zero());
  for (std::size_t f = 0; f < nf; ++f) {
    if (grad_n[f].isZero(0.0)) continue;
    const Vec3 gc = normalize_backward(cross[f], grad_n[f]);
    const Face& t = mesh.faces[f];
    const Vec3 e1 = vtx(mesh, t[1]) - vtx(mesh, t[0]);
    const Vec3 e2 = vtx(mesh, t[2]) - vtx(mesh, t[0]);
    // c = e1 x e2: dc.g = e1.(e2 x g) = e2.(g x e1)
    const Vec3 g1 = e2.cross(gc);
    const Vec3 g2 = gc.cross(e1);
    out.grad[static_cast<std::size_t>(t[1])] += g1;
    out.grad[static_cast<std::size_t>(t[2])] += g2;
    out.grad[static_cast<std::size_t>(t[0])] -= g1 + g2;
  }
  return out;
}

GeometryLoss total_geometry_loss(const TriMesh& mesh, const SamplePoints& samples, const BodySdf* sdf,
                                 std::span<const BlockingCylinder> cylinders, const LossWeights& weights,
                                 bool enable_symmetry) {
  weights.validate();
  GeometryLoss out;
  out.grad.assign(mesh.vertices.size(), Vec3::Zero());
  const std::vector<Vec3> positions = sample_positions(mesh, samples);
  std::vector<Vec3> sample_grad(positions.size(), Vec3::Zero());
  bool any_sample_term = false;

  if (weights.collision > 0.0 && sdf != nullptr) {
    const SampleLoss l = collision_loss(positions, *sdf, weights.epsilon);
    out.terms.collision = l.value;
    for (std::size_t i = 0; i < positions.size(); ++i) sample_grad[i] += weights.collision * l.grad[i];
    any_sample_term = true;
  }
  if (weights.blocking > 0.0 && !cylinders.empty()) {
    const SampleLoss l = blocking_loss(positions, cylinders);
    out.terms.blocking = l.value;
    for (std::size_t i = 0; i < positions.size(); ++i) sample_grad[i] += weights.blocking * l.grad[i];
    any_sample_term = true;
  }
  if (enable_symmetry && weights.symmetry > 0.0) {
    const SampleLoss l = symmetry_loss(positions);
    out.terms.symmetry = l.value;
    for (std::size_t i = 0; i < positions.size(); ++i) sample_grad[i] += weights.symmetry * l.grad[i];
    any_sample_term = true;
  }
  if (any_sample_term) out.grad = scatter_to_vertices(mesh, samples, sample_grad);

  if (weights.laplacian > 0.0) {
    const LaplacianLoss l = laplacian_loss(mesh);
    out.terms.laplacian = l.value;
    for (std::size_t v = 0; v < out.grad.size(); ++v) out.grad[v] += weights.laplacian * l.grad[v];
  }
  if (weights.normal_consistency > 0.0) {
    const VertexLoss l = normal_consistency_loss(mesh);
    out.terms.normal_consistency = l.value;
    for (std::size_t v = 0; v < out.grad.size(); ++v) out.grad[v] += weights.normal_consistency * l.grad[v];
  }

  out.value = weights.collision * out.terms.collision + weights.blocking * out.terms.blocking +
              (enable_symmetry ? weights.symmetry * out.terms.symmetry : 0.0) +
              weights.laplacian * out.terms.laplacian + weights.normal_consistency * out.terms.normal_consistency;
  return out;
}

}  // namespace garmentgen
