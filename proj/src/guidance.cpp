#include "garmentgen/guidance.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Geometry>

#include "garmentgen/spatial.hpp"

namespace garmentgen {

namespace {

void require_same_shape(const LatentImage& a, const LatentImage& b, const char* what) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": latent shapes differ");
}

// Unnormalized vertex normals: sum of incident face cross products.
std::vector<Vec3> vertex_normal_sums(const TriMesh& mesh) {
  std::vector<Vec3> acc(mesh.vertices.size(), Vec3::Zero());
  for (const Face& t : mesh.faces) {
    const Vec3& p0 = mesh.vertices[static_cast<std::size_t>(t[0])];
    const Vec3 c = (mesh.vertices[static_cast<std::size_t>(t[1])] - p0).cross(mesh.vertices[static_cast<std::size_t>(t[2])] - p0);
    for (int idx : t) acc[static_cast<std::size_t>(idx)] += c;
  }
  return acc;
}

Vec3 safe_normalized(const Vec3& v) {
  const double n = v.norm();
  return n > 0.0 ? Vec3(v / n) : Vec3::Zero();
}

// d(v/|v|)^T g
Vec3 normalize_backward(const Vec3& v, const Vec3& g) {
  const double n = v.norm();
  if (n == 0.0) return Vec3::Zero();
  const Vec3 u = v / n;
  return (g - u * u.dot(g)) / n;
}

}  // namespace

LatentImage::LatentImage(int h, int w, int c, double fill) : height(h), width(w), channels(c) {
  if (h < 0 || w < 0 || c < 0) throw std::invalid_argument("latent dimensions must be non-negative");
  data.assign(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(c), fill);
}

bool LatentImage::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double dot(const LatentImage& a, const LatentImage& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

void axpy(LatentImage& a, double s, const LatentImage& b) {
  require_same_shape(a, b, "axpy");
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += s * b.data[i];
}

LatentImage ZeroField::evaluate(const LatentImage& x, double, const Condition&) const {
  return LatentImage(x.height, x.width, x.channels);
}

LatentImage ConstantField::evaluate(const LatentImage& x, double, const Condition&) const {
  require_same_shape(x, value_, "ConstantField");
  return value_;
}

LatentImage LinearField::evaluate(const LatentImage& x, double, const Condition&) const {
  if (a_.rows() != x.channels || a_.cols() != x.channels) throw std::invalid_argument("LinearField: matrix size must equal channel count");
  LatentImage out(x.height, x.width, x.channels);
  const auto c = static_cast<std::size_t>(x.channels);
  for (std::size_t p = 0; p * c < x.data.size(); ++p) {
    const Eigen::Map<const Eigen::VectorXd> in(x.data.data() + p * c, x.channels);
    Eigen::Map<Eigen::VectorXd>(out.data.data() + p * c, x.channels) = a_ * in;
  }
  return out;
}

LatentImage OffsetConditionalField::evaluate(const LatentImage& x, double t, const Condition& cond) const {
  LatentImage out = base_->evaluate(x, t, std::nullopt);
  if (cond) axpy(out, 1.0, delta_);
  return out;
}

LatentImage PointAttractorField::evaluate(const LatentImage& x, double, const Condition& cond) const {
  const LatentImage& anchor = cond ? anchors_.at(cond->id) : null_anchor_;
  require_same_shape(x, anchor, "PointAttractorField");
  LatentImage out = anchor;
  axpy(out, -1.0, x);
  return out;
}

LatentImage TargetLatentField::evaluate(const LatentImage& x, double, const Condition& cond) const {
  if (!cond) return LatentImage(x.height, x.width, x.channels);
  require_same_shape(x, target_, "TargetLatentField");
  LatentImage out = x;
  axpy(out, -1.0, target_);
  return out;
}

LatentImage integrate_unconditional(const GuidanceField& field, const LatentImage& x, double t_from, double t_to,
                                    int steps) {
  if (steps < 1) throw std::invalid_argument("integration needs at least one step");
  LatentImage cur = x;
  const double dt = (t_to - t_from) / steps;
  for (int k = 0; k < steps; ++k) {
    const double t = t_from + k * dt;
    const LatentImage v = field.evaluate(cur, t, std::nullopt);
    require_same_shape(cur, v, "guidance field");
    axpy(cur, dt / 1000.0, v);
    if (!cur.all_finite()) {
      throw std::runtime_error("non-finite latent during trajectory integration at t=" + std::to_string(t));
    }
  }
  return cur;
}

LatentImage invert_trajectory(const GuidanceField& field, const LatentImage& x0, double t, int steps) {
  if (!(t > 0.0 && t <= 1000.0)) throw std::invalid_argument("inversion timestep must lie in (0, 1000]");
  if (steps < 1) throw std::invalid_argument("inversion needs at least one step");
  return integrate_unconditional(field, x0, 0.0, t, steps);
}

LatentImage ism_gradient(const GuidanceField& field, const LatentImage& x0, double t, double s,
                         const ConditionToken& y, double w, const IsmOptions& options) {
  if (!(s >= 0.0 && s < t && t <= 1000.0)) throw std::invalid_argument("ISM requires 0 <= s < t <= 1000");
  if (w == 0.0) return LatentImage(x0.height, x0.width, x0.channels);
  const LatentImage xs = s > 0.0 ? invert_trajectory(field, x0, s, options.inversion_steps) : x0;
  const LatentImage xt = integrate_unconditional(field, xs, s, t, options.interval_steps);
  LatentImage g = field.evaluate(xt, t, y);
  axpy(g, -1.0, field.evaluate(xs, s, std::nullopt));
  for (double& v : g.data) v *= w;
  return g;
}

NormalRender render_normal_map(const TriMesh& mesh, const CameraView& camera) {
  NormalRender r;
  r.camera = camera;
  r.raster = rasterize(mesh, camera);
  reshade_normals(mesh, r);
  return r;
}

void reshade_normals(const TriMesh& mesh, NormalRender& render) {
  const std::vector<Vec3> sums = vertex_normal_sums(mesh);
  std::vector<Vec3> vn(sums.size());
  for (std::size_t v = 0; v < sums.size(); ++v) vn[v] = safe_normalized(sums[v]);
  const Raster& ras = render.raster;
  render.normals.assign(ras.face.size(), Vec3::Zero());
  for (std::size_t i = 0; i < ras.face.size(); ++i) {
    if (ras.face[i] < 0) continue;
    const Face& t = mesh.faces[static_cast<std::size_t>(ras.face[i])];
    const Vec3& b = ras.bary[i];
    render.normals[i] = safe_normalized(b[0] * vn[static_cast<std::size_t>(t[0])] + b[1] * vn[static_cast<std::size_t>(t[1])] +
                                        b[2] * vn[static_cast<std::size_t>(t[2])]);
  }
}

std::vector<Vec3> backprop_normal_render(const TriMesh& mesh, const NormalRender& render,
                                         std::span<const Vec3> grad_normals) {
  const Raster& ras = render.raster;
  if (grad_normals.size() != ras.face.size()) throw std::invalid_argument("normal gradient size does not match the render");
  const std::vector<Vec3> sums = vertex_normal_sums(mesh);
  std::vector<Vec3> vn(sums.size());
  for (std::size_t v = 0; v < sums.size(); ++v) vn[v] = safe_normalized(sums[v]);

  std::vector<Vec3> g_vn(sums.size(), Vec3::Zero());
  for (std::size_t i = 0; i < ras.face.size(); ++i) {
    if (ras.face[i] < 0 || grad_normals[i].isZero()) continue;
    const Face& t = mesh.faces[static_cast<std::size_t>(ras.face[i])];
    const Vec3& b = ras.bary[i];
    const Vec3 m = b[0] * vn[static_cast<std::size_t>(t[0])] + b[1] * vn[static_cast<std::size_t>(t[1])] +
                   b[2] * vn[static_cast<std::size_t>(t[2])];
    const Vec3 gm = normalize_backward(m, grad_normals[i]);
    for (int k = 0; k < 3; ++k) g_vn[static_cast<std::size_t>(t[k])] += b[k] * gm;
  }

  std::vector<Vec3> g_sum(sums.size());
  for (std::size_t v = 0; v < sums.size(); ++v) g_sum[v] = normalize_backward(sums[v], g_vn[v]);

  std::vector<Vec3> grad(mesh.vertices.size(), Vec3::Zero());
  for (const Face& t : mesh.faces) {
    const Vec3 gc = g_sum[static_cast<std::size_t>(t[0])] + g_sum[static_cast<std::size_t>(t[1])] + g_sum[static_cast<std::size_t>(t[2])];
    if (gc.isZero()) continue;
    const Vec3& p0 = mesh.vertices[static_cast<std::size_t>(t[0])];
    const Vec3 e1 = mesh.vertices[static_cast<std::size_t>(t[1])] - p0;
    const Vec3 e2 = mesh.vertices[static_cast<std::size_t>(t[2])] - p0;
    // c = e1 x e2
    const Vec3 g1 = e2.cross(gc);
    const Vec3 g2 = gc.cross(e1);
    grad[static_cast<std::size_t>(t[1])] += g1;
    grad[static_cast<std::size_t>(t[2])] += g2;
    grad[static_cast<std::size_t>(t[0])] -= g1 + g2;
  }
  return grad;
}

LatentImage normals_to_image(const NormalRender& render) {
  LatentImage img(render.raster.height, render.raster.width, 3);
  for (std::size_t i = 0; i < render.normals.size(); ++i) {
    for (int k = 0; k < 3; ++k) img.data[3 * i + static_cast<std::size_t>(k)] = render.normals[i][k];
  }
  return img;
}

std::vector<Vec3> image_to_normal_grads(const LatentImage& grad_image) {
  if (grad_image.channels != 3) throw std::invalid_argument("normal image gradient must have 3 channels");
  std::vector<Vec3> out(grad_image.data.size() / 3);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = Vec3(grad_image.data[3 * i], grad_image.data[3 * i + 1], grad_image.data[3 * i + 2]);
  }
  return out;
}

LatentImage encode_latent(const LatentImage& image, int factor) {
  if (factor < 1 || image.height % factor != 0 || image.width % factor != 0) {
    throw std::invalid_argument("encode factor " + std::to_string(factor) + " does not divide image size " +
                                std::to_string(image.height) + "x" + std::to_string(image.width));
  }
  LatentImage out(image.height / factor, image.width / factor, image.channels);
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) out.at(y / factor, x / factor, c) += image.at(y, x, c) * inv;
    }
  }
  return out;
}

LatentImage decode_gradient(const LatentImage& grad_latent, int factor) {
  if (factor < 1) throw std::invalid_argument("decode factor must be positive");
  LatentImage out(grad_latent.height * factor, grad_latent.width * factor, grad_latent.channels);
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      for (int c = 0; c < out.channels; ++c) out.at(y, x, c) = grad_latent.at(y / factor, x / factor, c) * inv;
    }
  }
  return out;
}

ShapeGuidance target_shape_guidance(const TriMesh& mesh, const TriMesh& target, std::size_t n_samples,
                                    std::uint64_t seed) {
  const SamplePoints qs = sample_surface(target, n_samples, seed);
  // Same topology: reuse the target's faces and barycentrics so the sample
  // sets coincide exactly when the shapes do.
  SamplePoints ps = mesh.faces == target.faces ? qs : sample_surface(mesh, n_samples, seed);
  if (mesh.faces == target.faces) update_positions(mesh, ps);
  const PointIndex p_index(ps.positions);
  const PointIndex q_index(qs.positions);
  const double inv_n = 1.0 / static_cast<double>(ps.positions.size());
  const double inv_m = 1.0 / static_cast<double>(qs.positions.size());

  ShapeGuidance out;
  std::vector<Vec3> g(ps.positions.size(), Vec3::Zero());
  double fwd = 0.0;
  for (std::size_t i = 0; i < ps.positions.size(); ++i) {
    const auto [j, d] = q_index.nearest(ps.positions[i]);
    fwd += d;
    g[i] += 2.0 * inv_n * (ps.positions[i] - qs.positions[static_cast<std::size_t>(j)]);
  }
  double bwd = 0.0;
  for (const Vec3& q : qs.positions) {
    const auto [k, d] = p_index.nearest(q);
    bwd += d;
    g[static_cast<std::size_t>(k)] += 2.0 * inv_m * (ps.positions[static_cast<std::size_t>(k)] - q);
  }
  out.value = fwd * inv_n + bwd * inv_m;
  out.grad = scatter_to_vertices(mesh, ps, g);
  return out;
}

std::vector<CameraView> sample_cameras(Rng& rng, const Vec3& center, const CameraDistribution& dist, int count) {
  std::vector<CameraView> cams;
  cams.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double az = 2.0 * std::numbers::pi * uniform01(rng);
    const double el = (dist.elevation_min_deg + (dist.elevation_max_deg - dist.elevation_min_deg) * uniform01(rng)) *
                      std::numbers::pi / 180.0;
    CameraView cam;
    cam.position = center + dist.radius * Vec3(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));
    cam.target = center;
    cam.up = Vec3::UnitY();
    cam.fov_y_deg = dist.fov_y_deg;
    cam.width = dist.resolution;
    cam.height = dist.resolution;
    cams.push_back(cam);
  }
  return cams;
}

}  // namespace garmentgen
