#include "garmentgen/texsync.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "garmentgen/image_io.hpp"
#include "garmentgen/random.hpp"

namespace garmentgen {

namespace {

constexpr std::uint64_t kNoiseStream = 0x7e5;

int find_root(std::vector<int>& parent, int x) {
  while (parent[static_cast<std::size_t>(x)] != x) {
    parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
    x = parent[static_cast<std::size_t>(x)];
  }
  return x;
}

std::vector<int> uv_face_charts(const TriMesh& mesh) {
  const auto nf = static_cast<int>(mesh.faces.size());
  std::vector<int> parent(static_cast<std::size_t>(nf));
  std::iota(parent.begin(), parent.end(), 0);
  std::map<std::pair<int, int>, int> first_face;
  for (int f = 0; f < nf; ++f) {
    const Face& t = mesh.uv_faces[static_cast<std::size_t>(f)];
    for (int k = 0; k < 3; ++k) {
      const int a = std::min(t[static_cast<std::size_t>(k)], t[static_cast<std::size_t>((k + 1) % 3)]);
      const int b = std::max(t[static_cast<std::size_t>(k)], t[static_cast<std::size_t>((k + 1) % 3)]);
      auto [it, inserted] = first_face.emplace(std::make_pair(a, b), f);
      if (!inserted) {
        const int ra = find_root(parent, it->second);
        const int rb = find_root(parent, f);
        if (ra != rb) parent[static_cast<std::size_t>(std::max(ra, rb))] = std::min(ra, rb);
      }
    }
  }
  // relabel roots densely in face order
  std::vector<int> label(static_cast<std::size_t>(nf), -1);
  std::vector<int> out(static_cast<std::size_t>(nf));
  int next = 0;
  for (int f = 0; f < nf; ++f) {
    const int r = find_root(parent, f);
    if (label[static_cast<std::size_t>(r)] < 0) label[static_cast<std::size_t>(r)] = next++;
    out[static_cast<std::size_t>(f)] = label[static_cast<std::size_t>(r)];
  }
  return out;
}

// World-space size of one pixel at `depth`.
double pixel_footprint(const CameraView& cam, double depth) {
  if (cam.projection == Projection::Orthographic) return 2.0 * cam.ortho_half_height / cam.height;
  return 2.0 * depth * std::tan(0.5 * cam.fov_y_deg * std::numbers::pi / 180.0) / cam.height;
}

struct Stencil {
  std::array<std::size_t, 4> pixel{};
  std::array<double, 4> weight{};
  int count = 0;
};

// Pixels near the projection of `texel` that show the same surface.
Stencil view_stencil(const ViewCorrespondence& corr, std::size_t texel, const Observation& obs) {
  Stencil st;
  const CameraView& cam = corr.rig.views[static_cast<std::size_t>(obs.view)];
  const Raster& ras = corr.rasters[static_cast<std::size_t>(obs.view)];
  const auto& points = corr.pixel_points[static_cast<std::size_t>(obs.view)];
  const auto& charts = corr.pixel_charts[static_cast<std::size_t>(obs.view)];
  const Vec3& p = corr.texels.point[texel];
  const int chart = corr.texels.face_chart[static_cast<std::size_t>(corr.texels.face[texel])];
  const double depth = (p - cam.position).dot(cam.basis().forward);
  const double radius = corr.depth_tolerance + 2.0 * pixel_footprint(cam, depth) / std::max(obs.cosine, 0.25);

  auto compatible = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= ras.width || y >= ras.height) return false;
    const std::size_t i = ras.index(x, y);
    return ras.face[i] >= 0 && charts[i] == chart && (points[i] - p).norm() <= radius;
  };

  const double cx = obs.px - 0.5;
  const double cy = obs.py - 0.5;
  const int x0 = static_cast<int>(std::floor(cx));
  const int y0 = static_cast<int>(std::floor(cy));
  const double fx = cx - x0;
  const double fy = cy - y0;
  double total = 0.0;
  for (int k = 0; k < 4; ++k) {
    const int x = x0 + (k & 1);
    const int y = y0 + (k >> 1);
    const double w = ((k & 1) ? fx : 1.0 - fx) * ((k >> 1) ? fy : 1.0 - fy);
    if (w <= 0.0 || !compatible(x, y)) continue;
    st.pixel[static_cast<std::size_t>(st.count)] = ras.index(x, y);
    st.weight[static_cast<std::size_t>(st.count)] = w;
    ++st.count;
    total += w;
  }
  if (st.count > 0 && total > 1e-9) {
    for (int k = 0; k < st.count; ++k) st.weight[static_cast<std::size_t>(k)] /= total;
    return st;
  }

  // nearest compatible pixel center in the 3x3 block around the projection
  st.count = 0;
  const int px = static_cast<int>(std::floor(obs.px));
  const int py = static_cast<int>(std::floor(obs.py));
  double best = std::numeric_limits<double>::infinity();
  for (int y = py - 1; y <= py + 1; ++y) {
    for (int x = px - 1; x <= px + 1; ++x) {
      if (!compatible(x, y)) continue;
      const double d = std::hypot(x + 0.5 - obs.px, y + 0.5 - obs.py);
      if (d < best) {
        best = d;
        st.pixel[0] = ras.index(x, y);
        st.weight[0] = 1.0;
        st.count = 1;
      }
    }
  }
  return st;
}

bool occluded(const TriangleBvh& bvh, const TriMesh& mesh, const CameraView& cam, const Vec3& p, double tol) {
  if (cam.projection == Projection::Perspective) {
    const Vec3 d = p - cam.position;
    const double len = d.norm();
    if (len <= tol) return false;
    return bvh.any_hit(mesh, cam.position, d / len, 0.0, len - tol);
  }
  const Vec3 f = cam.basis().forward;
  const double along = (p - cam.position).dot(f);
  const Vec3 origin = p - along * f;
  return bvh.any_hit(mesh, origin, f, -std::numeric_limits<double>::infinity(), along - tol);
}

// Bilinear lookup over valid texels of one chart, with a nearest-texel
// fallback within two texels.
bool sample_texture(const LatentTexture& tex, const TexelMap& texels, const Vec2& uv, int chart, double* out) {
  const int t = tex.size;
  const double cx = uv.x() * t - 0.5;
  const double cy = uv.y() * t - 0.5;
  const int x0 = static_cast<int>(std::floor(cx));
  const int y0 = static_cast<int>(std::floor(cy));
  const double fx = cx - x0;
  const double fy = cy - y0;
  auto usable = [&](int col, int row) {
    if (col < 0 || row < 0 || col >= t || row >= t) return false;
    const std::size_t i = texels.index(row, col);
    return tex.valid[i] && texels.face[i] >= 0 && texels.face_chart[static_cast<std::size_t>(texels.face[i])] == chart;
  };
  double total = 0.0;
  std::fill(out, out + tex.channels, 0.0);
  for (int k = 0; k < 4; ++k) {
    const int col = x0 + (k & 1);
    const int row = y0 + (k >> 1);
    const double w = ((k & 1) ? fx : 1.0 - fx) * ((k >> 1) ? fy : 1.0 - fy);
    if (w <= 0.0 || !usable(col, row)) continue;
    const std::size_t i = texels.index(row, col);
    for (int c = 0; c < tex.channels; ++c) out[c] += w * tex.at(i, c);
    total += w;
  }
  if (total > 1e-9) {
    for (int c = 0; c < tex.channels; ++c) out[c] /= total;
    return true;
  }
  const int rc = static_cast<int>(std::floor(uv.x() * t));
  const int rr = static_cast<int>(std::floor(uv.y() * t));
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_i = 0;
  for (int row = rr - 2; row <= rr + 2; ++row) {
    for (int col = rc - 2; col <= rc + 2; ++col) {
      if (!usable(col, row)) continue;
      const double d = std::hypot(col + 0.5 - uv.x() * t, row + 0.5 - uv.y() * t);
      if (d < best) {
        best = d;
        best_i = texels.index(row, col);
      }
    }
  }
  if (!std::isfinite(best)) return false;
  for (int c = 0; c < tex.channels; ++c) out[c] = tex.at(best_i, c);
  return true;
}

}  // namespace

Rig make_equatorial_rig(int n_views, double radius, int resolution, double fov_y_deg) {
  if (n_views < 2) throw std::invalid_argument("an equatorial rig needs at least 2 views");
  if (!(radius > 0.0)) throw std::invalid_argument("rig radius must be positive");
  Rig rig;
  for (int k = 0; k < n_views; ++k) {
    const double az = 2.0 * std::numbers::pi * k / n_views;
    CameraView cam;
    cam.position = radius * Vec3(std::sin(az), 0.0, std::cos(az));
    cam.target = Vec3::Zero();
    cam.up = Vec3::UnitY();
    cam.fov_y_deg = fov_y_deg;
    cam.width = resolution;
    cam.height = resolution;
    cam.validate();
    rig.views.push_back(cam);
  }
  rig.front = 0;
  rig.back = n_views % 2 == 0 ? n_views / 2 : -1;
  return rig;
}

TexelMap build_texel_map(const TriMesh& mesh, int size) {
  if (size < 1) throw std::invalid_argument("texture size must be positive");
  if (!mesh.has_uvs()) throw MeshError("missing UVs");
  const std::vector<Vec3> normals = face_normals(mesh);
  TexelMap tm;
  tm.size = size;
  const std::size_t n = static_cast<std::size_t>(size) * static_cast<std::size_t>(size);
  tm.face.assign(n, -1);
  tm.bary.assign(n, Vec3::Zero());
  tm.point.assign(n, Vec3::Zero());
  tm.normal.assign(n, Vec3::Zero());
  tm.chart.assign(n, -1);
  tm.face_chart = uv_face_charts(mesh);

  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Vec2 a = mesh.corner_uv(f, 0) * size;
    const Vec2 b = mesh.corner_uv(f, 1) * size;
    const Vec2 c = mesh.corner_uv(f, 2) * size;
    const double area = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
    if (std::abs(area) < 1e-14) continue;
    const int col0 = std::max(0, static_cast<int>(std::ceil(std::min({a.x(), b.x(), c.x()}) - 0.5)));
    const int col1 = std::min(size - 1, static_cast<int>(std::floor(std::max({a.x(), b.x(), c.x()}) - 0.5)));
    const int row0 = std::max(0, static_cast<int>(std::ceil(std::min({a.y(), b.y(), c.y()}) - 0.5)));
    const int row1 = std::min(size - 1, static_cast<int>(std::floor(std::max({a.y(), b.y(), c.y()}) - 0.5)));
    const Face& t = mesh.faces[f];
    for (int row = row0; row <= row1; ++row) {
      const double y = row + 0.5;
      for (int col = col0; col <= col1; ++col) {
        const std::size_t i = tm.index(row, col);
        if (tm.face[i] >= 0) continue;
        const double x = col + 0.5;
        const double l0 = ((b.x() - x) * (c.y() - y) - (b.y() - y) * (c.x() - x)) / area;
        const double l1 = ((c.x() - x) * (a.y() - y) - (c.y() - y) * (a.x() - x)) / area;
        const double l2 = 1.0 - l0 - l1;
        constexpr double kSlack = -1e-12;
        if (l0 < kSlack || l1 < kSlack || l2 < kSlack) continue;
        const Vec3 w = Vec3(l0, l1, l2).cwiseMax(0.0) / Vec3(l0, l1, l2).cwiseMax(0.0).sum();
        tm.face[i] = static_cast<int>(f);
        tm.bary[i] = w;
        tm.point[i] = w[0] * mesh.vertices[static_cast<std::size_t>(t[0])] + w[1] * mesh.vertices[static_cast<std::size_t>(t[1])] +
                      w[2] * mesh.vertices[static_cast<std::size_t>(t[2])];
        tm.normal[i] = normals[f];
      }
    }
  }

  for (std::size_t seed = 0; seed < n; ++seed) {
    if (tm.face[seed] < 0 || tm.chart[seed] >= 0) continue;
    const int id = tm.num_charts++;
    std::deque<std::size_t> queue{seed};
    tm.chart[seed] = id;
    while (!queue.empty()) {
      const std::size_t i = queue.front();
      queue.pop_front();
      const int row = static_cast<int>(i / static_cast<std::size_t>(size));
      const int col = static_cast<int>(i % static_cast<std::size_t>(size));
      const std::array<std::pair<int, int>, 4> nbrs{{{row - 1, col}, {row + 1, col}, {row, col - 1}, {row, col + 1}}};
      for (const auto& [r, c] : nbrs) {
        if (r < 0 || c < 0 || r >= size || c >= size) continue;
        const std::size_t j = tm.index(r, c);
        if (tm.face[j] < 0 || tm.chart[j] >= 0) continue;
        tm.chart[j] = id;
        queue.push_back(j);
      }
    }
  }
  return tm;
}

ViewCorrespondence rasterize_correspondence(const TriMesh& mesh, const Rig& rig, int texture_size,
                                            const CorrespondenceOptions& options) {
  if (!(options.depth_tolerance >= 0.0)) throw std::invalid_argument("depth tolerance must be non-negative");
  ViewCorrespondence corr;
  corr.mesh = &mesh;
  corr.rig = rig;
  corr.depth_tolerance = options.depth_tolerance;
  corr.texels = build_texel_map(mesh, texture_size);
  const TriangleBvh bvh(mesh);

  const std::size_t nv = rig.views.size();
  corr.rasters.resize(nv);
  corr.pixel_points.resize(nv);
  corr.pixel_uvs.resize(nv);
  corr.pixel_charts.resize(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    const Raster& ras = corr.rasters[v] = rasterize(mesh, rig.views[v]);
    auto& points = corr.pixel_points[v];
    auto& uvs = corr.pixel_uvs[v];
    auto& charts = corr.pixel_charts[v];
    points.assign(ras.face.size(), Vec3::Zero());
    uvs.assign(ras.face.size(), Vec2::Zero());
    charts.assign(ras.face.size(), -1);
    for (std::size_t i = 0; i < ras.face.size(); ++i) {
      const int f = ras.face[i];
      if (f < 0) continue;
      const Face& t = mesh.faces[static_cast<std::size_t>(f)];
      const Vec3& b = ras.bary[i];
      points[i] = b[0] * mesh.vertices[static_cast<std::size_t>(t[0])] + b[1] * mesh.vertices[static_cast<std::size_t>(t[1])] +
                  b[2] * mesh.vertices[static_cast<std::size_t>(t[2])];
      uvs[i] = b[0] * mesh.corner_uv(static_cast<std::size_t>(f), 0) + b[1] * mesh.corner_uv(static_cast<std::size_t>(f), 1) +
               b[2] * mesh.corner_uv(static_cast<std::size_t>(f), 2);
      charts[i] = corr.texels.face_chart[static_cast<std::size_t>(f)];
    }
  }

  const std::size_t nt = corr.texels.count();
  corr.observations.assign(nt, {});
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 256)
#endif
  for (std::ptrdiff_t ti = 0; ti < static_cast<std::ptrdiff_t>(nt); ++ti) {
    const auto texel = static_cast<std::size_t>(ti);
    if (!corr.texels.covered(texel)) continue;
    const Vec3& p = corr.texels.point[texel];
    const Vec3& n = corr.texels.normal[texel];
    for (std::size_t v = 0; v < nv; ++v) {
      const CameraView& cam = rig.views[v];
      const double cosine = n.dot(cam.toward_camera(p));
      if (!(cosine > 0.0)) continue;
      const Vec3 s = cam.project(p);
      if (cam.projection == Projection::Perspective && s.z() <= 0.0) continue;
      if (s.x() < 0.0 || s.y() < 0.0 || s.x() >= cam.width || s.y() >= cam.height) continue;
      if (occluded(bvh, mesh, cam, p, options.depth_tolerance)) continue;
      Observation obs;
      obs.view = static_cast<int>(v);
      obs.px = s.x();
      obs.py = s.y();
      obs.cosine = cosine;
      obs.sampled = view_stencil(corr, texel, obs).count > 0;
      corr.observations[texel].push_back(obs);
    }
  }
  return corr;
}

WeightTable view_weights(const ViewCorrespondence& corr, double exponent) {
  if (!(exponent > 0.0)) throw std::invalid_argument("view weight exponent must be positive");
  WeightTable w;
  w.views = corr.num_views();
  w.alpha.assign(corr.texels.count() * static_cast<std::size_t>(w.views), 0.0);
  for (std::size_t t = 0; t < corr.observations.size(); ++t) {
    for (const Observation& o : corr.observations[t]) {
      const double c = std::max(o.cosine, 0.0);
      w.at(t, o.view) = exponent == 1.0 ? c : std::pow(c, exponent);
    }
  }
  return w;
}

void reweight_side_views(WeightTable& weights, int front, int back) {
  if (front < 0 || front >= weights.views) throw std::invalid_argument("front view index out of range");
  if (back >= weights.views || back == front) throw std::invalid_argument("back view index out of range");
  const std::size_t nt = weights.alpha.size() / static_cast<std::size_t>(weights.views);
  for (std::size_t t = 0; t < nt; ++t) {
    double sum = 0.0;
    for (int v = 0; v < weights.views; ++v) sum += weights.at(t, v);
    if (!(sum > 0.0)) continue;
    const double privileged = weights.at(t, front) + (back >= 0 ? weights.at(t, back) : 0.0);
    const double factor = 1.0 - privileged / sum;
    for (int v = 0; v < weights.views; ++v) {
      if (v != front && v != back) weights.at(t, v) *= factor;
    }
  }
}

LatentTexture::LatentTexture(int size_, int channels_) : size(size_), channels(channels_) {
  if (size_ < 1 || channels_ < 1) throw std::invalid_argument("texture size and channels must be positive");
  const std::size_t n = static_cast<std::size_t>(size_) * static_cast<std::size_t>(size_);
  data.assign(n * static_cast<std::size_t>(channels_), 0.0);
  valid.assign(n, 0);
}

bool backproject(const ViewCorrespondence& corr, std::size_t texel, const Observation& obs, const LatentImage& view,
                 std::span<double> out) {
  const Stencil st = view_stencil(corr, texel, obs);
  if (st.count == 0) return false;
  const auto c = static_cast<std::size_t>(view.channels);
  if (out.size() != c) throw std::invalid_argument("backproject output size must equal the channel count");
  std::fill(out.begin(), out.end(), 0.0);
  for (int k = 0; k < st.count; ++k) {
    const std::size_t base = st.pixel[static_cast<std::size_t>(k)] * c;
    for (std::size_t ch = 0; ch < c; ++ch) out[ch] += st.weight[static_cast<std::size_t>(k)] * view.data[base + ch];
  }
  return true;
}

LatentTexture aggregate(const ViewCorrespondence& corr, const WeightTable& weights, const LatentViews& views) {
  if (static_cast<int>(views.size()) != corr.num_views() || weights.views != corr.num_views()) {
    throw std::invalid_argument("aggregate: view count mismatch");
  }
  const int channels = views.empty() ? 0 : views.front().channels;
  for (std::size_t v = 0; v < views.size(); ++v) {
    const CameraView& cam = corr.rig.views[v];
    if (views[v].height != cam.height || views[v].width != cam.width || views[v].channels != channels) {
      throw std::invalid_argument("aggregate: view " + std::to_string(v) + " has the wrong shape");
    }
  }
  LatentTexture tex(corr.texels.size, std::max(channels, 1));
  const auto nt = static_cast<std::ptrdiff_t>(corr.texels.count());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1024)
#endif
  for (std::ptrdiff_t ti = 0; ti < nt; ++ti) {
    const auto t = static_cast<std::size_t>(ti);
    std::vector<double> acc(static_cast<std::size_t>(channels), 0.0);
    std::vector<double> val(static_cast<std::size_t>(channels));
    double total = 0.0;
    for (const Observation& o : corr.observations[t]) {
      const double a = weights.at(t, o.view);
      if (!(a > 0.0) || !o.sampled) continue;
      if (!backproject(corr, t, o, views[static_cast<std::size_t>(o.view)], val)) continue;
      for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += a * val[c];
      total += a;
    }
    if (total > 0.0) {
      tex.valid[t] = 1;
      for (int c = 0; c < channels; ++c) tex.at(t, c) = acc[static_cast<std::size_t>(c)] / total;
    }
  }
  return tex;
}

Projection2D project_texture(const ViewCorrespondence& corr, const LatentTexture& texture,
                             const LatentViews* previous) {
  if (texture.size != corr.texels.size) throw std::invalid_argument("project_texture: texture size mismatch");
  if (previous && static_cast<int>(previous->size()) != corr.num_views()) {
    throw std::invalid_argument("project_texture: previous view count mismatch");
  }
  Projection2D out;
  const std::size_t nv = corr.rig.views.size();
  out.views.resize(nv);
  out.retained.resize(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    const CameraView& cam = corr.rig.views[v];
    LatentImage img = previous ? (*previous)[v] : LatentImage(cam.height, cam.width, texture.channels);
    if (img.height != cam.height || img.width != cam.width || img.channels != texture.channels) {
      throw std::invalid_argument("project_texture: previous view " + std::to_string(v) + " has the wrong shape");
    }
    auto& keep = out.retained[v];
    keep.assign(static_cast<std::size_t>(cam.width) * static_cast<std::size_t>(cam.height), 1);
    const Raster& ras = corr.rasters[v];
    const auto npx = static_cast<std::ptrdiff_t>(ras.face.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::ptrdiff_t pi = 0; pi < npx; ++pi) {
      const auto i = static_cast<std::size_t>(pi);
      if (ras.face[i] < 0) continue;
      double* dst = img.data.data() + i * static_cast<std::size_t>(texture.channels);
      std::vector<double> tmp(static_cast<std::size_t>(texture.channels));
      if (sample_texture(texture, corr.texels, corr.pixel_uvs[v][i], corr.pixel_charts[v][i], tmp.data())) {
        std::copy(tmp.begin(), tmp.end(), dst);
        keep[i] = 0;
      }
    }
    out.views[v] = std::move(img);
  }
  return out;
}

double cross_view_spread(const ViewCorrespondence& corr, const LatentViews& views) {
  if (views.empty()) return 0.0;
  const auto channels = static_cast<std::size_t>(views.front().channels);
  double worst = 0.0;
  std::vector<double> lo(channels), hi(channels), val(channels);
  for (std::size_t t = 0; t < corr.observations.size(); ++t) {
    int seen = 0;
    for (const Observation& o : corr.observations[t]) {
      if (!o.sampled || !backproject(corr, t, o, views[static_cast<std::size_t>(o.view)], val)) continue;
      for (std::size_t c = 0; c < channels; ++c) {
        lo[c] = seen ? std::min(lo[c], val[c]) : val[c];
        hi[c] = seen ? std::max(hi[c], val[c]) : val[c];
      }
      ++seen;
    }
    if (seen < 2) continue;
    for (std::size_t c = 0; c < channels; ++c) worst = std::max(worst, hi[c] - lo[c]);
  }
  return worst;
}

LatentImage ConstantTargetDenoiser::denoise(const LatentImage& z, double, int view) const {
  const LatentImage& t = targets_.at(static_cast<std::size_t>(view));
  if (!t.same_shape(z)) throw std::invalid_argument("denoiser: view shape mismatch");
  return t;
}

BiasedDenoiser::BiasedDenoiser(LatentViews target_views, std::vector<double> biases)
    : ConstantTargetDenoiser(std::move(target_views)), biases_(std::move(biases)) {
  if (biases_.size() != targets_.size()) throw std::invalid_argument("one bias per view is required");
}

LatentImage BiasedDenoiser::denoise(const LatentImage& z, double tau, int view) const {
  LatentImage out = ConstantTargetDenoiser::denoise(z, tau, view);
  const double b = biases_[static_cast<std::size_t>(view)];
  for (double& v : out.data) v += b;
  return out;
}

NoisyDenoiser::NoisyDenoiser(LatentViews target_views, double sigma, std::uint64_t seed)
    : ConstantTargetDenoiser(std::move(target_views)), sigma_(sigma), seed_(seed) {}

LatentImage NoisyDenoiser::denoise(const LatentImage& z, double tau, int view) const {
  LatentImage out = ConstantTargetDenoiser::denoise(z, tau, view);
  Rng rng(derive_seed(seed_, static_cast<std::uint64_t>(view), std::bit_cast<std::uint64_t>(tau)));
  for (double& v : out.data) v += tau * sigma_ * standard_normal(rng);
  return out;
}

MergeResult cyclic_merge_run(const ViewDenoiser& denoiser, const ViewCorrespondence& corr, const WeightTable& weights,
                             const MergeOptions& options) {
  if (options.steps < 1) throw std::invalid_argument("cyclic merging needs at least one step");
  if (options.channels < 1) throw std::invalid_argument("latent channel count must be positive");
  MergeResult res;
  LatentTexture noise(corr.texels.size, options.channels);
  Rng rng(derive_seed(options.seed, kNoiseStream, 0));
  for (std::size_t t = 0; t < noise.count(); ++t) {
    if (!corr.texels.covered(t)) continue;
    noise.valid[t] = 1;
    for (int c = 0; c < options.channels; ++c) noise.at(t, c) = standard_normal(rng);
  }
  LatentViews z = project_texture(corr, noise).views;

  for (int k = 0; k < options.steps; ++k) {
    const double tau = 1.0 - static_cast<double>(k) / options.steps;
    const double tau_next = 1.0 - static_cast<double>(k + 1) / options.steps;
    res.spread.push_back(cross_view_spread(corr, z));

    LatentViews clean(z.size());
    for (std::size_t v = 0; v < z.size(); ++v) clean[v] = denoiser.denoise(z[v], tau, static_cast<int>(v));
    res.texture = aggregate(corr, weights, clean);
    const LatentViews merged = project_texture(corr, res.texture, &clean).views;

    const double keep = tau_next / tau;
    for (std::size_t v = 0; v < z.size(); ++v) {
      for (std::size_t i = 0; i < z[v].data.size(); ++i) {
        z[v].data[i] = merged[v].data[i] + keep * (z[v].data[i] - merged[v].data[i]);
      }
    }
  }
  res.spread.push_back(cross_view_spread(corr, z));
  res.views = std::move(z);
  return res;
}

Eigen::MatrixXd symmetric_attention_bias(std::span<const Vec3> a, std::span<const Vec3> b, double w_direct,
                                         double w_mirror, double length_scale) {
  if (!(w_direct >= 0.0) || !(w_mirror >= 0.0) || (w_direct == 0.0 && w_mirror == 0.0)) {
    throw std::invalid_argument("attention weights must be non-negative and not both zero");
  }
  if (!(length_scale > 0.0)) throw std::invalid_argument("attention length scale must be positive");
  const double denom = 2.0 * length_scale * length_scale;
  Eigen::MatrixXd bias(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double d2 = (a[i] - b[j]).squaredNorm();
      const Vec3 mb(-b[j].x(), b[j].y(), b[j].z());
      const double m2 = (a[i] - mb).squaredNorm();
      bias(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          std::log(w_direct * std::exp(-d2 / denom) + w_mirror * std::exp(-m2 / denom) + 1e-12);
    }
  }
  return bias;
}

Eigen::MatrixXd apply_biased_attention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k, const Eigen::MatrixXd& v,
                                       const Eigen::MatrixXd& bias) {
  if (q.cols() != k.cols() || k.rows() != v.rows() || bias.rows() != q.rows() || bias.cols() != k.rows()) {
    throw std::invalid_argument("attention operand shapes are inconsistent");
  }
  Eigen::MatrixXd logits = q * k.transpose() / std::sqrt(static_cast<double>(std::max<Eigen::Index>(q.cols(), 1))) + bias;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    logits.row(r) = (logits.row(r).array() - m).exp();
    logits.row(r) /= logits.row(r).sum();
  }
  return logits * v;
}

FillReport fill_uv_voids(LatentTexture& texture, const TexelMap& texels) {
  if (texture.size != texels.size) throw std::invalid_argument("fill_uv_voids: texture and texel map sizes differ");
  FillReport report;
  const int t = texture.size;
  const auto channels = static_cast<std::size_t>(texture.channels);
  std::vector<int> chart_valid(static_cast<std::size_t>(texels.num_charts), 0);
  std::vector<double> mean(channels, 0.0);
  std::size_t n_valid = 0;
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < texture.count(); ++i) {
    if (!texture.valid[i]) continue;
    ++n_valid;
    for (std::size_t c = 0; c < channels; ++c) mean[c] += texture.data[i * channels + c];
    if (texels.chart[i] >= 0) {
      chart_valid[static_cast<std::size_t>(texels.chart[i])] = 1;
      queue.push_back(i);
    }
  }
  if (n_valid > 0) {
    for (double& m : mean) m /= static_cast<double>(n_valid);
  }

  while (!queue.empty()) {
    const std::size_t i = queue.front();
    queue.pop_front();
    const int row = static_cast<int>(i / static_cast<std::size_t>(t));
    const int col = static_cast<int>(i % static_cast<std::size_t>(t));
    const std::array<std::pair<int, int>, 4> nbrs{{{row - 1, col}, {row + 1, col}, {row, col - 1}, {row, col + 1}}};
    for (const auto& [r, c] : nbrs) {
      if (r < 0 || c < 0 || r >= t || c >= t) continue;
      const std::size_t j = texels.index(r, c);
      if (texture.valid[j] || texels.chart[j] != texels.chart[i]) continue;
      texture.valid[j] = 1;
      std::copy_n(texture.data.begin() + static_cast<std::ptrdiff_t>(i * channels), channels,
                  texture.data.begin() + static_cast<std::ptrdiff_t>(j * channels));
      ++report.filled;
      queue.push_back(j);
    }
  }

  for (int ch = 0; ch < texels.num_charts; ++ch) {
    if (chart_valid[static_cast<std::size_t>(ch)]) continue;
    report.empty_charts.push_back(ch);
  }
  if (!report.empty_charts.empty()) {
    for (std::size_t i = 0; i < texture.count(); ++i) {
      if (texels.chart[i] < 0 || texture.valid[i] || chart_valid[static_cast<std::size_t>(texels.chart[i])]) continue;
      texture.valid[i] = 1;
      std::copy(mean.begin(), mean.end(), texture.data.begin() + static_cast<std::ptrdiff_t>(i * channels));
      ++report.filled;
    }
  }
  return report;
}

void write_texture_png(const std::filesystem::path& path, const LatentTexture& texture, int bit_depth) {
  const int t = texture.size;
  std::vector<double> samples(static_cast<std::size_t>(t) * static_cast<std::size_t>(t) * 4);
  for (int row = 0; row < t; ++row) {
    const int src_row = t - 1 - row;
    for (int col = 0; col < t; ++col) {
      const std::size_t src = static_cast<std::size_t>(src_row) * static_cast<std::size_t>(t) + static_cast<std::size_t>(col);
      double* dst = samples.data() + (static_cast<std::size_t>(row) * static_cast<std::size_t>(t) + static_cast<std::size_t>(col)) * 4;
      for (int c = 0; c < 3; ++c) dst[c] = texture.at(src, std::min(c, texture.channels - 1));
      dst[3] = texture.valid[src] ? 1.0 : 0.0;
    }
  }
  write_png(path, t, t, 4, samples, bit_depth);
}

void write_correspondence_dump(const std::filesystem::path& stem, const ViewCorrespondence& corr,
                               const WeightTable& weights) {
  using nlohmann::json;
  std::filesystem::path bin_path = stem;
  bin_path += ".bin";
  std::filesystem::path json_path = stem;
  json_path += ".json";
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + bin_path.string() + " for writing");

  json arrays = json::array();
  std::uint64_t offset = 0;
  auto emit = [&](const std::string& name, const std::string& dtype, std::vector<std::size_t> shape, const void* data,
                  std::size_t bytes) {
    bin.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
    arrays.push_back({{"name", name}, {"dtype", dtype}, {"shape", shape}, {"offset", offset}, {"bytes", bytes}});
    offset += bytes;
  };

  const TexelMap& tm = corr.texels;
  const std::size_t nt = tm.count();
  std::vector<std::int32_t> i32(tm.face.begin(), tm.face.end());
  emit("texel_face", "int32", {nt}, i32.data(), i32.size() * 4);
  i32.assign(tm.chart.begin(), tm.chart.end());
  emit("texel_chart", "int32", {nt}, i32.data(), i32.size() * 4);
  std::vector<double> f64;
  for (const Vec3& p : tm.point) f64.insert(f64.end(), {p.x(), p.y(), p.z()});
  emit("texel_point", "float64", {nt, 3}, f64.data(), f64.size() * 8);
  f64.clear();
  for (const Vec3& n : tm.normal) f64.insert(f64.end(), {n.x(), n.y(), n.z()});
  emit("texel_normal", "float64", {nt, 3}, f64.data(), f64.size() * 8);

  std::vector<std::int32_t> obs_texel, obs_view;
  std::vector<double> obs_pixel, obs_cos, obs_alpha;
  std::vector<std::uint8_t> obs_sampled;
  for (std::size_t t = 0; t < nt; ++t) {
    for (const Observation& o : corr.observations[t]) {
      obs_texel.push_back(static_cast<std::int32_t>(t));
      obs_view.push_back(o.view);
      obs_pixel.insert(obs_pixel.end(), {o.px, o.py});
      obs_cos.push_back(o.cosine);
      obs_alpha.push_back(weights.at(t, o.view));
      obs_sampled.push_back(o.sampled ? 1 : 0);
    }
  }
  const std::size_t m = obs_texel.size();
  emit("obs_texel", "int32", {m}, obs_texel.data(), m * 4);
  emit("obs_view", "int32", {m}, obs_view.data(), m * 4);
  emit("obs_pixel", "float64", {m, 2}, obs_pixel.data(), m * 16);
  emit("obs_cosine", "float64", {m}, obs_cos.data(), m * 8);
  emit("obs_alpha", "float64", {m}, obs_alpha.data(), m * 8);
  emit("obs_sampled", "uint8", {m}, obs_sampled.data(), m);

  json views = json::array();
  for (std::size_t v = 0; v < corr.rasters.size(); ++v) {
    const Raster& r = corr.rasters[v];
    i32.assign(r.face.begin(), r.face.end());
    emit("view" + std::to_string(v) + "_face", "int32", {static_cast<std::size_t>(r.height), static_cast<std::size_t>(r.width)},
         i32.data(), i32.size() * 4);
    const CameraView& c = corr.rig.views[v];
    views.push_back({{"position", {c.position.x(), c.position.y(), c.position.z()}},
                     {"target", {c.target.x(), c.target.y(), c.target.z()}},
                     {"up", {c.up.x(), c.up.y(), c.up.z()}},
                     {"fov_y_deg", c.fov_y_deg},
                     {"width", c.width},
                     {"height", c.height}});
  }
  bin.close();
  if (!bin) throw std::runtime_error("writing " + bin_path.string() + " failed");

  const json header = {{"format", "garmentgen-correspondence"},
                       {"version", 1},
                       {"byte_order", std::endian::native == std::endian::little ? "little" : "big"},
                       {"binary", bin_path.filename().string()},
                       {"texture_size", tm.size},
                       {"depth_tolerance", corr.depth_tolerance},
                       {"front", corr.rig.front},
                       {"back", corr.rig.back},
                       {"views", views},
                       {"arrays", arrays}};
  std::ofstream js(json_path);
  if (!js) throw std::runtime_error("cannot open " + json_path.string() + " for writing");
  js << header.dump(2) << '\n';
}

}  // namespace garmentgen
