#include "garmentgen/primitives.hpp"

#include <cmath>
#include <map>
#include <numbers>

#include <Eigen/Geometry>

namespace garmentgen {

namespace {

int midpoint(std::map<std::pair<int, int>, int>& cache, std::vector<Vec3>& verts, int a, int b) {
  const auto key = std::minmax(a, b);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  const Vec3 m = (verts[static_cast<std::size_t>(a)] + verts[static_cast<std::size_t>(b)]).normalized();
  verts.push_back(m);
  const int idx = static_cast<int>(verts.size()) - 1;
  cache.emplace(key, idx);
  return idx;
}

// Surface of revolution about the x axis through `profile` (x, r) pairs;
// profile endpoints with r == 0 collapse to poles.
TriMesh revolve_x(const std::vector<Vec2>& profile, int segments, const Vec3& center) {
  TriMesh mesh;
  std::vector<int> ring_start(profile.size(), -1);
  std::vector<bool> pole(profile.size(), false);
  for (std::size_t i = 0; i < profile.size(); ++i) {
    ring_start[i] = static_cast<int>(mesh.vertices.size());
    if (profile[i].y() <= 0.0) {
      pole[i] = true;
      mesh.vertices.push_back(center + Vec3(profile[i].x(), 0.0, 0.0));
      continue;
    }
    for (int j = 0; j < segments; ++j) {
      const double phi = 2.0 * std::numbers::pi * j / segments;
      mesh.vertices.push_back(center + Vec3(profile[i].x(), profile[i].y() * std::cos(phi),
                                            profile[i].y() * std::sin(phi)));
    }
  }
  auto at = [&](std::size_t ring, int j) {
    return pole[ring] ? ring_start[ring] : ring_start[ring] + (j % segments);
  };
  for (std::size_t i = 0; i + 1 < profile.size(); ++i) {
    for (int j = 0; j < segments; ++j) {
      const int a = at(i, j), b = at(i, j + 1), c = at(i + 1, j), d = at(i + 1, j + 1);
      if (!pole[i]) mesh.faces.push_back({a, c, b});
      if (!pole[i + 1]) mesh.faces.push_back({b, c, d});
    }
  }
  return mesh;
}

}  // namespace

double signed_volume(const TriMesh& mesh) {
  double vol = 0.0;
  for (const Face& t : mesh.faces) {
    const Vec3& a = mesh.vertices[static_cast<std::size_t>(t[0])];
    const Vec3& b = mesh.vertices[static_cast<std::size_t>(t[1])];
    const Vec3& c = mesh.vertices[static_cast<std::size_t>(t[2])];
    vol += a.dot(b.cross(c));
  }
  return vol / 6.0;
}

void flip_orientation(TriMesh& mesh) {
  for (Face& t : mesh.faces) std::swap(t[1], t[2]);
  for (Face& t : mesh.uv_faces) std::swap(t[1], t[2]);
}

TriMesh make_icosphere(int subdivisions, double radius, const Vec3& center) {
  const double p = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, p, 0}, {1, p, 0}, {-1, -p, 0}, {1, -p, 0}, {0, -1, p}, {0, 1, p},
                         {0, -1, -p}, {0, 1, -p}, {p, 0, -1}, {p, 0, 1}, {-p, 0, -1}, {-p, 0, 1}};
  for (Vec3& x : v) x.normalize();
  std::vector<Face> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                         {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                         {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                         {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> cache;
    std::vector<Face> next;
    next.reserve(f.size() * 4);
    for (const Face& t : f) {
      const int a = midpoint(cache, v, t[0], t[1]);
      const int b = midpoint(cache, v, t[1], t[2]);
      const int c = midpoint(cache, v, t[2], t[0]);
      next.push_back({t[0], a, c});
      next.push_back({t[1], b, a});
      next.push_back({t[2], c, b});
      next.push_back({a, b, c});
    }
    f.swap(next);
  }
  TriMesh mesh;
  mesh.vertices.reserve(v.size());
  for (const Vec3& x : v) mesh.vertices.push_back(center + radius * x);
  mesh.faces = std::move(f);
  if (signed_volume(mesh) < 0.0) flip_orientation(mesh);
  return mesh;
}

TriMesh make_box(const Vec3& h, const Vec3& center) {
  TriMesh mesh;
  for (int i = 0; i < 8; ++i) {
    mesh.vertices.push_back(center + Vec3((i & 1) ? h.x() : -h.x(), (i & 2) ? h.y() : -h.y(),
                                          (i & 4) ? h.z() : -h.z()));
  }
  mesh.faces = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
                {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  if (signed_volume(mesh) < 0.0) flip_orientation(mesh);
  return mesh;
}

TriMesh make_capsule(double radius, double half_length, int segments, int rings, const Vec3& center) {
  std::vector<Vec2> profile;
  const int cap = std::max(rings / 4, 2);
  const int body = std::max(rings - 2 * cap, 1);
  for (int i = 0; i <= cap; ++i) {
    const double theta = std::numbers::pi / 2.0 * (1.0 - static_cast<double>(i) / cap);
    profile.emplace_back(-half_length - radius * std::sin(theta), radius * std::cos(theta));
  }
  for (int i = 1; i < body; ++i) {
    profile.emplace_back(-half_length + 2.0 * half_length * i / body, radius);
  }
  for (int i = 0; i <= cap; ++i) {
    const double theta = std::numbers::pi / 2.0 * static_cast<double>(i) / cap;
    profile.emplace_back(half_length + radius * std::sin(theta), radius * std::cos(theta));
  }
  profile.front().y() = 0.0;
  profile.back().y() = 0.0;
  TriMesh mesh = revolve_x(profile, segments, center);
  if (signed_volume(mesh) < 0.0) flip_orientation(mesh);
  return mesh;
}

TriMesh make_tube(double radius, double x_begin, double x_end, int segments, int rings,
                  const Vec3& axis_offset) {
  TriMesh mesh;
  for (int i = 0; i <= rings; ++i) {
    const double x = x_begin + (x_end - x_begin) * i / rings;
    for (int j = 0; j < segments; ++j) {
      const double phi = 2.0 * std::numbers::pi * j / segments;
      mesh.vertices.push_back(axis_offset + Vec3(x, radius * std::cos(phi), radius * std::sin(phi)));
    }
  }
  // UV pool has a duplicated seam column (j == segments).
  for (int i = 0; i <= rings; ++i) {
    for (int j = 0; j <= segments; ++j) {
      mesh.uvs.emplace_back(static_cast<double>(j) / segments, static_cast<double>(i) / rings);
    }
  }
  for (int i = 0; i < rings; ++i) {
    for (int j = 0; j < segments; ++j) {
      const int a = i * segments + j, b = i * segments + (j + 1) % segments;
      const int c = (i + 1) * segments + j, d = (i + 1) * segments + (j + 1) % segments;
      const int ta = i * (segments + 1) + j, tb = ta + 1;
      const int tc = (i + 1) * (segments + 1) + j, td = tc + 1;
      mesh.faces.push_back({a, b, c});
      mesh.uv_faces.push_back({ta, tb, tc});
      mesh.faces.push_back({b, d, c});
      mesh.uv_faces.push_back({tb, td, tc});
    }
  }
  // make normals point away from the axis
  const Face& t = mesh.faces.front();
  const Vec3& p0 = mesh.vertices[static_cast<std::size_t>(t[0])];
  const Vec3 n = (mesh.vertices[static_cast<std::size_t>(t[1])] - p0).cross(mesh.vertices[static_cast<std::size_t>(t[2])] - p0);
  Vec3 radial = p0 - axis_offset;
  radial.x() = 0.0;
  if (n.dot(radial) < 0.0) flip_orientation(mesh);
  return mesh;
}

TriMesh make_grid(int nx, int ny, double width, double height, double z, double cx, double cy) {
  TriMesh mesh;
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      const double u = static_cast<double>(i) / nx;
      const double v = static_cast<double>(j) / ny;
      mesh.vertices.emplace_back(cx + (u - 0.5) * width, cy + (v - 0.5) * height, z);
      mesh.uvs.emplace_back(u, v);
    }
  }
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int a = j * (nx + 1) + i, b = a + 1, c = a + nx + 1, d = c + 1;
      mesh.faces.push_back({a, b, d});
      mesh.faces.push_back({a, d, c});
    }
  }
  mesh.uv_faces = mesh.faces;
  return mesh;
}

TriMesh make_hex_patch(double radius) {
  TriMesh mesh;
  mesh.vertices.emplace_back(0.0, 0.0, 0.0);
  for (int k = 0; k < 6; ++k) {
    const double a = std::numbers::pi / 3.0 * k;
    mesh.vertices.emplace_back(radius * std::cos(a), radius * std::sin(a), 0.0);
  }
  for (int k = 0; k < 6; ++k) mesh.faces.push_back({0, 1 + k, 1 + (k + 1) % 6});
  return mesh;
}

TriMesh merge_meshes(const std::vector<TriMesh>& parts) {
  TriMesh out;
  bool all_uv = !parts.empty();
  for (const TriMesh& m : parts) all_uv = all_uv && m.has_uvs();
  for (const TriMesh& m : parts) {
    const int vo = static_cast<int>(out.vertices.size());
    const int to = static_cast<int>(out.uvs.size());
    out.vertices.insert(out.vertices.end(), m.vertices.begin(), m.vertices.end());
    for (const Face& t : m.faces) out.faces.push_back({t[0] + vo, t[1] + vo, t[2] + vo});
    if (all_uv) {
      out.uvs.insert(out.uvs.end(), m.uvs.begin(), m.uvs.end());
      for (const Face& t : m.uv_faces) out.uv_faces.push_back({t[0] + to, t[1] + to, t[2] + to});
    }
  }
  return out;
}

}  // namespace garmentgen
