#pragma once

// Independent reference computations for tests. Nothing here calls into the
// accelerated code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Geometry>

#include "garmentgen/mesh.hpp"

namespace oracle {

using garmentgen::Vec3;

inline double point_segment_sq(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * ab)).squaredNorm();
}

/// Squared distance from p to triangle abc: plane projection when it falls
/// inside, otherwise the nearest of the three edges.
inline double point_triangle_sq(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 n = (b - a).cross(c - a);
  const double nn = n.squaredNorm();
  const Vec3 proj = p - n * ((p - a).dot(n) / nn);
  const double wa = (b - proj).cross(c - proj).dot(n) / nn;
  const double wb = (c - proj).cross(a - proj).dot(n) / nn;
  const double wc = 1.0 - wa - wb;
  if (wa >= 0 && wb >= 0 && wc >= 0) return (p - proj).squaredNorm();
  return std::min({point_segment_sq(p, a, b), point_segment_sq(p, b, c), point_segment_sq(p, c, a)});
}

/// O(F) scan of all triangles.
inline double unsigned_distance(const garmentgen::TriMesh& m, const Vec3& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& t : m.faces) {
    best = std::min(best, point_triangle_sq(p, m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]));
  }
  return std::sqrt(best);
}

/// Moller-Trumbore; returns the ray parameter of the hit (two-sided).
inline std::optional<double> ray_triangle(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b,
                                          const Vec3& c) {
  const Vec3 e1 = b - a, e2 = c - a;
  const Vec3 pv = d.cross(e2);
  const double det = e1.dot(pv);
  if (std::abs(det) < 1e-14) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 tv = o - a;
  const double u = tv.dot(pv) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 qv = tv.cross(e1);
  const double v = d.dot(qv) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = e2.dot(qv) * inv;
  if (t <= 0.0) return std::nullopt;
  return t;
}

/// O(N) nearest neighbor with ties resolved toward the smaller id.
inline std::pair<int, double> nearest(const std::vector<Vec3>& pts, const Vec3& q) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d = (q - pts[i]).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return {best, best_d};
}

/// O(N M) symmetric Chamfer distance.
inline double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  double fwd = 0.0, bwd = 0.0;
  for (const Vec3& p : a) fwd += nearest(b, p).second;
  for (const Vec3& q : b) bwd += nearest(a, q).second;
  return fwd * (1.0 / static_cast<double>(a.size())) + bwd * (1.0 / static_cast<double>(b.size()));
}

/// O(N^2) Chamfer distance between points and their x-mirror.
inline double mirror_chamfer(const std::vector<Vec3>& pts) {
  std::vector<Vec3> mir;
  for (const Vec3& p : pts) mir.emplace_back(-p.x(), p.y(), p.z());
  const double inv_n = 1.0 / static_cast<double>(pts.size());
  double fwd = 0.0, bwd = 0.0;
  for (const Vec3& p : pts) fwd += nearest(mir, p).second;
  for (const Vec3& q : mir) bwd += nearest(pts, q).second;
  return fwd * inv_n + bwd * inv_n;
}

/// Central differences of f over every coordinate of `x`.
inline std::vector<Vec3> fd_gradient(const std::function<double(const std::vector<Vec3>&)>& f,
                                     std::vector<Vec3> x, double h) {
  std::vector<Vec3> g(x.size(), Vec3::Zero());
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      const double keep = x[i][k];
      x[i][k] = keep + h;
      const double fp = f(x);
      x[i][k] = keep - h;
      const double fm = f(x);
      x[i][k] = keep;
      g[i][k] = (fp - fm) / (2.0 * h);
    }
  }
  return g;
}

/// max_i |a_i - b_i| / max(max_i |b_i|, floor)
inline double relative_error(const std::vector<Vec3>& a, const std::vector<Vec3>& b, double floor = 1e-12) {
  double num = 0.0, den = floor;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, (a[i] - b[i]).cwiseAbs().maxCoeff());
    den = std::max(den, b[i].cwiseAbs().maxCoeff());
  }
  return num / den;
}

}  // namespace oracle
