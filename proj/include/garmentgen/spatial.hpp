#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "garmentgen/mesh.hpp"

namespace garmentgen {

/// Thrown when a mesh that must enclose a volume has boundary edges.
class OpenSurfaceError : public MeshError {
 public:
  explicit OpenSurfaceError(std::vector<std::pair<int, int>> edges);
  const std::vector<std::pair<int, int>>& boundary_edges() const { return edges_; }

 private:
  std::vector<std::pair<int, int>> edges_;
};

/// Which part of a triangle the closest point lies on. Vertex and edge
/// features carry a local index: vertex k, or edge (k, k+1 mod 3).
enum class Feature : std::uint8_t { Face, Edge, Vertex };

struct TriangleClosest {
  Vec3 point;
  Vec3 barycentric;
  Feature feature = Feature::Face;
  int local = 0;
};

TriangleClosest closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void grow(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void grow(const Aabb& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  double surface_area() const;
  double squared_distance(const Vec3& p) const;
};

struct RayHit {
  double t = std::numeric_limits<double>::infinity();
  int face = -1;
  double u = 0.0;  // barycentrics of corners 1 and 2
  double v = 0.0;
};

/// Two-sided ray/triangle intersection; hits with t <= t_min are ignored.
bool intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b, const Vec3& c,
                        double t_min, RayHit& hit);

struct ClosestHit {
  double sq_distance = std::numeric_limits<double>::infinity();
  int face = -1;
  TriangleClosest closest;
};

/// Binary AABB tree over triangles with binned surface-area-heuristic splits
/// and at most four triangles per leaf.
class TriangleBvh {
 public:
  static constexpr int kMaxLeafSize = 4;

  TriangleBvh() = default;
  explicit TriangleBvh(const TriMesh& mesh);

  ClosestHit closest(const TriMesh& mesh, const Vec3& p) const;
  /// Nearest hit with t in (t_min, t_max); ties go to the smaller face id.
  RayHit first_hit(const TriMesh& mesh, const Vec3& origin, const Vec3& dir, double t_min, double t_max) const;
  /// True if any triangle is hit with t in (t_min, t_max).
  bool any_hit(const TriMesh& mesh, const Vec3& origin, const Vec3& dir, double t_min, double t_max) const;
  std::size_t node_count() const { return nodes_.size(); }
  int depth() const;

 private:
  struct Node {
    Aabb box;
    int left = -1;   // interior: child indices; leaf: left == -1
    int right = -1;
    int first = 0;   // leaf range into order_
    int count = 0;
  };

  int build(std::vector<int>& idx, const std::vector<Aabb>& boxes, const std::vector<Vec3>& centers,
            int begin, int end);
  template <bool kAny>
  RayHit trace(const TriMesh& mesh, const Vec3& origin, const Vec3& dir, double t_min, double t_max) const;

  std::vector<Node> nodes_;
  std::vector<int> order_;
};

/// Result of a signed-distance query. `gradient` is the unit direction of
/// steepest increase; it falls back to the face normal on the surface.
struct SdfQuery {
  double distance = 0.0;
  Vec3 closest = Vec3::Zero();
  Vec3 gradient = Vec3::Zero();
  int face = -1;
};

/// Signed distance to a closed, outward-oriented body mesh: negative inside.
/// Signs come from angle-weighted pseudonormals at the closest feature.
class BodySdf {
 public:
  /// Throws OpenSurfaceError if any edge does not have exactly two faces.
  explicit BodySdf(TriMesh body);

  SdfQuery query(const Vec3& p) const;
  double signed_distance(const Vec3& p) const { return query(p).distance; }
  const TriMesh& mesh() const { return mesh_; }

 private:
  TriMesh mesh_;
  TriangleBvh bvh_;
  std::vector<Vec3> face_normals_;
  std::vector<Vec3> vertex_pseudonormals_;
  std::vector<std::array<Vec3, 3>> edge_pseudonormals_;  // per face, edge (k, k+1)
};

/// Generalized winding number: sum of signed solid angles over 4*pi.
/// About 1 inside a closed outward mesh, 0 outside.
double winding_number(const TriMesh& mesh, const Vec3& p);

/// Exact nearest-neighbor search over a fixed point set (KD-tree). Ties are
/// resolved toward the smaller point id, so results equal a linear scan.
class PointIndex {
 public:
  explicit PointIndex(std::vector<Vec3> points);

  /// (point id, squared distance). Throws std::logic_error when empty.
  std::pair<int, double> nearest(const Vec3& q) const;
  std::size_t size() const { return points_.size(); }
  const std::vector<Vec3>& points() const { return points_; }

 private:
  static constexpr int kLeafSize = 8;
  struct Node {
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    int left = -1;
    int right = -1;
    int first = 0;
    int count = 0;
  };

  int build(int begin, int end);
  void search(int node, const Vec3& q, int& best_id, double& best_d) const;

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

/// Symmetric Chamfer distance: mean squared distance from each point of `a`
/// to its nearest point of `b`, plus the same from `b` to `a`. Both sets must
/// be non-empty.
double chamfer_distance(std::span<const Vec3> a, std::span<const Vec3> b);

}  // namespace garmentgen
