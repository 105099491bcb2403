#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "garmentgen/mesh.hpp"
#include "garmentgen/spatial.hpp"

namespace garmentgen {

/// Semi-infinite cylinder whose closed end sits at a body joint; `axis`
/// points from the joint into the region garments must not reach.
struct BlockingCylinder {
  Vec3 closed_end_center = Vec3::Zero();
  Vec3 axis = Vec3::UnitX();
  double radius = 1.0;
  std::string name;

  /// Normalizes `axis`; throws std::invalid_argument on a zero axis or a
  /// non-positive radius.
  static BlockingCylinder make(const Vec3& center, const Vec3& axis, double radius, std::string name = {});

  /// Signed axial coordinate of `p` measured from the closed-end plane.
  double axial(const Vec3& p) const { return (p - closed_end_center).dot(axis); }
  bool contains(const Vec3& p) const;
};

std::vector<BlockingCylinder> parse_cylinders(const std::string& json_text);
std::vector<BlockingCylinder> load_cylinders(const std::filesystem::path& path);
std::string format_cylinders(std::span<const BlockingCylinder> cylinders);

struct LossWeights {
  double collision = 5e5;
  double blocking = 1e5;
  double symmetry = 5e5;
  double laplacian = 2e4;
  double normal_consistency = 2e4;
  double epsilon = 0.005;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// Loss value with gradients w.r.t. each sample position.
struct SampleLoss {
  double value = 0.0;
  std::vector<Vec3> grad;
};

/// Loss value with gradients w.r.t. each mesh vertex.
struct VertexLoss {
  double value = 0.0;
  std::vector<Vec3> grad;
};

/// mean_i max(eps - d(p_i), 0) with d the signed distance to the body.
SampleLoss collision_loss(std::span<const Vec3> positions, const BodySdf& sdf, double epsilon);

/// mean_i sum_c axial_c(p_i) * [p_i inside c]. The indicator is hard.
SampleLoss blocking_loss(std::span<const Vec3> positions, std::span<const BlockingCylinder> cylinders);

/// Chamfer distance between the points and their mirror images under
/// x -> -x, both directions averaged over the same count.
SampleLoss symmetry_loss(std::span<const Vec3> positions);

inline Vec3 mirror_x(const Vec3& p) { return {-p.x(), p.y(), p.z()}; }

enum class LaplacianScope { AllVertices, InteriorOnly };

struct LaplacianLoss {
  double value = 0.0;
  std::vector<Vec3> grad;
  /// Each vertex's share of `value` (already divided by the vertex count).
  std::vector<double> per_vertex;
  /// Vertices skipped because they have no neighbors.
  int isolated = 0;
};

/// mean_i |v_i - mean(neighbors(v_i))|^2 with uniform graph weights.
LaplacianLoss laplacian_loss(const TriMesh& mesh, LaplacianScope scope = LaplacianScope::AllVertices);

/// mean over edges with exactly two faces of (1 - n_a . n_b). Throws
/// std::invalid_argument when there is no such edge.
VertexLoss normal_consistency_loss(const TriMesh& mesh);

struct GeometryTerms {
  double collision = 0.0;
  double blocking = 0.0;
  double symmetry = 0.0;
  double laplacian = 0.0;
  double normal_consistency = 0.0;
};

struct GeometryLoss {
  /// Unweighted term values.
  GeometryTerms terms;
  /// Weighted sum.
  double value = 0.0;
  std::vector<Vec3> grad;
};

/// Weighted sum of the five geometric terms. Sample positions are re-derived
/// from `mesh` using the face ids and barycentrics in `samples`, so the result
/// is a function of the vertex positions alone. Terms with zero weight are
/// not evaluated.
GeometryLoss total_geometry_loss(const TriMesh& mesh, const SamplePoints& samples, const BodySdf* sdf,
                                 std::span<const BlockingCylinder> cylinders, const LossWeights& weights,
                                 bool enable_symmetry);

}  // namespace garmentgen
