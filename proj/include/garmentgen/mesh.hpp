#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace garmentgen {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Face = std::array<int, 3>;

class MeshError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed mesh text; `line()` is 1-based, 0 when not tied to a line.
class ParseError : public MeshError {
 public:
  ParseError(const std::string& what, int line, const std::string& source = {});
  int line() const { return line_; }
  const std::string& message() const { return message_; }

 private:
  int line_;
  std::string message_;
};

class DegenerateFaceError : public MeshError {
 public:
  explicit DegenerateFaceError(std::vector<int> faces);
  const std::vector<int>& faces() const { return faces_; }

 private:
  std::vector<int> faces_;
};

/// Indexed triangle mesh. UVs are optional and stored as a coordinate pool
/// plus per-face corner indices, the same layout as Wavefront `vt` records.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::vector<Vec2> uvs;
  std::vector<Face> uv_faces;

  std::size_t num_vertices() const { return vertices.size(); }
  std::size_t num_faces() const { return faces.size(); }
  bool empty() const { return faces.empty(); }
  bool has_uvs() const { return !uv_faces.empty() && uv_faces.size() == faces.size(); }
  Vec2 corner_uv(std::size_t face, int corner) const {
    return uvs[static_cast<std::size_t>(uv_faces[face][corner])];
  }
};

inline constexpr double kMinFaceArea = 1e-12;

/// Throws if any index is out of range, a face repeats a vertex, a face is
/// below kMinFaceArea, or two faces traverse a shared edge in the same
/// direction (inconsistent orientation).
void validate_mesh(const TriMesh& mesh);

/// Faces whose area is at or below kMinFaceArea or that repeat an index.
std::vector<int> degenerate_faces(const TriMesh& mesh);

TriMesh load_mesh(const std::filesystem::path& path);
TriMesh parse_mesh(std::string_view text, const std::string& source = {});
void save_mesh(const TriMesh& mesh, const std::filesystem::path& path);
std::string format_mesh(const TriMesh& mesh);

double face_area(const TriMesh& mesh, std::size_t face);
std::vector<double> face_areas(const TriMesh& mesh);
/// Unit normals following counter-clockwise winding. Throws
/// DegenerateFaceError when any face has no well-defined normal.
std::vector<Vec3> face_normals(const TriMesh& mesh);
/// Area-weighted, normalized per-vertex normals. Isolated vertices get zero.
std::vector<Vec3> vertex_normals(const TriMesh& mesh);

/// Undirected edge with up to two incident faces in a consistent order.
struct Edge {
  int v0 = -1;
  int v1 = -1;
  std::vector<int> faces;
};

/// Unique undirected edges, sorted by (v0, v1) with v0 < v1.
std::vector<Edge> build_edges(const TriMesh& mesh);
/// Sorted, de-duplicated one-ring neighbors per vertex.
std::vector<std::vector<int>> vertex_neighbors(const TriMesh& mesh);
/// Vertices touching an edge with exactly one incident face.
std::vector<bool> boundary_vertices(const TriMesh& mesh);
/// Number of connected components over face adjacency via shared vertices.
int count_components(const TriMesh& mesh);

Vec3 area_weighted_centroid(const TriMesh& mesh);

/// Area-uniform surface samples. Positions are a barycentric combination of
/// the owning face's vertices, so they follow the mesh when it deforms.
struct SamplePoints {
  std::vector<int> face_ids;
  std::vector<Vec3> barycentrics;
  std::vector<Vec3> positions;

  std::size_t size() const { return face_ids.size(); }
};

SamplePoints sample_surface(const TriMesh& mesh, std::size_t n, std::uint64_t seed);

/// Positions of `samples` on `mesh` (which must share the sampled topology).
std::vector<Vec3> sample_positions(const TriMesh& mesh, const SamplePoints& samples);
void update_positions(const TriMesh& mesh, SamplePoints& samples);

/// Distributes per-sample gradients to the vertices of the owning faces with
/// the sample's barycentric weights.
std::vector<Vec3> scatter_to_vertices(const TriMesh& mesh, const SamplePoints& samples,
                                      std::span<const Vec3> sample_grads);

/// Uniform scale plus translation: x -> scale * (x + offset).
struct Similarity {
  double scale = 1.0;
  Vec3 offset = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * (p + offset); }
  Vec3 invert(const Vec3& p) const { return p / scale - offset; }
};

/// Similarity that centers `mesh` and fits its bounding box into [-1, 1]^3.
Similarity fit_unit_box(const TriMesh& mesh);
void apply_similarity(TriMesh& mesh, const Similarity& sim);
void invert_similarity(TriMesh& mesh, const Similarity& sim);

}  // namespace garmentgen
