#include "garmentgen/mesh.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <Eigen/Geometry>

#include "garmentgen/random.hpp"

namespace garmentgen {

namespace {

std::string list_faces(const std::vector<int>& faces) {
  std::ostringstream os;
  const std::size_t shown = std::min<std::size_t>(faces.size(), 16);
  for (std::size_t i = 0; i < shown; ++i) os << (i ? ", " : "") << faces[i];
  if (faces.size() > shown) os << ", ... (" << faces.size() << " total)";
  return os.str();
}

Vec3 face_cross(const TriMesh& mesh, std::size_t f) {
  const Face& t = mesh.faces[f];
  const Vec3& a = mesh.vertices[static_cast<std::size_t>(t[0])];
  const Vec3& b = mesh.vertices[static_cast<std::size_t>(t[1])];
  const Vec3& c = mesh.vertices[static_cast<std::size_t>(t[2])];
  return (b - a).cross(c - a);
}

std::uint64_t edge_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

// Splits on spaces/tabs; no allocation for the tokens themselves.
std::vector<std::string_view> tokenize(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

double parse_double(std::string_view tok, int line) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError("invalid number '" + std::string(tok) + "'", line);
  }
  return value;
}

// Resolves a 1-based (or negative, relative) OBJ index against `count`.
int resolve_index(std::string_view tok, std::size_t count, int line, const char* kind) {
  long value = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || value == 0) {
    throw ParseError(std::string("invalid ") + kind + " index '" + std::string(tok) + "'", line);
  }
  const long resolved = value > 0 ? value - 1 : static_cast<long>(count) + value;
  if (resolved < 0 || resolved >= static_cast<long>(count)) {
    throw ParseError(std::string(kind) + " index " + std::to_string(value) + " out of range (" +
                         std::to_string(count) + " defined)",
                     line);
  }
  return static_cast<int>(resolved);
}

}  // namespace

ParseError::ParseError(const std::string& what, int line, const std::string& source)
    : MeshError((source.empty() ? std::string() : source + ":") +
                (line > 0 ? "line " + std::to_string(line) + ": " : std::string(source.empty() ? "" : " ")) + what),
      line_(line),
      message_(what) {}

DegenerateFaceError::DegenerateFaceError(std::vector<int> faces)
    : MeshError("degenerate faces: " + list_faces(faces)), faces_(std::move(faces)) {}

std::vector<int> degenerate_faces(const TriMesh& mesh) {
  std::vector<int> bad;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& t = mesh.faces[f];
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2] ||
        0.5 * face_cross(mesh, f).norm() <= kMinFaceArea) {
      bad.push_back(static_cast<int>(f));
    }
  }
  return bad;
}

void validate_mesh(const TriMesh& mesh) {
  const auto nv = static_cast<int>(mesh.vertices.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    for (int idx : mesh.faces[f]) {
      if (idx < 0 || idx >= nv) {
        throw MeshError("face " + std::to_string(f) + " references vertex " +
                        std::to_string(idx) + " of " + std::to_string(nv));
      }
    }
  }
  if (auto bad = degenerate_faces(mesh); !bad.empty()) throw DegenerateFaceError(std::move(bad));

  std::map<std::uint64_t, int> directed;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& t = mesh.faces[f];
    for (int k = 0; k < 3; ++k) {
      const auto [it, inserted] = directed.emplace(edge_key(t[k], t[(k + 1) % 3]), static_cast<int>(f));
      if (!inserted) {
        throw MeshError("inconsistent orientation: faces " + std::to_string(it->second) + " and " +
                        std::to_string(f) + " traverse edge (" + std::to_string(t[k]) + ", " +
                        std::to_string(t[(k + 1) % 3]) + ") in the same direction");
      }
    }
  }

  if (!mesh.uv_faces.empty()) {
    if (mesh.uv_faces.size() != mesh.faces.size()) throw MeshError("uv face count mismatch");
    const auto nt = static_cast<int>(mesh.uvs.size());
    for (const Face& t : mesh.uv_faces) {
      for (int idx : t) {
        if (idx < 0 || idx >= nt) throw MeshError("uv index out of range");
      }
    }
  }
}

TriMesh parse_mesh(std::string_view text, const std::string& source) try {
  TriMesh mesh;
  int line_no = 0;
  int textured = -1;  // unknown until the first face
  std::size_t pos = 0;
  std::vector<int> poly;
  std::vector<int> poly_uv;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;

    const auto tokens = tokenize(line);
    if (tokens.empty() || tokens[0].front() == '#') continue;
    const std::string_view tag = tokens[0];

    if (tag == "v") {
      if (tokens.size() < 4) throw ParseError("vertex record needs 3 coordinates", line_no);
      mesh.vertices.emplace_back(parse_double(tokens[1], line_no), parse_double(tokens[2], line_no),
                                 parse_double(tokens[3], line_no));
    } else if (tag == "vt") {
      if (tokens.size() < 3) throw ParseError("texture record needs 2 coordinates", line_no);
      mesh.uvs.emplace_back(parse_double(tokens[1], line_no), parse_double(tokens[2], line_no));
    } else if (tag == "f") {
      if (tokens.size() < 4) throw ParseError("face record needs at least 3 corners", line_no);
      poly.clear();
      poly_uv.clear();
      for (std::size_t k = 1; k < tokens.size(); ++k) {
        const std::string_view corner = tokens[k];
        const std::size_t slash = corner.find('/');
        poly.push_back(resolve_index(corner.substr(0, slash), mesh.vertices.size(), line_no, "vertex"));
        if (slash != std::string_view::npos) {
          std::string_view rest = corner.substr(slash + 1);
          rest = rest.substr(0, rest.find('/'));
          if (!rest.empty()) poly_uv.push_back(resolve_index(rest, mesh.uvs.size(), line_no, "texture"));
        }
      }
      const bool has_uv = !poly_uv.empty();
      if (has_uv && poly_uv.size() != poly.size()) {
        throw ParseError("face mixes corners with and without texture indices", line_no);
      }
      if (textured == -1) textured = has_uv ? 1 : 0;
      if ((textured == 1) != has_uv) {
        throw ParseError("file mixes textured and untextured faces", line_no);
      }
      // fan triangulation
      for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
        mesh.faces.push_back({poly[0], poly[k], poly[k + 1]});
        if (has_uv) mesh.uv_faces.push_back({poly_uv[0], poly_uv[k], poly_uv[k + 1]});
      }
    }
    // vn, o, g, s, usemtl, mtllib: ignored
  }
  if (mesh.uv_faces.empty()) mesh.uvs.clear();
  validate_mesh(mesh);
  return mesh;
} catch (const ParseError& e) {
  if (source.empty()) throw;
  throw ParseError(e.message(), e.line(), source);
}

TriMesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MeshError("cannot open mesh file: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_mesh(buffer.str(), path.string());
}

std::string format_mesh(const TriMesh& mesh) {
  std::ostringstream os;
  os.precision(std::numeric_limits<double>::max_digits10);
  for (const Vec3& v : mesh.vertices) os << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  const bool uv = mesh.has_uvs();
  if (uv) {
    for (const Vec2& t : mesh.uvs) os << "vt " << t.x() << ' ' << t.y() << '\n';
  }
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    os << 'f';
    for (int k = 0; k < 3; ++k) {
      os << ' ' << mesh.faces[f][k] + 1;
      if (uv) os << '/' << mesh.uv_faces[f][k] + 1;
    }
    os << '\n';
  }
  return os.str();
}

void save_mesh(const TriMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw MeshError("cannot write mesh file: " + path.string());
  out << format_mesh(mesh);
  if (!out) throw MeshError("write failed: " + path.string());
}

double face_area(const TriMesh& mesh, std::size_t face) { return 0.5 * face_cross(mesh, face).norm(); }

std::vector<double> face_areas(const TriMesh& mesh) {
  std::vector<double> areas(mesh.faces.size());
  for (std::size_t f = 0; f < areas.size(); ++f) areas[f] = face_area(mesh, f);
  return areas;
}

std::vector<Vec3> face_normals(const TriMesh& mesh) {
  std::vector<Vec3> normals(mesh.faces.size());
  std::vector<int> bad;
  for (std::size_t f = 0; f < normals.size(); ++f) {
    const Vec3 c = face_cross(mesh, f);
    const double len = c.norm();
    if (0.5 * len <= kMinFaceArea) {
      bad.push_back(static_cast<int>(f));
      continue;
    }
    normals[f] = c / len;
  }
  if (!bad.empty()) throw DegenerateFaceError(std::move(bad));
  return normals;
}

std::vector<Vec3> vertex_normals(const TriMesh& mesh) {
  std::vector<Vec3> acc(mesh.vertices.size(), Vec3::Zero());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Vec3 c = face_cross(mesh, f);
    for (int idx : mesh.faces[f]) acc[static_cast<std::size_t>(idx)] += c;
  }
  for (Vec3& n : acc) {
    const double len = n.norm();
    n = len > 0.0 ? Vec3(n / len) : Vec3::Zero();
  }
  return acc;
}

std::vector<Edge> build_edges(const TriMesh& mesh) {
  std::map<std::uint64_t, std::size_t> lookup;
  std::vector<Edge> edges;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& t = mesh.faces[f];
    for (int k = 0; k < 3; ++k) {
      const int a = std::min(t[k], t[(k + 1) % 3]);
      const int b = std::max(t[k], t[(k + 1) % 3]);
      auto [it, inserted] = lookup.emplace(edge_key(a, b), edges.size());
      if (inserted) edges.push_back(Edge{a, b, {}});
      edges[it->second].faces.push_back(static_cast<int>(f));
    }
  }
  std::sort(edges.begin(), edges.end(),
            [](const Edge& x, const Edge& y) { return std::tie(x.v0, x.v1) < std::tie(y.v0, y.v1); });
  return edges;
}

std::vector<std::vector<int>> vertex_neighbors(const TriMesh& mesh) {
  std::vector<std::vector<int>> nbrs(mesh.vertices.size());
  for (const Face& t : mesh.faces) {
    for (int k = 0; k < 3; ++k) {
      nbrs[static_cast<std::size_t>(t[k])].push_back(t[(k + 1) % 3]);
      nbrs[static_cast<std::size_t>(t[k])].push_back(t[(k + 2) % 3]);
    }
  }
  for (auto& list : nbrs) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
  return nbrs;
}

std::vector<bool> boundary_vertices(const TriMesh& mesh) {
  std::vector<bool> on_boundary(mesh.vertices.size(), false);
  for (const Edge& e : build_edges(mesh)) {
    if (e.faces.size() == 1) {
      on_boundary[static_cast<std::size_t>(e.v0)] = true;
      on_boundary[static_cast<std::size_t>(e.v1)] = true;
    }
  }
  return on_boundary;
}

int count_components(const TriMesh& mesh) {
  std::vector<int> parent(mesh.vertices.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  };
  std::vector<bool> used(mesh.vertices.size(), false);
  for (const Face& t : mesh.faces) {
    for (int k = 0; k < 3; ++k) used[static_cast<std::size_t>(t[k])] = true;
    parent[static_cast<std::size_t>(find(t[1]))] = find(t[0]);
    parent[static_cast<std::size_t>(find(t[2]))] = find(t[0]);
  }
  int components = 0;
  for (std::size_t v = 0; v < parent.size(); ++v) {
    if (used[v] && find(static_cast<int>(v)) == static_cast<int>(v)) ++components;
  }
  return components;
}

Vec3 area_weighted_centroid(const TriMesh& mesh) {
  Vec3 sum = Vec3::Zero();
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& t = mesh.faces[f];
    const double a = face_area(mesh, f);
    sum += a * (mesh.vertices[static_cast<std::size_t>(t[0])] + mesh.vertices[static_cast<std::size_t>(t[1])] +
                mesh.vertices[static_cast<std::size_t>(t[2])]) / 3.0;
    total += a;
  }
  return total > 0.0 ? Vec3(sum / total) : Vec3::Zero();
}

SamplePoints sample_surface(const TriMesh& mesh, std::size_t n, std::uint64_t seed) {
  if (mesh.faces.empty()) throw MeshError("cannot sample an empty mesh");
  if (n == 0) throw std::invalid_argument("sample count must be at least 1");

  std::vector<double> cdf(mesh.faces.size());
  double total = 0.0;
  for (std::size_t f = 0; f < cdf.size(); ++f) {
    total += face_area(mesh, f);
    cdf[f] = total;
  }

  Rng rng(seed);
  SamplePoints out;
  out.face_ids.resize(n);
  out.barycentrics.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = uniform01(rng) * total;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), r);
    if (it == cdf.end()) --it;
    out.face_ids[i] = static_cast<int>(it - cdf.begin());
    double u = uniform01(rng);
    double v = uniform01(rng);
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    out.barycentrics[i] = Vec3(1.0 - u - v, u, v);
  }
  update_positions(mesh, out);
  return out;
}

std::vector<Vec3> sample_positions(const TriMesh& mesh, const SamplePoints& samples) {
  std::vector<Vec3> pos(samples.size());
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const Face& t = mesh.faces[static_cast<std::size_t>(samples.face_ids[i])];
    const Vec3& w = samples.barycentrics[i];
    pos[i] = w[0] * mesh.vertices[static_cast<std::size_t>(t[0])] +
             w[1] * mesh.vertices[static_cast<std::size_t>(t[1])] +
             w[2] * mesh.vertices[static_cast<std::size_t>(t[2])];
  }
  return pos;
}

void update_positions(const TriMesh& mesh, SamplePoints& samples) {
  samples.positions = sample_positions(mesh, samples);
}

std::vector<Vec3> scatter_to_vertices(const TriMesh& mesh, const SamplePoints& samples,
                                      std::span<const Vec3> sample_grads) {
  if (sample_grads.size() != samples.size()) throw std::invalid_argument("gradient count mismatch");
  std::vector<Vec3> out(mesh.vertices.size(), Vec3::Zero());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Face& t = mesh.faces[static_cast<std::size_t>(samples.face_ids[i])];
    for (int k = 0; k < 3; ++k) out[static_cast<std::size_t>(t[k])] += samples.barycentrics[i][k] * sample_grads[i];
  }
  return out;
}

Similarity fit_unit_box(const TriMesh& mesh) {
  if (mesh.vertices.empty()) return {};
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const Vec3& v : mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const double half = 0.5 * (hi - lo).maxCoeff();
  Similarity sim;
  sim.offset = -0.5 * (lo + hi);
  sim.scale = half > 0.0 ? 1.0 / half : 1.0;
  return sim;
}

void apply_similarity(TriMesh& mesh, const Similarity& sim) {
  for (Vec3& v : mesh.vertices) v = sim.apply(v);
}

void invert_similarity(TriMesh& mesh, const Similarity& sim) {
  for (Vec3& v : mesh.vertices) v = sim.invert(v);
}

}  // namespace garmentgen
