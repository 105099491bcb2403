#include "garmentgen/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <Eigen/Geometry>

namespace garmentgen {

namespace {

std::string describe_edges(const std::vector<std::pair<int, int>>& edges) {
  std::ostringstream os;
  os << "body mesh is not closed: " << edges.size() << " boundary edge(s)";
  const std::size_t shown = std::min<std::size_t>(edges.size(), 12);
  for (std::size_t i = 0; i < shown; ++i) os << (i ? ", " : ": ") << '(' << edges[i].first << ',' << edges[i].second << ')';
  if (edges.size() > shown) os << ", ...";
  return os.str();
}

const Vec3& vertex(const TriMesh& m, int idx) { return m.vertices[static_cast<std::size_t>(idx)]; }

}  // namespace

OpenSurfaceError::OpenSurfaceError(std::vector<std::pair<int, int>> edges)
    : MeshError(describe_edges(edges)), edges_(std::move(edges)) {}

TriangleClosest closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return {a, Vec3(1, 0, 0), Feature::Vertex, 0};

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return {b, Vec3(0, 1, 0), Feature::Vertex, 1};

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return {a + v * ab, Vec3(1 - v, v, 0), Feature::Edge, 0};
  }

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return {c, Vec3(0, 0, 1), Feature::Vertex, 2};

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return {a + w * ac, Vec3(1 - w, 0, w), Feature::Edge, 2};
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {b + w * (c - b), Vec3(0, 1 - w, w), Feature::Edge, 1};
  }

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom;
  const double w = vc * denom;
  return {a + ab * v + ac * w, Vec3(1 - v - w, v, w), Feature::Face, 0};
}

double Aabb::surface_area() const {
  const Vec3 e = (hi - lo).cwiseMax(0.0);
  return 2.0 * (e.x() * e.y() + e.y() * e.z() + e.z() * e.x());
}

double Aabb::squared_distance(const Vec3& p) const {
  const Vec3 d = (lo - p).cwiseMax(0.0).cwiseMax(p - hi);
  return d.squaredNorm();
}

TriangleBvh::TriangleBvh(const TriMesh& mesh) {
  const std::size_t n = mesh.faces.size();
  if (n == 0) return;
  std::vector<Aabb> boxes(n);
  std::vector<Vec3> centers(n);
  for (std::size_t f = 0; f < n; ++f) {
    for (int idx : mesh.faces[f]) boxes[f].grow(vertex(mesh, idx));
    centers[f] = 0.5 * (boxes[f].lo + boxes[f].hi);
  }
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(2 * n / kMaxLeafSize + 1);
  build(order_, boxes, centers, 0, static_cast<int>(n));
}

int TriangleBvh::build(std::vector<int>& idx, const std::vector<Aabb>& boxes,
                       const std::vector<Vec3>& centers, int begin, int end) {
  const int node_id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  Aabb box;
  Aabb cbox;
  for (int i = begin; i < end; ++i) {
    box.grow(boxes[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]);
    cbox.grow(centers[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]);
  }
  nodes_[static_cast<std::size_t>(node_id)].box = box;
  const int count = end - begin;
  if (count <= kMaxLeafSize) {
    nodes_[static_cast<std::size_t>(node_id)].first = begin;
    nodes_[static_cast<std::size_t>(node_id)].count = count;
    return node_id;
  }

  constexpr int kBins = 16;
  int best_axis = -1;
  int best_split = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  const Vec3 extent = cbox.hi - cbox.lo;
  for (int axis = 0; axis < 3; ++axis) {
    if (extent[axis] <= 0.0) continue;
    std::array<Aabb, kBins> bin_box;
    std::array<int, kBins> bin_count{};
    const double scale = kBins / extent[axis];
    for (int i = begin; i < end; ++i) {
      const auto f = static_cast<std::size_t>(idx[static_cast<std::size_t>(i)]);
      const int b = std::min(kBins - 1, static_cast<int>((centers[f][axis] - cbox.lo[axis]) * scale));
      bin_box[static_cast<std::size_t>(b)].grow(boxes[f]);
      ++bin_count[static_cast<std::size_t>(b)];
    }
    std::array<double, kBins> left_cost{};
    Aabb acc;
    int acc_n = 0;
    for (int b = 0; b < kBins - 1; ++b) {
      acc.grow(bin_box[static_cast<std::size_t>(b)]);
      acc_n += bin_count[static_cast<std::size_t>(b)];
      left_cost[static_cast<std::size_t>(b)] = acc_n ? acc.surface_area() * acc_n : 0.0;
    }
    acc = Aabb();
    acc_n = 0;
    for (int b = kBins - 1; b > 0; --b) {
      acc.grow(bin_box[static_cast<std::size_t>(b)]);
      acc_n += bin_count[static_cast<std::size_t>(b)];
      const double cost = left_cost[static_cast<std::size_t>(b - 1)] + (acc_n ? acc.surface_area() * acc_n : 0.0);
      if (acc_n > 0 && acc_n < count && cost < best_cost) {
        best_cost = cost;
        best_axis = axis;
        best_split = b;
      }
    }
  }

  int mid = begin;
  if (best_axis >= 0) {
    const double scale = kBins / extent[best_axis];
    auto* first = idx.data() + begin;
    auto* last = idx.data() + end;
    mid = static_cast<int>(std::partition(first, last, [&](int f) {
            const int b = std::min(kBins - 1, static_cast<int>((centers[static_cast<std::size_t>(f)][best_axis] - cbox.lo[best_axis]) * scale));
            return b < best_split;
          }) - idx.data());
  }
  if (mid <= begin || mid >= end) {
    // all centroids coincide in the binned sense: median split on the widest axis
    int axis = 0;
    const Vec3 e = box.hi - box.lo;
    if (e.y() > e[axis]) axis = 1;
    if (e.z() > e[axis]) axis = 2;
    mid = begin + count / 2;
    std::nth_element(idx.begin() + begin, idx.begin() + mid, idx.begin() + end, [&](int x, int y) {
      const double cx = centers[static_cast<std::size_t>(x)][axis];
      const double cy = centers[static_cast<std::size_t>(y)][axis];
      return cx < cy || (cx == cy && x < y);
    });
  }
  const int left = build(idx, boxes, centers, begin, mid);
  const int right = build(idx, boxes, centers, mid, end);
  nodes_[static_cast<std::size_t>(node_id)].left = left;
  nodes_[static_cast<std::size_t>(node_id)].right = right;
  return node_id;
}

bool intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b, const Vec3& c,
                        double t_min, RayHit& hit) {
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 pv = dir.cross(e2);
  const double det = e1.dot(pv);
  if (det == 0.0) return false;
  const double inv = 1.0 / det;
  const Vec3 tv = origin - a;
  const double u = tv.dot(pv) * inv;
  if (u < 0.0 || u > 1.0) return false;
  const Vec3 qv = tv.cross(e1);
  const double v = dir.dot(qv) * inv;
  if (v < 0.0 || u + v > 1.0) return false;
  const double t = e2.dot(qv) * inv;
  if (!(t > t_min)) return false;
  hit.t = t;
  hit.u = u;
  hit.v = v;
  return true;
}

namespace {

// Slab test; returns the entry parameter or +inf on a miss.
double ray_box(const Aabb& box, const Vec3& origin, const Vec3& inv_dir, double t_min, double t_max) {
  double lo = t_min;
  double hi = t_max;
  for (int k = 0; k < 3; ++k) {
    double t0 = (box.lo[k] - origin[k]) * inv_dir[k];
    double t1 = (box.hi[k] - origin[k]) * inv_dir[k];
    if (std::isnan(t0) || std::isnan(t1)) {
      // zero direction component with origin on a slab plane
      if (origin[k] < box.lo[k] || origin[k] > box.hi[k]) return std::numeric_limits<double>::infinity();
      continue;
    }
    if (t0 > t1) std::swap(t0, t1);
    lo = std::max(lo, t0);
    hi = std::min(hi, t1);
    if (lo > hi) return std::numeric_limits<double>::infinity();
  }
  return lo;
}

}  // namespace

template <bool kAny>
RayHit TriangleBvh::trace(const TriMesh& mesh, const Vec3& origin, const Vec3& dir, double t_min,
                          double t_max) const {
  RayHit best;
  best.t = t_max;
  bool found = false;
  if (nodes_.empty()) return RayHit{};
  const Vec3 inv_dir = dir.cwiseInverse();
  std::vector<int> stack;
  stack.reserve(64);
  stack.push_back(0);
  while (!stack.empty()) {
    const Node& node = nodes_[static_cast<std::size_t>(stack.back())];
    stack.pop_back();
    // inclusive bound so equal-t hits on other faces are still visited for the tie rule
    if (ray_box(node.box, origin, inv_dir, t_min, best.t) == std::numeric_limits<double>::infinity()) continue;
    if (node.left < 0) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        const int f = order_[static_cast<std::size_t>(i)];
        const Face& t = mesh.faces[static_cast<std::size_t>(f)];
        RayHit h;
        if (!intersect_triangle(origin, dir, vertex(mesh, t[0]), vertex(mesh, t[1]), vertex(mesh, t[2]), t_min, h)) {
          continue;
        }
        if (h.t >= t_max) continue;
        if (kAny) {
          h.face = f;
          return h;
        }
        if (!found || h.t < best.t || (h.t == best.t && f < best.face)) {
          best = h;
          best.face = f;
          found = true;
        }
      }
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  return found ? best : RayHit{};
}

RayHit TriangleBvh::first_hit(const TriMesh& mesh, const Vec3& origin, const Vec3& dir, double t_min,
                              double t_max) const {
  return trace<false>(mesh, origin, dir, t_min, t_max);
}

bool TriangleBvh::any_hit(const TriMesh& mesh, const Vec3& origin, const Vec3& dir, double t_min,
                          double t_max) const {
  return trace<true>(mesh, origin, dir, t_min, t_max).face >= 0;
}

int TriangleBvh::depth() const {
  if (nodes_.empty()) return 0;
  int best = 0;
  std::vector<std::pair<int, int>> stack{{0, 1}};
  while (!stack.empty()) {
    const auto [n, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    const Node& node = nodes_[static_cast<std::size_t>(n)];
    if (node.left >= 0) {
      stack.emplace_back(node.left, d + 1);
      stack.emplace_back(node.right, d + 1);
    }
  }
  return best;
}

ClosestHit TriangleBvh::closest(const TriMesh& mesh, const Vec3& p) const {
  ClosestHit best;
  if (nodes_.empty()) return best;
  std::vector<int> stack;
  stack.reserve(64);
  stack.push_back(0);
  while (!stack.empty()) {
    const Node& node = nodes_[static_cast<std::size_t>(stack.back())];
    stack.pop_back();
    if (node.box.squared_distance(p) > best.sq_distance) continue;
    if (node.left < 0) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        const int f = order_[static_cast<std::size_t>(i)];
        const Face& t = mesh.faces[static_cast<std::size_t>(f)];
        const TriangleClosest c = closest_point_on_triangle(p, vertex(mesh, t[0]), vertex(mesh, t[1]), vertex(mesh, t[2]));
        const double d = (p - c.point).squaredNorm();
        if (d < best.sq_distance || (d == best.sq_distance && f < best.face)) {
          best.sq_distance = d;
          best.face = f;
          best.closest = c;
        }
      }
      continue;
    }
    const double dl = nodes_[static_cast<std::size_t>(node.left)].box.squared_distance(p);
    const double dr = nodes_[static_cast<std::size_t>(node.right)].box.squared_distance(p);
    // push the farther child first so the nearer one is visited next
    if (dl <= dr) {
      stack.push_back(node.right);
      stack.push_back(node.left);
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  return best;
}

BodySdf::BodySdf(TriMesh body) : mesh_(std::move(body)) {
  validate_mesh(mesh_);
  if (mesh_.faces.empty()) throw MeshError("body mesh has no faces");
  const std::vector<Edge> edges = build_edges(mesh_);
  std::vector<std::pair<int, int>> open;
  for (const Edge& e : edges) {
    if (e.faces.size() != 2) open.emplace_back(e.v0, e.v1);
  }
  if (!open.empty()) throw OpenSurfaceError(std::move(open));

  face_normals_ = face_normals(mesh_);
  vertex_pseudonormals_.assign(mesh_.vertices.size(), Vec3::Zero());
  for (std::size_t f = 0; f < mesh_.faces.size(); ++f) {
    const Face& t = mesh_.faces[f];
    for (int k = 0; k < 3; ++k) {
      const Vec3 e1 = (vertex(mesh_, t[(k + 1) % 3]) - vertex(mesh_, t[k])).normalized();
      const Vec3 e2 = (vertex(mesh_, t[(k + 2) % 3]) - vertex(mesh_, t[k])).normalized();
      const double angle = std::acos(std::clamp(e1.dot(e2), -1.0, 1.0));
      vertex_pseudonormals_[static_cast<std::size_t>(t[k])] += angle * face_normals_[f];
    }
  }

  std::map<std::pair<int, int>, Vec3> edge_sum;
  for (const Edge& e : edges) {
    edge_sum[{e.v0, e.v1}] = face_normals_[static_cast<std::size_t>(e.faces[0])] +
                             face_normals_[static_cast<std::size_t>(e.faces[1])];
  }
  edge_pseudonormals_.resize(mesh_.faces.size());
  for (std::size_t f = 0; f < mesh_.faces.size(); ++f) {
    const Face& t = mesh_.faces[f];
    for (int k = 0; k < 3; ++k) {
      edge_pseudonormals_[f][static_cast<std::size_t>(k)] = edge_sum.at(std::minmax(t[k], t[(k + 1) % 3]));
    }
  }
  bvh_ = TriangleBvh(mesh_);
}

SdfQuery BodySdf::query(const Vec3& p) const {
  const ClosestHit hit = bvh_.closest(mesh_, p);
  const auto f = static_cast<std::size_t>(hit.face);
  Vec3 pseudo;
  switch (hit.closest.feature) {
    case Feature::Face: pseudo = face_normals_[f]; break;
    case Feature::Edge: pseudo = edge_pseudonormals_[f][static_cast<std::size_t>(hit.closest.local)]; break;
    case Feature::Vertex:
      pseudo = vertex_pseudonormals_[static_cast<std::size_t>(mesh_.faces[f][static_cast<std::size_t>(hit.closest.local)])];
      break;
  }
  const Vec3 diff = p - hit.closest.point;
  const double unsigned_d = std::sqrt(hit.sq_distance);
  const double sign = diff.dot(pseudo) < 0.0 ? -1.0 : 1.0;

  SdfQuery q;
  q.distance = sign * unsigned_d;
  q.closest = hit.closest.point;
  q.face = hit.face;
  q.gradient = unsigned_d < 1e-9 ? face_normals_[f] : Vec3(sign * diff / unsigned_d);
  return q;
}

double winding_number(const TriMesh& mesh, const Vec3& p) {
  double total = 0.0;
  for (const Face& t : mesh.faces) {
    const Vec3 a = vertex(mesh, t[0]) - p;
    const Vec3 b = vertex(mesh, t[1]) - p;
    const Vec3 c = vertex(mesh, t[2]) - p;
    const double la = a.norm(), lb = b.norm(), lc = c.norm();
    const double num = a.dot(b.cross(c));
    // p in the triangle's plane: either outside it (zero solid angle) or on
    // it, where the two one-sided limits +-2pi average to zero
    if (num == 0.0) continue;
    const double den = la * lb * lc + a.dot(b) * lc + a.dot(c) * lb + b.dot(c) * la;
    total += 2.0 * std::atan2(num, den);
  }
  return total / (4.0 * std::numbers::pi);
}

PointIndex::PointIndex(std::vector<Vec3> points) : points_(std::move(points)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, static_cast<int>(points_.size()));
  }
}

int PointIndex::build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  if (end - begin <= kLeafSize) {
    nodes_[static_cast<std::size_t>(id)].first = begin;
    nodes_[static_cast<std::size_t>(id)].count = end - begin;
    return id;
  }
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (int i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[static_cast<std::size_t>(order_[static_cast<std::size_t>(i)])]);
    hi = hi.cwiseMax(points_[static_cast<std::size_t>(order_[static_cast<std::size_t>(i)])]);
  }
  int axis = 0;
  const Vec3 e = hi - lo;
  if (e.y() > e[axis]) axis = 1;
  if (e.z() > e[axis]) axis = 2;
  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int a, int b) {
    const double pa = points_[static_cast<std::size_t>(a)][axis];
    const double pb = points_[static_cast<std::size_t>(b)][axis];
    return pa < pb || (pa == pb && a < b);
  });
  const double split = points_[static_cast<std::size_t>(order_[static_cast<std::size_t>(mid)])][axis];
  const int left = build(begin, mid);
  const int right = build(mid, end);
  Node& node = nodes_[static_cast<std::size_t>(id)];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

void PointIndex::search(int node_id, const Vec3& q, int& best_id, double& best_d) const {
  const Node& node = nodes_[static_cast<std::size_t>(node_id)];
  if (node.axis < 0) {
    for (int i = node.first; i < node.first + node.count; ++i) {
      const int id = order_[static_cast<std::size_t>(i)];
      const double d = (q - points_[static_cast<std::size_t>(id)]).squaredNorm();
      if (d < best_d || (d == best_d && id < best_id)) {
        best_d = d;
        best_id = id;
      }
    }
    return;
  }
  // left subtree holds coordinates <= split, right holds >= split
  const double delta = q[node.axis] - node.split;
  const int near = delta < 0.0 ? node.left : node.right;
  const int far = delta < 0.0 ? node.right : node.left;
  search(near, q, best_id, best_d);
  if (delta * delta <= best_d) search(far, q, best_id, best_d);
}

std::pair<int, double> PointIndex::nearest(const Vec3& q) const {
  if (points_.empty()) throw std::logic_error("nearest-neighbor query on an empty index");
  int best_id = -1;
  double best_d = std::numeric_limits<double>::infinity();
  search(0, q, best_id, best_d);
  return {best_id, best_d};
}

double chamfer_distance(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("Chamfer distance of an empty point set");
  const PointIndex a_index(std::vector<Vec3>(a.begin(), a.end()));
  const PointIndex b_index(std::vector<Vec3>(b.begin(), b.end()));
  double fwd = 0.0;
  for (const Vec3& p : a) fwd += b_index.nearest(p).second;
  double bwd = 0.0;
  for (const Vec3& q : b) bwd += a_index.nearest(q).second;
  return fwd * (1.0 / static_cast<double>(a.size())) + bwd * (1.0 / static_cast<double>(b.size()));
}

}  // namespace garmentgen
