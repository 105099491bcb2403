#pragma once

#include "garmentgen/mesh.hpp"

// Procedural meshes used for test scenes, demos and the bundled examples.
// Closed shapes are oriented with outward normals.
namespace garmentgen {

TriMesh make_icosphere(int subdivisions, double radius = 1.0, const Vec3& center = Vec3::Zero());

/// Axis-aligned box with 8 vertices and 12 faces.
TriMesh make_box(const Vec3& half_extents, const Vec3& center = Vec3::Zero());

/// Capsule with its axis along x: a cylinder of `half_length` on each side of
/// `center` capped with hemispheres.
TriMesh make_capsule(double radius, double half_length, int segments, int rings,
                     const Vec3& center = Vec3::Zero());

/// Open cylinder along x from `x_begin` to `x_end`, outward normals,
/// one rectangular UV chart covering the unit square.
TriMesh make_tube(double radius, double x_begin, double x_end, int segments, int rings,
                  const Vec3& axis_offset = Vec3::Zero());

/// Flat grid in the plane z = `z`, normal +z, centered at (cx, cy), with UVs
/// spanning the unit square.
TriMesh make_grid(int nx, int ny, double width, double height, double z = 0.0, double cx = 0.0,
                  double cy = 0.0);

/// Center vertex 0 surrounded by a regular hexagon of 6 vertices (6 faces).
TriMesh make_hex_patch(double radius);

/// Signed volume via the divergence theorem; positive for outward orientation.
double signed_volume(const TriMesh& mesh);

void flip_orientation(TriMesh& mesh);

/// Concatenates meshes, offsetting indices; UVs kept only if all inputs have them.
TriMesh merge_meshes(const std::vector<TriMesh>& parts);

}  // namespace garmentgen
