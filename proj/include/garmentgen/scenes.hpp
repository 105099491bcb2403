#pragma once

#include <vector>

#include "garmentgen/losses.hpp"
#include "garmentgen/mesh.hpp"

namespace garmentgen {

/// Capsule arm along x with a tube sleeve that starts inside it and runs
/// past a wrist cylinder. Already fits [-1, 1]^3.
struct SleeveScene {
  TriMesh body;
  TriMesh sleeve;
  std::vector<BlockingCylinder> cylinders;
};

SleeveScene make_sleeve_scene();

}  // namespace garmentgen
