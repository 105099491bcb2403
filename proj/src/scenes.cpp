#include "garmentgen/scenes.hpp"

#include "garmentgen/primitives.hpp"

namespace garmentgen {

SleeveScene make_sleeve_scene() {
  SleeveScene s;
  s.body = make_capsule(0.52, 1.2, 48, 12);
  s.sleeve = make_tube(0.5, -1.0, 1.0, 32, 24);
  s.cylinders.push_back(BlockingCylinder::make(Vec3(0.9, 0, 0), Vec3::UnitX(), 0.7, "wrist"));
  return s;
}

}  // namespace garmentgen
