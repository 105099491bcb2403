// Regenerates the bundled scene files: make_scenes <output dir>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "garmentgen/scenes.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_scenes <output dir>\n";
    return 1;
  }
  namespace fs = std::filesystem;
  const fs::path dir(argv[1]);
  fs::create_directories(dir);
  const auto scene = garmentgen::make_sleeve_scene();
  garmentgen::save_mesh(scene.body, dir / "capsule_arm.obj");
  garmentgen::save_mesh(scene.sleeve, dir / "sleeve.obj");
  std::ofstream(dir / "cylinders.json") << garmentgen::format_cylinders(scene.cylinders) << "\n";
  std::ofstream(dir / "deform_sleeve.json") << R"({
  "command": "deform",
  "template": "sleeve.obj",
  "body": "capsule_arm.obj",
  "cylinders": "cylinders.json",
  "iterations": 600,
  "num_samples": 5000,
  "seed": 0,
  "enable_symmetry": false,
  "checkpoint_every": 100
}
)";
  std::ofstream(dir / "texsync_sleeve.json") << R"({
  "command": "texsync",
  "mesh": "sleeve.obj",
  "texture_size": 128,
  "views": {"resolution": 512},
  "denoiser": {"kind": "constant_target"}
}
)";
  return 0;
}
