#pragma once

namespace garmentgen {

/// Library version, "major.minor.patch".
const char* version();

}  // namespace garmentgen
