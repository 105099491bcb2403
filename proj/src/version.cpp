#include "garmentgen/version.hpp"

namespace garmentgen {

const char* version() { return GARMENTGEN_VERSION_STRING; }

}  // namespace garmentgen
