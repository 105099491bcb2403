#pragma once

namespace garmentgen {

/// Worker threads for the parallel loops; `n <= 0` restores the default.
/// No-op when built without OpenMP.
void set_num_threads(int n);
int max_threads();

}  // namespace garmentgen
