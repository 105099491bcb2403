#pragma once

#include <iosfwd>

namespace garmentgen::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2 };

/// Parses `argv` and runs one subcommand (deform, texsync, render, validate).
/// Regular output goes to `out`, diagnostics and log lines to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace garmentgen::cli
