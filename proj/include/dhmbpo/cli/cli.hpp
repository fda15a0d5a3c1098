#pragma once

#include <filesystem>
#include <string>

namespace dhmbpo::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kIo = 3 };

// Output root: $DHMBPO_OUTPUT_ROOT when set, else ./runs.
std::filesystem::path output_root();

// Entry point of the dhmbpo command; returns the process exit code.
int run(int argc, const char* const* argv);

}  // namespace dhmbpo::cli
