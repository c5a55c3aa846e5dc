#pragma once

#include <string>
#include <vector>

namespace rom::cli {

// Exit codes, one per error class.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitConfig = 2;  // also usage errors
inline constexpr int kExitArgument = 3;
inline constexpr int kExitLoad = 4;  // missing/corrupt files, refusing to overwrite
inline constexpr int kExitNumeric = 5;

/// Runs one command. args excludes the program name.
int run(const std::vector<std::string>& args);

}  // namespace rom::cli
