#pragma once

#include <string>
#include <vector>

namespace jsae {

// Entry point behind the jsae binary. args excludes the program name.
// Returns 0 on success, 1 on usage/config/file errors, 2 on numeric
// failures (failed gradient check, degenerate inputs).
int run_cli(const std::vector<std::string>& args);

}  // namespace jsae
