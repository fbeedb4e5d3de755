#pragma once

#include <string>
#include <vector>

namespace redstore {

// Entry point behind the `redstore` binary. `args` excludes the program
// name. Returns the process exit code; failures print one diagnostic line.
int run_cli(std::vector<std::string> args);

}  // namespace redstore
