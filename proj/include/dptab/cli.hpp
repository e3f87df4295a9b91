#pragma once

#include <string>
#include <vector>

namespace dptab::cli {

// Entry point shared by the binary and the tests. Returns the process exit
// code; errors are printed to stderr as one JSON object with a machine
// readable category.
int run(const std::vector<std::string>& args);

int exit_code_for(const std::string& category);

}  // namespace dptab::cli
