#pragma once

#include <string>
#include <vector>

namespace mpdf::cli {

// Dispatches one CLI invocation (args excludes the program name).
// Returns the process exit code; failures print one diagnostic line.
int run(const std::vector<std::string>& args);

}  // namespace mpdf::cli
