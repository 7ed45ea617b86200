#pragma once

#include <string>
#include <vector>

namespace sbart {

/// Entry point of the command-line tool, callable in-process. args excludes
/// the program name. Exit codes: 0 success, 2 validation, 3 numerical
/// failure, 4 I/O.
int run_cli(const std::vector<std::string>& args);

}  // namespace sbart
