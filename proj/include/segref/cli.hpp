#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace segref::cli {

/// Runs one subcommand. args excludes the program name. Returns the process
/// exit code: 0 on success, 1 for pipeline errors, 2 for usage errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace segref::cli
