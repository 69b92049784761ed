#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ebal::cli {

enum ExitCode { Success = 0, UsageError = 1, Infeasible = 2 };

/// Runs the command line `args` (without the program name). JSON goes to
/// `out` unless an output path is given; messages go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ebal::cli
