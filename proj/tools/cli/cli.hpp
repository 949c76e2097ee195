#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace difflens::cli {

enum ExitCode : int { ok = 0, runtime_failure = 1, validation_failure = 2, usage_error = 3 };

// Runs the command line. Data goes to `out`, logs and errors to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace difflens::cli
