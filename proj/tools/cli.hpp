#pragma once

// Command-line frontend: fit, predict, optimize, validate-spec.

#include <iosfwd>
#include <string>
#include <vector>

namespace sempipes::cli {

enum ExitCode : int { kOk = 0, kInternal = 1, kConfig = 2, kAuth = 3, kDrift = 4 };

/// Runs one command. Errors are reported as a JSON object on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace sempipes::cli
