#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace profcct {

struct CliOptions {
  bool color = false;  // ANSI styling for --pretty output
};

// Runs one `profcct` invocation. `args` excludes the program name.
// Returns 0 on success, 1 on usage errors and 2 on data errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const CliOptions& options = {});

}  // namespace profcct
