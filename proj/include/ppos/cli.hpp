#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ppos::cli {

// Runs the command line with `args` (program name excluded). Returns the
// process exit code: 0 success, 2 usage/schema, 3 domain, 4 numerical.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ppos::cli
