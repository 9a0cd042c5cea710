#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace scopeqa::cli {

// Runs the scopeqa command line. JSON results go to `out`, progress and
// errors to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace scopeqa::cli
