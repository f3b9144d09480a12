#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cfaudit::cli {

// Runs one subcommand. args[0] is the program name. Returns the process exit
// code: 0 success, 1 usage error, 2 data error, 3 numerical failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace cfaudit::cli
