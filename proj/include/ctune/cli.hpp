#pragma once

#include <iosfwd>

namespace ctune {

// Command-line entry point. Exit codes: 0 success, 1 usage or contract
// error, 2 I/O error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ctune
