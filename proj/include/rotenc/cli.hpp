#pragma once

#include <iosfwd>

namespace rotenc {

/// Entry point of the rotenc command-line tool. Returns the process exit
/// code: 0 success, 1 internal error, 2 usage or input error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rotenc
