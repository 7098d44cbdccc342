#pragma once

#include <ostream>

namespace paq::cli {

// Entry point behind the `paq` binary. Returns the process exit code:
// 0 success, 1 domain error, 2 I/O or usage error.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace paq::cli
