#pragma once

#include <iosfwd>

namespace bpdo::cli {

/// Runs the `bpdo` command line. Returns 0 on success, 1 on runtime or data
/// errors and 2 on usage errors. Diagnostics go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bpdo::cli
