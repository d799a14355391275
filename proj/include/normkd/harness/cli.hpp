#pragma once

#include <ostream>

namespace normkd::harness {

/// Entry point for the normkd command line. Returns the process exit code:
/// 0 success, 1 usage or failed check, 2 config, 3 io, 4 contract/numeric.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace normkd::harness
