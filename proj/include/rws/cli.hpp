#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rws {

// Exit codes: 0 success, 1 validation/usage error, 2 I/O or format error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rws
