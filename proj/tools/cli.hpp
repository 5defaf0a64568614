#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace evomerge {

// Exit codes: 0 success, 1 usage error, 2 runtime failure.
int cli_main(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace evomerge
