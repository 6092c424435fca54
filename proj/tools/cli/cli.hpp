#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace imargin::cli {

// Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure,
// 1 anything else.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace imargin::cli
