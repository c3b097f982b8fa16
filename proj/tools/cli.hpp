#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace spo::cli {

/// Entry point shared by the `spo` binary and the tests. Returns the process
/// exit status: 0 on success, 1 on runtime failure, 2 on usage or config errors.
int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spo::cli
