#pragma once
// Command-line front end. Exit codes: 0 success, 2 configuration or usage
// error, 3 infeasible envelope, 4 coverage failure, 5 acceptance failure.

#include <string>
#include <vector>

namespace confope {

// args excludes the program name.
int cli_main(const std::vector<std::string>& args);

}  // namespace confope
