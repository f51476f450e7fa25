#include <string>
#include <vector>

#include "confope/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return confope::cli_main(args);
}
