// Runs the acceptance battery as a standalone binary: prints one line per
// criterion and exits nonzero when any criterion fails.

#include <iostream>

#include "confope/acceptance.hpp"

int main() {
  int failures = confope::run_acceptance_battery(std::cout);
  if (failures > 0) {
    std::cout << failures << " criterion(s) failed\n";
    return 5;
  }
  std::cout << "all 14 criteria passed\n";
  return 0;
}
