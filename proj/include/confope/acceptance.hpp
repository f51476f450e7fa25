#pragma once
// Self-contained verification battery over the analytic fixtures and the
// estimator/improvement stack. Prints one PASS/FAIL line per criterion and
// returns the number of failures. Shared by the standalone test binary and
// the command-line front end.

#include <ostream>

namespace confope {

int run_acceptance_battery(std::ostream& out);

}  // namespace confope
