#pragma once

#include <iosfwd>

// Prints PASS/FAIL per check and returns the number of failures.
int run_checks(std::ostream& os);
