#pragma once

#include <string>

namespace phasebal {

// Shortest decimal string that parses back to exactly the same double.
// Used for every number in reports, CSV exports, and network documents so
// that identical inputs produce byte-identical outputs.
std::string format_double(double x);

}  // namespace phasebal
