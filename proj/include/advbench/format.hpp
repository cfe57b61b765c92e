#pragma once

#include <string>

namespace advbench {

// Shortest decimal that parses back to the same double ("inf"/"nan" for
// non-finite values).
std::string format_double(double value);

}  // namespace advbench
