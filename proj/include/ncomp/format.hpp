#pragma once

#include <string>

namespace ncomp {

/// Shortest decimal text that round-trips to the same double; integral values keep a ".0".
std::string format_number(double x);

/// Like format_number but integral values print bare ("1", "-3"), as they appear in source.
std::string format_literal(double x);

}  // namespace ncomp
