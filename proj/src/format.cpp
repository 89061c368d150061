#include "ncomp/format.hpp"

#include <charconv>
#include <cmath>

namespace ncomp {

std::string format_literal(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::string format_number(double x) {
  std::string s = format_literal(x);
  if (std::isfinite(x) && s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

}  // namespace ncomp
