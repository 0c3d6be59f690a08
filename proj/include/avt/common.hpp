#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace avt {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Incompatible tensor/array shapes; message names the op and both shapes.
struct ShapeError : Error {
  using Error::Error;
};
// A value violates an operation's contract (negative weight, mask out of
// range, bad axis, ...).
struct ValueError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

namespace detail {
inline void format_into(std::ostringstream&) {}
template <typename T, typename... Rest>
void format_into(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  format_into(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string strcat_msg(const Args&... args) {
  std::ostringstream os;
  detail::format_into(os, args...);
  return os.str();
}

}  // namespace avt
