#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace s2p {

// Error taxonomy, mirrored by CLI exit codes:
//   ArgumentError -> 2 (usage), DataError/IoError -> 3 (data), NumericError -> 4.
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {
inline void cat_into(std::ostringstream&) {}
template <typename A, typename... Rest>
void cat_into(std::ostringstream& os, const A& a, const Rest&... rest) {
  os << a;
  cat_into(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string cat(const Args&... args) {
  std::ostringstream os;
  detail::cat_into(os, args...);
  return os.str();
}

template <typename... Args>
void check_arg(bool ok, const Args&... msg) {
  if (!ok) throw ArgumentError(cat(msg...));
}

template <typename... Args>
void check_data(bool ok, const Args&... msg) {
  if (!ok) throw DataError(cat(msg...));
}

}  // namespace s2p
