#ifndef SHELAB_ERRORS_HPP
#define SHELAB_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace shelab {

/// Invalid configuration or construction arguments. Maps to CLI exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The periodic/truncated domain is too small for the requested operation.
class TruncationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values or failed numerical procedures. Maps to CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace detail
}  // namespace shelab

#endif  // SHELAB_ERRORS_HPP
