#pragma once

#include <stdexcept>
#include <string>

namespace degkit {

/// Raised for precondition violations and unusable inputs.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Raised for malformed user input (CLI maps this to a usage-style failure).
class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(what) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

}  // namespace degkit
