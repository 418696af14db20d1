#pragma once

#include <stdexcept>
#include <string>

namespace riskgate {

// Raised for anything attributable to user-supplied data or arguments:
// malformed files, invariant violations, unmet preconditions.
// Every other exception escaping the library is an internal failure.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace riskgate
