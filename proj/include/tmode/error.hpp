#pragma once

#include <stdexcept>
#include <string>

namespace tmode {

/// Two fields or kernels were combined on different frequency grids.
class grid_mismatch : public std::invalid_argument {
 public:
  explicit grid_mismatch(const std::string& what) : std::invalid_argument(what) {}
};

/// A computation produced or was fed non-finite / unphysical numbers.
class numerical_error : public std::runtime_error {
 public:
  explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

/// Bad or unknown configuration keys. Maps to CLI exit code 2.
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tmode
