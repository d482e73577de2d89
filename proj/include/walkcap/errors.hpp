#pragma once

#include <stdexcept>
#include <string>

namespace walkcap {

// maps to CLI exit code 2
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// maps to CLI exit code 3
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace walkcap
