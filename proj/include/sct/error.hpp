#pragma once

#include <stdexcept>
#include <string>

namespace sct {

/// Bad command line or configuration. Maps to CLI exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed, missing or inconsistent input data. Exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values or divergence during a numeric computation. Exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A record that already exists (e.g. a second annotation for one reader/item).
class ConflictError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

[[noreturn]] void throw_data(const std::string& what);
[[noreturn]] void throw_numeric(const std::string& what);

}  // namespace sct
