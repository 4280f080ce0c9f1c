#pragma once

#include <stdexcept>
#include <string>

namespace fsi {

// Invalid user input: bad config fields, inconsistent files, out-of-range
// parameters. Maps to CLI exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A numerical procedure failed (solver breakdown, singular system,
// violated positivity gate). Maps to CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A checked inequality or property did not hold. Maps to CLI exit code 4.
class VerificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fsi
