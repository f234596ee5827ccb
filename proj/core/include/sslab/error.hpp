#pragma once

#include <stdexcept>
#include <string>

namespace sslab {

// Caller supplied data that violates an operation's precondition.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An experiment configuration failed validation. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An upstream artifact (run, checkpoint, feature file) is missing. Exit code 3.
class MissingDependency : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training or I/O failed while running. Exit code 4.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sslab
