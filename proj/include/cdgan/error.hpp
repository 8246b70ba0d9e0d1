#pragma once

#include <stdexcept>
#include <string>

namespace cdgan {

// Error taxonomy. Every failure surfaced by the library derives from Error so
// callers (the CLI in particular) can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid architecture or training configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Tensor shapes or arguments that violate an operation's preconditions.
class InputError : public Error {
 public:
  using Error::Error;
};

// Dataset problems: missing directories, undecodable files, empty domains.
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite losses or gradients during optimization.
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated checkpoint containers.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace cdgan
