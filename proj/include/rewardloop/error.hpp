#pragma once

#include <stdexcept>
#include <string>

namespace rewardloop {

// Base for every failure the library reports. Subclasses map onto the CLI's
// exit codes (see tools/rewardloop.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user input or configuration: bad flags, malformed files, violated
// preconditions on caller-supplied values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A weight proposer could not produce a usable weight vector.
class ProposerError : public Error {
 public:
  using Error::Error;
};

// Training produced non-finite values or was aborted.
class TrainingError : public Error {
 public:
  using Error::Error;
};

// A persisted run directory is missing, corrupt, or violates its invariants.
class ManifestError : public Error {
 public:
  using Error::Error;
};

// Replaying a persisted evaluation did not reproduce the stored statistics.
class ReproducibilityError : public Error {
 public:
  using Error::Error;
};

// Cooperative cancellation (SIGINT/SIGTERM) observed at a safe point.
class Interrupted : public Error {
 public:
  using Error::Error;
};

}  // namespace rewardloop
