#pragma once

#include <stdexcept>
#include <string>

namespace omni {

// All library errors derive from std::runtime_error; subclasses exist so the
// CLI can map failure families onto distinct exit codes and so tests can
// assert on the kind of failure, not just the message.

// Mismatched shapes, bad axis, out-of-range index: a caller bug.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid argument outside the tensor-shape family (bad enum, bad size).
struct ArgError : std::runtime_error {
  explicit ArgError(const std::string& msg) : std::runtime_error(msg) {}
};

// Config file problems: unparsable, unknown key, out-of-range value.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Missing prerequisite: checkpoint or manifest not found, wrong stage order.
struct PreconditionError : std::runtime_error {
  explicit PreconditionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite value produced by an op, or a frozen parameter changed.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Structured file (manifest/checkpoint) failed to load; `kind` says why so
// callers can distinguish corruption from version skew.
struct FormatError : std::runtime_error {
  enum class Kind { BadMagic, BadVersion, BadHash, Truncated, Malformed };
  Kind kind;
  FormatError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

}  // namespace omni
