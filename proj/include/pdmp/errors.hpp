#pragma once

#include <stdexcept>
#include <string>

namespace pdmp {

/// Invalid model or run configuration (maps to CLI exit code 1).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the domain of an operation, e.g. a position outside
/// the analysis window or a flow derivative through a critical point.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A numerical procedure could not deliver its contract (exit code 2).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Valid input that lies outside the supported theory, e.g. a point that is
/// critical for two fields or a degenerate tangency.
class UnsupportedConfiguration : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pdmp
