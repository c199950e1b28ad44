#pragma once

#include <stdexcept>
#include <string>

namespace lambshift {

/// Malformed or inconsistent run configuration. `path` names the offending
/// field (e.g. "geometry.radius").
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& what)
      : std::runtime_error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// A numerical kernel failed (singular factorization, eigensolver did not
/// converge, degenerate positions).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The position sampler exhausted its rejection budget.
class PackingError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Analysis could not be carried out on the supplied data (e.g. a curve too
/// rough for peak extraction).
class AnalysisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lambshift
