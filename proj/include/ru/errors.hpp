#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ru {

/// Market coefficients violate ellipticity, rank or shape requirements.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A utility function was evaluated outside the region where it is valid
/// (for example a non-positive inverse marginal utility).
class DomainError : public std::runtime_error {
 public:
  DomainError(const std::string& what, std::vector<std::size_t> paths = {})
      : std::runtime_error(what), paths_(std::move(paths)) {}
  const std::vector<std::size_t>& paths() const noexcept { return paths_; }

 private:
  std::vector<std::size_t> paths_;
};

/// Corrected wealth at the horizon is not strictly positive on some paths.
class AdmissibilityError : public std::runtime_error {
 public:
  AdmissibilityError(const std::string& what, std::vector<std::size_t> paths)
      : std::runtime_error(what), paths_(std::move(paths)) {}
  const std::vector<std::size_t>& paths() const noexcept { return paths_; }

 private:
  std::vector<std::size_t> paths_;
};

/// Scenario configuration could not be parsed or validated. `field` is a
/// dotted path to the offending entry.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

namespace detail {

inline std::string format_paths(const std::vector<std::size_t>& paths, std::size_t limit = 8) {
  std::string out;
  for (std::size_t i = 0; i < paths.size() && i < limit; ++i) {
    if (i) out += ", ";
    out += std::to_string(paths[i]);
  }
  if (paths.size() > limit) out += ", ... (" + std::to_string(paths.size()) + " total)";
  return out;
}

}  // namespace detail
}  // namespace ru
