#pragma once

#include <stdexcept>
#include <string>

namespace iqtcfm {

/// Bad user input: malformed config, unknown keys, invalid CLI values.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

/// Unreadable/unwritable files, malformed file contents.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& m) : std::runtime_error(m) {}
};

/// Contract violation at runtime (non-finite values, exhausted sampling, ...).
struct RuntimeFailure : std::runtime_error {
  explicit RuntimeFailure(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace iqtcfm
