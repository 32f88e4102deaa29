#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace opal {

/// Violated precondition or broken type invariant.
struct ContractError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Unreadable or malformed file, failed write.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad configuration key or value.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Failure inside a named segmentation stage.
struct PipelineError : std::runtime_error {
  PipelineError(std::string stage, const std::string& what)
      : std::runtime_error("stage '" + stage + "': " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace opal
