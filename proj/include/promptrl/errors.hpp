// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace promptrl {

struct InvalidInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ContextOverflowError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A scorer backend failed; the episode using it is discarded upstream.
struct RewardUnavailableError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnsupportedOperationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A stage was started without the artifact an earlier stage produces.
struct DependencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Optimization produced a non-finite loss or gradient; the run is aborted
// rather than continued from a poisoned state.
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace promptrl
