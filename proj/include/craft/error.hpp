#pragma once

#include <stdexcept>
#include <string>

namespace craft {

// Error kinds raised across the library. All derive from std::runtime_error so
// callers that do not care about the kind can catch one type.

struct InvalidInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BehindCamera : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LoadError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace craft
