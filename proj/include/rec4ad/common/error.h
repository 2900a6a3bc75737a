#ifndef REC4AD_COMMON_ERROR_H_
#define REC4AD_COMMON_ERROR_H_

#include <stdexcept>
#include <string>

namespace rec4ad {

// Invalid configuration or precondition breach on user-supplied input.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Shape or domain violation inside a computation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A NaN or Inf appeared in a forward or backward value.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An input file is missing or its digest disagrees with the upstream manifest.
class StaleInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file content.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rec4ad

#endif  // REC4AD_COMMON_ERROR_H_
