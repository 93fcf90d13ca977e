#pragma once

#include <stdexcept>
#include <string>

namespace mdbt {

// Bad input: malformed files, inconsistent ontologies, invalid config.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite losses or gradients during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mdbt
