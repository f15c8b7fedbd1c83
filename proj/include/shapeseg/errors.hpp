#pragma once

#include <stdexcept>

namespace shapeseg {

// Raised when training produces a non-finite loss; maps to exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace shapeseg
