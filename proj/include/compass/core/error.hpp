#pragma once

#include <stdexcept>
#include <string>

namespace compass {

// Malformed or inconsistent input data (files, annotations, shapes derived
// from user data). CLI maps this to exit code 2.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric failure: non-finite values, divergence, degenerate inputs to a
// statistic. CLI maps this to exit code 3.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace compass
