#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace wderiv {

// Bad configuration or user input (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or unusable data files (CLI exit code 3).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure: factorization, singular matrix, non-finite result
// (CLI exit code 4).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Fit did not produce a usable estimate. Carries the best point found so
// callers can inspect how far the optimizer got.
class FitError : public std::runtime_error {
 public:
  FitError(const std::string& msg, std::vector<double> best_point = {},
           double best_value = 0.0)
      : std::runtime_error(msg),
        best_point_(std::move(best_point)),
        best_value_(best_value) {}

  const std::vector<double>& best_point() const { return best_point_; }
  double best_value() const { return best_value_; }

 private:
  std::vector<double> best_point_;
  double best_value_;
};

}  // namespace wderiv
