#pragma once

#include <stdexcept>
#include <string>

namespace moran {

// Bad input or violated precondition (CLI exit code 2).
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// State-space caps, truncation budgets and positivity failures (CLI exit code 3).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace moran
