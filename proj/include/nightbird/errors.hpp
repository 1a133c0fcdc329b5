#pragma once

#include <stdexcept>
#include <string>

namespace nightbird {

// Bad user input or inconsistent shapes/arguments. The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values, failed convergence and similar. The CLI maps this to exit code 2.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace nightbird
