#pragma once

#include <stdexcept>
#include <string>

namespace tobit {

// Bad input: malformed data, violated preconditions, out-of-domain arguments.
class InputError : public std::invalid_argument {
public:
    explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

// The numerics failed on otherwise valid input (non-convergence, singular
// systems, degenerate variance).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tobit
