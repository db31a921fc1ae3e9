#pragma once

#include <stdexcept>
#include <string>

namespace enroll {

// Shape/dimension mismatch in numeric code. Message names both shapes.
struct DimError : std::invalid_argument {
    explicit DimError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Invalid input data: parse failures, broken invariants, unresolved ids.
// Loaders prefix messages with "<file>:<line>:" where applicable.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace enroll
