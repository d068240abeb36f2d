#pragma once

#include <stdexcept>
#include <string>

namespace ppcov {

// Error categories map onto the CLI exit-code contract:
// usage -> 1, data -> 2, model -> 3.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ModelError : std::runtime_error {
    explicit ModelError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ppcov
