#pragma once

#include <stdexcept>
#include <string>

namespace sea {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid user-supplied configuration (bad key, out-of-range value, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Tensor/graph shape incompatibility; message names the op and shapes.
struct ShapeError : Error {
    using Error::Error;
};

// Operation called out of order (e.g. backward before forward).
struct StateError : Error {
    using Error::Error;
};

// Malformed file contents; message carries the byte offset.
struct FormatError : Error {
    using Error::Error;
};

// Training failure (divergence); message names the epoch.
struct TrainError : Error {
    using Error::Error;
};

} // namespace sea
