#pragma once

#include <stdexcept>
#include <string>

namespace dpin {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or window mismatch between tensors; message names both shapes.
struct DimensionError : Error {
    using Error::Error;
};

// Bad or inconsistent configuration values.
struct ConfigError : Error {
    using Error::Error;
};

// Action cannot be realized in the given state.
struct FeasibilityError : Error {
    using Error::Error;
};

// Mismatched parameter sets, missing gradient keys, checkpoint hash mismatch.
struct ConsistencyError : Error {
    using Error::Error;
};

// Corrupt stored data (e.g. a logged transition whose action is infeasible).
struct DataError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace dpin
