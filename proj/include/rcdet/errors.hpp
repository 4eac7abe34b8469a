#pragma once

#include <stdexcept>
#include <string>

namespace rcdet {

// Shape or axis violations on tensor operations.
struct DimError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid static configuration (heads not dividing dim, bad grid sizes, unknown config keys).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Broken call contract (non-scalar loss, non-finite cost entries, dt <= 0).
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Checkpoint does not match the model the config describes.
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace rcdet
