#pragma once

#include <stdexcept>
#include <string>

namespace ibra {

// Shape/dtype violations in tensor construction or kernels.
struct TensorError : std::runtime_error {
    explicit TensorError(const std::string& msg) : std::runtime_error(msg) {}
};

// Layer sequencing / shape incompatibility, carries the layer index in the message.
struct GraphError : std::runtime_error {
    explicit GraphError(const std::string& msg) : std::runtime_error(msg) {}
};

// Checkpoint / tensor container format problems.
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Lowering integrity violations (non-integral scaled activations, unfoldable graphs, ...).
struct LoweringError : std::runtime_error {
    explicit LoweringError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values in training (gradients, loss). Maps to CLI exit code 3.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ibra
