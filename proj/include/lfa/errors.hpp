#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lfa {

// Shape or axis disagreement between tensors/configs.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration values.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// API misuse: bad argument values, empty inputs, missing gradients.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Corrupt or unrecognized file contents (bad magic, truncation).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Open-set protocol violation: evaluation split shares clients with training.
struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NotEnrolledError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConflictError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ModelMismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegenerateLandmarksError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct OutOfFrameError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training abort: carries enough context to reproduce the failing batch.
struct NonFiniteLossError : std::runtime_error {
    int64_t iteration;
    uint64_t batch_seed;
    NonFiniteLossError(const std::string& msg, int64_t iter, uint64_t seed)
        : std::runtime_error(msg), iteration(iter), batch_seed(seed) {}
};

}  // namespace lfa
