#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pblab/tensor.hpp"

namespace pblab {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Three failure modes, each distinct so callers can tell them apart.
struct BadMagicError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct TruncatedPayloadError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct ManifestMismatchError : CheckpointError {
    using CheckpointError::CheckpointError;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Layout: magic "PBCK1\n", manifest lines "name shape offset length" (shape as
// comma-separated dims, offset/length in bytes relative to the payload start),
// a blank line, then concatenated little-endian float32 payloads. Round trips
// are bit-exact.
void save_checkpoint(const std::string& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::string& path);

}  // namespace pblab
