#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "protohead/model.hpp"

namespace protohead {

/// Raised on unreadable, truncated, or malformed checkpoint files.
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when the file's format version is not the one this build writes.
struct CheckpointVersionError : CheckpointError {
    using CheckpointError::CheckpointError;
};

inline constexpr std::uint32_t kCheckpointMagic = 0x4B434850;  // "PHCK" little-endian
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout, all little-endian: magic, version, input dims, backbone hidden
// sizes, feature dim, hypernetwork hidden size, classes per task, prototype
// dims, task count; then raw f64 parameter blocks for the backbone, the
// hypernetwork, and finally every task's prototypes in (task, class) order.
// Heads are generated, never stored, so each additional task costs exactly
// classes * prototype-numel parameters.

void save_checkpoint(const HyperHeadModel& model, const std::string& path);
HyperHeadModel load_checkpoint(const std::string& path);

/// Exact file size in bytes a checkpoint with these dimensions occupies.
std::uint64_t checkpoint_size_bytes(const ModelConfig& cfg, int num_tasks);

}  // namespace protohead
