#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "lorasc/cascade/run.hpp"
#include "lorasc/harness/config.hpp"

namespace lorasc {

// Single-file layout:
//   "LORASCCK" | u32 version | u64 header length | JSON header | tensor blobs
// The header carries the resolved config text and digest, run scalars, rng
// counters, metrics and a tensor index (name, dtype, shape, offset, nbytes)
// into the payload of little-endian row-major blobs.
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
struct Checkpoint {
    std::string config_text;
    RunState<T> state;
};

template <typename T>
void save_checkpoint(const RunState<T>& state, const std::string& config_text, const std::filesystem::path& path);

// Throws IntegrityError (with the byte offset) for a bad magic, truncated or
// inconsistent file, and for any version other than kCheckpointVersion.
// Nothing is returned unless the whole file validates.
template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path);

struct CheckpointInfo {
    std::uint32_t version = 0;
    Precision precision = Precision::F32;
    std::uint64_t config_digest = 0;
    std::string header_json;
};

// Header only, for inspection and precision dispatch.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

}  // namespace lorasc
