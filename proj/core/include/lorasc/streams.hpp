#pragma once

#include <cstdint>

namespace lorasc::streams {

// Rng stream ids. A run seed plus one of these names an independent sample
// sequence, so adding draws to one consumer never shifts another.
inline constexpr std::uint64_t kModelInit = 1;
inline constexpr std::uint64_t kAdapterInit = 2;
inline constexpr std::uint64_t kNoise = 3;
inline constexpr std::uint64_t kTeacher = 4;
inline constexpr std::uint64_t kSamples = 5;
inline constexpr std::uint64_t kLabelNoise = 6;
inline constexpr std::uint64_t kSplit = 7;
inline constexpr std::uint64_t kCorruption = 8;
inline constexpr std::uint64_t kPretrainShuffle = 9;
// Per-epoch shuffles use kShuffleBase + epoch.
inline constexpr std::uint64_t kShuffleBase = 1u << 20;

}  // namespace lorasc::streams
