#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "lorasc/data/dataset.hpp"

namespace lorasc {

enum class CorruptionKind {
    GaussianInput,   // x += severity * N(0, 1) per element
    FeatureMask,     // each element zeroed with probability severity
    CovariateShift,  // x += severity * u for a fixed random unit direction u
};

struct CorruptionSpec {
    CorruptionKind kind = CorruptionKind::GaussianInput;
    double severity = 0.0;
    std::uint64_t seed = 0;
};

std::string_view to_string(CorruptionKind kind) noexcept;
CorruptionKind parse_corruption_kind(std::string_view text);

// Split label used in metrics rows, e.g. "corrupted:gaussian_input:0.5".
std::string corruption_label(const CorruptionSpec& spec);

// Returns a transformed copy; `data` is never modified. Severity 0 returns a
// bit-identical copy. Sequence tasks only accept feature_mask (masked tokens
// become token 0).
Dataset corrupt(const Dataset& data, const CorruptionSpec& spec);

}  // namespace lorasc
