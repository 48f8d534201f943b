#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lorasc/cascade/run.hpp"
#include "lorasc/eval/report.hpp"

namespace lorasc {

inline constexpr Ladder kLadderLevels[] = {Ladder::Vanilla, Ladder::Cascade, Ladder::Slow, Ladder::Full};

struct LadderRun {
    Ladder level = Ladder::Full;
    std::uint64_t seed = 0;
    std::vector<MetricsRecord> metrics;
};

struct LadderReport {
    std::vector<LadderRow> rows;  // seed-major, then level, then split
    std::vector<LadderRun> runs;
};

// Every ladder level for every seed from the same backbone and data; the
// level is the only thing that changes between rows of one seed. Run errors
// are rethrown with the level and seed prefixed.
template <typename T>
LadderReport ablation_ladder(const CascadeConfig& base, const Backbone<T>& backbone, const RunData& data,
                             const std::vector<std::uint64_t>& seeds);

// Rows from finished runs' final (non-train, epoch == epochs) records, with
// mean/std filled across seeds.
std::vector<LadderRow> ladder_rows(const std::vector<LadderRun>& runs, std::size_t epochs);

}  // namespace lorasc
