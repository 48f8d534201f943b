#pragma once

#include <cstddef>
#include <exception>
#include <filesystem>
#include <optional>
#include <ostream>

#include "lorasc/harness/config.hpp"

namespace lorasc {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitTraining = 3;
inline constexpr int kExitIo = 4;

// 2 for configuration / argument problems, 3 for training and numeric
// failures, 4 for file, checkpoint and ingestion failures.
int exit_code_for(const std::exception& e) noexcept;

struct TrainOptions {
    // Stop once this many data epochs are done and leave a resumable
    // checkpoint; 0 saves the untrained initial state.
    std::optional<std::size_t> stop_after_epoch;
    // Continue from this checkpoint; its embedded config is authoritative.
    std::filesystem::path resume;
};

// Per seed, under <out>/seed-<n>/: metrics.csv, config.txt, checkpoint.bin,
// plus PARTIAL when stopped early or FAILED (with the message) on error.
int cmd_train(const RunConfig& config, const TrainOptions& options, std::ostream& log);

// Every ladder level for every seed under <out>/<level>-s<seed>/ and the
// consolidated <out>/ladder.csv.
int cmd_ablate(const RunConfig& config, std::ostream& log);

// Loss / accuracy of a checkpoint's current model on val, test and the
// corrupted splits, written to `out` (csv or jsonl by extension).
int cmd_evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& out, std::ostream& log);

// Effective rank of each target's cumulative merged delta (the ledger's
// W - W0 - sum of noise) at threshold tau, written to `out` as CSV.
int cmd_rank(const std::filesystem::path& checkpoint, double tau, const std::filesystem::path& out,
             std::ostream& log);

int cmd_inspect(const std::filesystem::path& checkpoint, std::ostream& log);

}  // namespace lorasc
