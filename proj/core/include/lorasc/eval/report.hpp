#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lorasc/eval/metrics.hpp"

namespace lorasc {

enum class ReportFormat { Csv, Jsonl };

std::string_view to_string(ReportFormat format) noexcept;
ReportFormat parse_report_format(std::string_view text);
// From a file extension (.csv / .jsonl); ConfigError otherwise.
ReportFormat report_format_for(const std::filesystem::path& path);

// One ablation-ladder row: a level's final metrics for one seed and split,
// with the across-seed mean and sample standard deviation for that
// (level, split).
struct LadderRow {
    std::string level;
    std::uint64_t seed = 0;
    std::string split;
    double loss = 0.0;
    std::optional<double> accuracy;
    double loss_mean = 0.0;
    double loss_std = 0.0;
    std::optional<double> accuracy_mean;
    std::optional<double> accuracy_std;

    bool operator==(const LadderRow&) const = default;
};

inline constexpr std::string_view kMetricsCsvHeader =
    "run_id,epoch,step,split,loss,accuracy,lr,noise_sigma,slow_norm,fast_norm";
inline constexpr std::string_view kLadderCsvHeader =
    "level,seed,split,loss,accuracy,loss_mean,loss_std,accuracy_mean,accuracy_std";

// Writes to a sibling temporary file and renames it into place. Numbers use
// the shortest round-trip representation. Throws ArgumentError for an empty
// list and IoError when the path cannot be written.
void emit_report(const std::vector<MetricsRecord>& records, ReportFormat format, const std::filesystem::path& path);
std::vector<MetricsRecord> load_records(const std::filesystem::path& path, ReportFormat format);

void emit_ladder(const std::vector<LadderRow>& rows, ReportFormat format, const std::filesystem::path& path);
std::vector<LadderRow> load_ladder(const std::filesystem::path& path, ReportFormat format);

// Replaces `path` atomically with `text`.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace lorasc
