#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lorasc/cascade/run.hpp"
#include "lorasc/data/corrupt.hpp"
#include "lorasc/data/dataset.hpp"
#include "lorasc/data/generators.hpp"
#include "lorasc/data/table.hpp"
#include "lorasc/model/backbone.hpp"

namespace lorasc {

enum class Precision { F32, F64 };

std::string_view to_string(Precision p) noexcept;
Precision parse_precision(std::string_view text);

// Where the fine-tuning pool comes from.
//   teacher:  a broad teacher for pre-training and a shifted (related) teacher
//             with label noise for the narrow task
//   sequence: token-sequence classification for the transformer
//   table:    an external JSONL / CSV file, split by SplitSpec
struct DataSpec {
    std::string source = "teacher";
    std::size_t teacher_rank = 4;
    double label_noise = 0.5;
    std::size_t shift_rank = 2;
    double shift_scale = 0.5;
    SequenceKind sequence_kind = SequenceKind::Majority;
    std::string path;
    TableFormat format = TableFormat::Jsonl;
    std::uint64_t seed = 7;
    std::size_t pretrain_steps = 2000;
    std::size_t pretrain_n = 4000;
    std::size_t pretrain_batch = 32;
    double pretrain_lr = 3e-3;

    bool operator==(const DataSpec&) const = default;
};

struct RunConfig {
    ModelConfig model;
    CascadeConfig cascade;
    DataSpec data;
    SplitSpec split;
    std::vector<CorruptionSpec> corruptions;
    std::vector<std::uint64_t> seeds{0};
    std::filesystem::path out = "runs";
    Precision precision = Precision::F32;

    // Cross-field checks; throws ConfigError naming the key.
    void validate() const;
};

// Flat "key = value" lines, '#' comments, dotted keys (cascade.alpha, ...).
// Unknown keys and unparsable values raise ConfigError naming the key and
// the expected type. Overrides are applied after the file, in order.
RunConfig parse_config_text(std::string_view text,
                            const std::vector<std::pair<std::string, std::string>>& overrides = {});
RunConfig parse_config(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, std::string>>& overrides = {});

// Sets one key from its textual value.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

// Every key in fixed order with its resolved value; parses back to an
// identical config.
std::string config_to_text(const RunConfig& config);
std::uint64_t config_digest(std::string_view text) noexcept;

std::vector<std::string> config_keys();

}  // namespace lorasc
