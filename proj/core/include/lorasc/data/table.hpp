#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "lorasc/data/dataset.hpp"

namespace lorasc {

enum class TableFormat { Jsonl, Csv };

std::string_view to_string(TableFormat format) noexcept;
TableFormat parse_table_format(std::string_view text);

// Column layout of an external table.
//   JSONL: one object per line, "x": array of input_dim numbers, "y": array of
//          target_dim numbers (regression) or an integer label.
//   CSV:   header row; `feature_columns` then `target_columns` are looked up by
//          name, so column order in the file is free.
struct TableSchema {
    TaskKind kind = TaskKind::Regression;
    std::size_t input_dim = 0;
    std::size_t target_dim = 0;  // regression only
    std::size_t classes = 0;     // labelled tasks only
    std::vector<std::string> feature_columns;
    std::vector<std::string> target_columns;

    // x0..x{input_dim-1} and y0..y{target_dim-1} (or "label").
    static TableSchema with_default_columns(TaskKind kind, std::size_t input_dim,
                                            std::size_t target_dim, std::size_t classes);
};

// Row order is preserved. Malformed rows raise IngestionError with the
// 1-based line number; missing CSV columns raise SchemaError.
Dataset load_table(const std::filesystem::path& path, TableFormat format, const TableSchema& schema);

// Writes with round-trip-exact number formatting. Throws IoError.
void save_table(const Dataset& data, const std::filesystem::path& path, TableFormat format,
                const TableSchema& schema);

}  // namespace lorasc
