#include "lorasc/data/table.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "lorasc/errors.hpp"

namespace lorasc {

namespace {

using json = nlohmann::json;

std::string format_number(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_number(std::string_view text, std::size_t line, const std::string& column) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t')) text.remove_suffix(1);
    double v = 0.0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
        throw IngestionError("line " + std::to_string(line) + ": column '" + column +
                             "' is not a number: '" + std::string(text) + "'");
    }
    if (!std::isfinite(v)) {
        throw IngestionError("line " + std::to_string(line) + ": column '" + column +
                             "' is not finite");
    }
    return v;
}

int parse_label(double v, std::size_t line, const TableSchema& schema) {
    if (v != std::floor(v) || v < 0 || v >= static_cast<double>(schema.classes)) {
        throw IngestionError("line " + std::to_string(line) + ": label " + format_number(v) +
                             " is not an integer in [0, " + std::to_string(schema.classes) + ")");
    }
    return static_cast<int>(v);
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            out.push_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
}

bool is_blank(const std::string& line) {
    return line.find_first_not_of(" \t") == std::string::npos;
}

Dataset empty_for(const TableSchema& schema) {
    Dataset d;
    d.kind = schema.kind;
    d.classes = schema.classes;
    d.inputs = MatrixD(0, schema.input_dim);
    if (schema.kind == TaskKind::Regression) {
        d.targets = MatrixD(0, schema.target_dim);
    }
    return d;
}

// Rows are collected in flat buffers and packed at the end.
struct RowSink {
    std::vector<double> x;
    std::vector<double> y;
    std::vector<int> labels;
    std::size_t rows = 0;
};

Dataset pack(RowSink&& sink, const TableSchema& schema, const std::filesystem::path& path) {
    Dataset d = empty_for(schema);
    d.inputs = MatrixD(sink.rows, schema.input_dim, std::move(sink.x));
    if (schema.kind == TaskKind::Regression) {
        d.targets = MatrixD(sink.rows, schema.target_dim, std::move(sink.y));
    } else {
        d.labels = std::move(sink.labels);
    }
    d.provenance = "table:" + path.string();
    return d;
}

Dataset load_jsonl(std::istream& in, const TableSchema& schema, const std::filesystem::path& path) {
    RowSink sink;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (is_blank(line)) {
            continue;
        }
        json row;
        try {
            row = json::parse(line);
        } catch (const json::parse_error& e) {
            throw IngestionError("line " + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
        }
        if (!row.is_object() || !row.contains("x") || !row.contains("y")) {
            throw IngestionError("line " + std::to_string(line_no) + ": expected an object with \"x\" and \"y\"");
        }
        const auto& x = row["x"];
        if (!x.is_array() || x.size() != schema.input_dim) {
            throw IngestionError("line " + std::to_string(line_no) + ": \"x\" must be an array of " +
                                 std::to_string(schema.input_dim) + " numbers");
        }
        for (const auto& v : x) {
            if (!v.is_number() || !std::isfinite(v.get<double>())) {
                throw IngestionError("line " + std::to_string(line_no) + ": \"x\" holds a non-finite or non-numeric value");
            }
            sink.x.push_back(v.get<double>());
        }
        const auto& y = row["y"];
        if (schema.kind == TaskKind::Regression) {
            if (!y.is_array() || y.size() != schema.target_dim) {
                throw IngestionError("line " + std::to_string(line_no) + ": \"y\" must be an array of " +
                                     std::to_string(schema.target_dim) + " numbers");
            }
            for (const auto& v : y) {
                if (!v.is_number() || !std::isfinite(v.get<double>())) {
                    throw IngestionError("line " + std::to_string(line_no) + ": \"y\" holds a non-finite or non-numeric value");
                }
                sink.y.push_back(v.get<double>());
            }
        } else {
            if (!y.is_number_integer()) {
                throw IngestionError("line " + std::to_string(line_no) + ": \"y\" must be an integer label");
            }
            sink.labels.push_back(parse_label(y.get<double>(), line_no, schema));
        }
        ++sink.rows;
    }
    return pack(std::move(sink), schema, path);
}

Dataset load_csv(std::istream& in, const TableSchema& schema, const std::filesystem::path& path) {
    std::string line;
    std::size_t line_no = 0;
    // Skip leading blank lines; a file with no header is an empty dataset.
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (!is_blank(line)) {
            have_header = true;
            break;
        }
    }
    if (!have_header) {
        return empty_for(schema);
    }
    const auto header = split_csv(line);
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < header.size(); ++i) {
        index.emplace(std::string(header[i]), i);
    }
    auto lookup = [&](const std::vector<std::string>& names) {
        std::vector<std::size_t> cols;
        for (const auto& n : names) {
            auto it = index.find(n);
            if (it == index.end()) {
                throw SchemaError("CSV header of " + path.string() + " has no column '" + n + "'");
            }
            cols.push_back(it->second);
        }
        return cols;
    };
    const auto fcols = lookup(schema.feature_columns);
    const auto tcols = lookup(schema.target_columns);
    if (fcols.size() != schema.input_dim) {
        throw SchemaError("schema lists " + std::to_string(fcols.size()) + " feature columns for input_dim " +
                          std::to_string(schema.input_dim));
    }

    RowSink sink;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (is_blank(line)) {
            continue;
        }
        const auto fields = split_csv(line);
        if (fields.size() != header.size()) {
            throw IngestionError("line " + std::to_string(line_no) + ": expected " +
                                 std::to_string(header.size()) + " fields, found " +
                                 std::to_string(fields.size()));
        }
        for (std::size_t i = 0; i < fcols.size(); ++i) {
            sink.x.push_back(parse_number(fields[fcols[i]], line_no, schema.feature_columns[i]));
        }
        if (schema.kind == TaskKind::Regression) {
            for (std::size_t i = 0; i < tcols.size(); ++i) {
                sink.y.push_back(parse_number(fields[tcols[i]], line_no, schema.target_columns[i]));
            }
        } else {
            const double v = parse_number(fields[tcols.at(0)], line_no, schema.target_columns.at(0));
            sink.labels.push_back(parse_label(v, line_no, schema));
        }
        ++sink.rows;
    }
    return pack(std::move(sink), schema, path);
}

}  // namespace

std::string_view to_string(TableFormat format) noexcept {
    return format == TableFormat::Jsonl ? "jsonl" : "csv";
}

TableFormat parse_table_format(std::string_view text) {
    if (text == "jsonl") return TableFormat::Jsonl;
    if (text == "csv") return TableFormat::Csv;
    throw ConfigError("unknown table format '" + std::string(text) + "' (expected jsonl or csv)");
}

TableSchema TableSchema::with_default_columns(TaskKind kind, std::size_t input_dim,
                                              std::size_t target_dim, std::size_t classes) {
    TableSchema s;
    s.kind = kind;
    s.input_dim = input_dim;
    s.target_dim = kind == TaskKind::Regression ? target_dim : 0;
    s.classes = classes;
    for (std::size_t i = 0; i < input_dim; ++i) {
        s.feature_columns.push_back("x" + std::to_string(i));
    }
    if (kind == TaskKind::Regression) {
        for (std::size_t i = 0; i < target_dim; ++i) {
            s.target_columns.push_back("y" + std::to_string(i));
        }
    } else {
        s.target_columns.push_back("label");
    }
    return s;
}

Dataset load_table(const std::filesystem::path& path, TableFormat format, const TableSchema& schema) {
    if (schema.kind == TaskKind::Regression && schema.target_columns.size() != schema.target_dim &&
        format == TableFormat::Csv) {
        throw SchemaError("schema lists " + std::to_string(schema.target_columns.size()) +
                          " target columns for target_dim " + std::to_string(schema.target_dim));
    }
    if (schema.kind != TaskKind::Regression && schema.classes == 0) {
        throw SchemaError("labelled table schema needs a positive class count");
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open table " + path.string());
    }
    return format == TableFormat::Jsonl ? load_jsonl(in, schema, path) : load_csv(in, schema, path);
}

void save_table(const Dataset& data, const std::filesystem::path& path, TableFormat format,
                const TableSchema& schema) {
    data.validate();
    std::ostringstream os;
    const std::size_t n = data.size();
    if (format == TableFormat::Jsonl) {
        for (std::size_t i = 0; i < n; ++i) {
            os << "{\"x\":[";
            for (std::size_t j = 0; j < data.inputs.cols(); ++j) {
                os << (j ? "," : "") << format_number(data.inputs(i, j));
            }
            os << "],\"y\":";
            if (data.kind == TaskKind::Regression) {
                os << '[';
                for (std::size_t j = 0; j < data.targets.cols(); ++j) {
                    os << (j ? "," : "") << format_number(data.targets(i, j));
                }
                os << ']';
            } else {
                os << data.labels[i];
            }
            os << "}\n";
        }
    } else {
        bool first = true;
        for (const auto& c : schema.feature_columns) {
            os << (first ? "" : ",") << c;
            first = false;
        }
        for (const auto& c : schema.target_columns) {
            os << ',' << c;
        }
        os << '\n';
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < data.inputs.cols(); ++j) {
                os << (j ? "," : "") << format_number(data.inputs(i, j));
            }
            if (data.kind == TaskKind::Regression) {
                for (std::size_t j = 0; j < data.targets.cols(); ++j) {
                    os << ',' << format_number(data.targets(i, j));
                }
            } else {
                os << ',' << data.labels[i];
            }
            os << '\n';
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write table " + path.string());
    }
    out << os.str();
    if (!out) {
        throw IoError("short write to table " + path.string());
    }
}

}  // namespace lorasc
