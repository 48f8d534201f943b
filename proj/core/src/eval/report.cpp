#include "lorasc/eval/report.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lorasc/errors.hpp"
#include "internal/record_json.hpp"

namespace lorasc {

namespace {

using nlohmann::json;

std::string num(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string num(std::uint64_t v) { return std::to_string(v); }

std::string field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string opt(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

std::vector<std::string> split_csv(const std::string& line, std::size_t lineno) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) {
        throw IngestionError("line " + std::to_string(lineno) + ": unterminated quote");
    }
    out.push_back(std::move(cur));
    return out;
}

double parse_double(const std::string& s, std::size_t lineno) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw IngestionError("line " + std::to_string(lineno) + ": '" + s + "' is not a number");
    }
    return v;
}

std::uint64_t parse_u64(const std::string& s, std::size_t lineno) {
    std::uint64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw IngestionError("line " + std::to_string(lineno) + ": '" + s + "' is not an unsigned integer");
    }
    return v;
}

std::optional<double> parse_opt(const std::string& s, std::size_t lineno) {
    if (s.empty()) return std::nullopt;
    return parse_double(s, lineno);
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "' for reading");
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
    }
    return lines;
}

void expect_header(const std::vector<std::string>& lines, std::string_view header, const std::filesystem::path& path) {
    if (lines.empty() || lines.front() != header) {
        throw SchemaError("'" + path.string() + "': expected header '" + std::string(header) + "'");
    }
}

}  // namespace

namespace detail {

json record_to_json(const MetricsRecord& r) {
    json j = json::object();
    j["run_id"] = r.run_id;
    j["epoch"] = r.epoch;
    j["step"] = r.step;
    j["split"] = r.split;
    j["loss"] = r.loss;
    j["accuracy"] = r.accuracy ? json(*r.accuracy) : json(nullptr);
    j["lr"] = r.lr;
    j["noise_sigma"] = r.noise_sigma;
    j["slow_norm"] = r.slow_norm;
    j["fast_norm"] = r.fast_norm;
    return j;
}

MetricsRecord record_from_json(const json& j) {
    MetricsRecord r;
    r.run_id = j.at("run_id").get<std::string>();
    r.epoch = j.at("epoch").get<std::size_t>();
    r.step = j.at("step").get<std::size_t>();
    r.split = j.at("split").get<std::string>();
    r.loss = j.at("loss").get<double>();
    if (!j.at("accuracy").is_null()) r.accuracy = j.at("accuracy").get<double>();
    r.lr = j.at("lr").get<double>();
    r.noise_sigma = j.at("noise_sigma").get<std::vector<double>>();
    r.slow_norm = j.at("slow_norm").get<double>();
    r.fast_norm = j.at("fast_norm").get<double>();
    return r;
}

}  // namespace detail

std::string_view to_string(ReportFormat format) noexcept {
    return format == ReportFormat::Csv ? "csv" : "jsonl";
}

ReportFormat parse_report_format(std::string_view text) {
    if (text == "csv") return ReportFormat::Csv;
    if (text == "jsonl") return ReportFormat::Jsonl;
    throw ConfigError("report format '" + std::string(text) + "' (expected csv or jsonl)");
}

ReportFormat report_format_for(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext.size() < 2) {
        throw ConfigError("cannot infer report format from '" + path.string() + "'");
    }
    return parse_report_format(ext.substr(1));
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open '" + tmp.string() + "' for writing");
        }
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        out.flush();
        if (!out) {
            throw IoError("write to '" + tmp.string() + "' failed");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move report into '" + path.string() + "'");
    }
}

void emit_report(const std::vector<MetricsRecord>& records, ReportFormat format, const std::filesystem::path& path) {
    if (records.empty()) {
        throw ArgumentError("emit_report: no records");
    }
    std::string text;
    if (format == ReportFormat::Csv) {
        text += kMetricsCsvHeader;
        text += '\n';
        for (const auto& r : records) {
            std::string sig;
            for (std::size_t i = 0; i < r.noise_sigma.size(); ++i) {
                if (i) sig += ';';
                sig += num(r.noise_sigma[i]);
            }
            text += field(r.run_id) + ',' + num(std::uint64_t{r.epoch}) + ',' + num(std::uint64_t{r.step}) + ',' +
                    field(r.split) + ',' + num(r.loss) + ',' + opt(r.accuracy) + ',' + num(r.lr) + ',' + sig + ',' +
                    num(r.slow_norm) + ',' + num(r.fast_norm) + '\n';
        }
    } else {
        for (const auto& r : records) {
            const json j = detail::record_to_json(r);
            text += j.dump() + '\n';
        }
    }
    write_file_atomic(path, text);
}

std::vector<MetricsRecord> load_records(const std::filesystem::path& path, ReportFormat format) {
    const auto lines = read_lines(path);
    std::vector<MetricsRecord> out;
    if (format == ReportFormat::Csv) {
        expect_header(lines, kMetricsCsvHeader, path);
        for (std::size_t i = 1; i < lines.size(); ++i) {
            if (lines[i].empty()) continue;
            const std::size_t ln = i + 1;
            auto f = split_csv(lines[i], ln);
            if (f.size() != 10) {
                throw IngestionError("line " + std::to_string(ln) + ": expected 10 fields, got " +
                                     std::to_string(f.size()));
            }
            MetricsRecord r;
            r.run_id = f[0];
            r.epoch = parse_u64(f[1], ln);
            r.step = parse_u64(f[2], ln);
            r.split = f[3];
            r.loss = parse_double(f[4], ln);
            r.accuracy = parse_opt(f[5], ln);
            r.lr = parse_double(f[6], ln);
            if (!f[7].empty()) {
                std::stringstream ss(f[7]);
                std::string tok;
                while (std::getline(ss, tok, ';')) r.noise_sigma.push_back(parse_double(tok, ln));
            }
            r.slow_norm = parse_double(f[8], ln);
            r.fast_norm = parse_double(f[9], ln);
            out.push_back(std::move(r));
        }
        return out;
    }
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        try {
            const json j = json::parse(lines[i]);
            MetricsRecord r = detail::record_from_json(j);
            out.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw IngestionError("line " + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return out;
}

void emit_ladder(const std::vector<LadderRow>& rows, ReportFormat format, const std::filesystem::path& path) {
    if (rows.empty()) {
        throw ArgumentError("emit_ladder: no rows");
    }
    std::string text;
    if (format == ReportFormat::Csv) {
        text += kLadderCsvHeader;
        text += '\n';
        for (const auto& r : rows) {
            text += field(r.level) + ',' + num(r.seed) + ',' + field(r.split) + ',' + num(r.loss) + ',' +
                    opt(r.accuracy) + ',' + num(r.loss_mean) + ',' + num(r.loss_std) + ',' + opt(r.accuracy_mean) +
                    ',' + opt(r.accuracy_std) + '\n';
        }
    } else {
        auto o = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
        for (const auto& r : rows) {
            json j = json::object();
            j["level"] = r.level;
            j["seed"] = r.seed;
            j["split"] = r.split;
            j["loss"] = r.loss;
            j["accuracy"] = o(r.accuracy);
            j["loss_mean"] = r.loss_mean;
            j["loss_std"] = r.loss_std;
            j["accuracy_mean"] = o(r.accuracy_mean);
            j["accuracy_std"] = o(r.accuracy_std);
            text += j.dump() + '\n';
        }
    }
    write_file_atomic(path, text);
}

std::vector<LadderRow> load_ladder(const std::filesystem::path& path, ReportFormat format) {
    const auto lines = read_lines(path);
    std::vector<LadderRow> out;
    if (format == ReportFormat::Csv) {
        expect_header(lines, kLadderCsvHeader, path);
        for (std::size_t i = 1; i < lines.size(); ++i) {
            if (lines[i].empty()) continue;
            const std::size_t ln = i + 1;
            auto f = split_csv(lines[i], ln);
            if (f.size() != 9) {
                throw IngestionError("line " + std::to_string(ln) + ": expected 9 fields, got " +
                                     std::to_string(f.size()));
            }
            out.push_back(LadderRow{f[0], parse_u64(f[1], ln), f[2], parse_double(f[3], ln), parse_opt(f[4], ln),
                                    parse_double(f[5], ln), parse_double(f[6], ln), parse_opt(f[7], ln),
                                    parse_opt(f[8], ln)});
        }
        return out;
    }
    auto o = [](const json& v) -> std::optional<double> {
        if (v.is_null()) return std::nullopt;
        return v.get<double>();
    };
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        try {
            const json j = json::parse(lines[i]);
            out.push_back(LadderRow{j.at("level").get<std::string>(), j.at("seed").get<std::uint64_t>(),
                                    j.at("split").get<std::string>(), j.at("loss").get<double>(), o(j.at("accuracy")),
                                    j.at("loss_mean").get<double>(), j.at("loss_std").get<double>(),
                                    o(j.at("accuracy_mean")), o(j.at("accuracy_std"))});
        } catch (const json::exception& e) {
            throw IngestionError("line " + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace lorasc
