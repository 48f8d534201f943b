#include "lorasc/harness/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "lorasc/errors.hpp"

namespace lorasc {

std::string_view to_string(Precision p) noexcept { return p == Precision::F32 ? "f32" : "f64"; }

Precision parse_precision(std::string_view text) {
    if (text == "f32") return Precision::F32;
    if (text == "f64") return Precision::F64;
    throw ConfigError("run.precision: expected f32 or f64, got '" + std::string(text) + "'");
}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (!tok.empty()) out.push_back(tok);
    }
    return out;
}

[[noreturn]] void mismatch(const std::string& key, const char* type, const std::string& value) {
    throw ConfigError(key + ": expected " + type + ", got '" + value + "'");
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size()) mismatch(key, "unsigned integer", v);
    return out;
}

double to_f64(const std::string& key, const std::string& v) {
    double out = 0.0;
    auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size()) mismatch(key, "number", v);
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    mismatch(key, "boolean (true/false)", v);
}

std::string fmt(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

template <typename F>
auto wrap(const std::string& key, F&& f) {
    try {
        return f();
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        if (msg.rfind(key, 0) == 0) throw;
        throw ConfigError(key + ": " + msg);
    } catch (const Error& e) {
        throw ConfigError(key + ": " + e.what());
    }
}

struct Entry {
    const char* key;
    std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define SIZE_ENTRY(KEY, FIELD)                                                                   \
    Entry{KEY, [](RunConfig& c, const std::string& k, const std::string& v) {                    \
              c.FIELD = static_cast<std::size_t>(to_u64(k, v));                                  \
          },                                                                                     \
          [](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(c.FIELD)); }}
#define U64_ENTRY(KEY, FIELD)                                                                    \
    Entry{KEY, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = to_u64(k, v); }, \
          [](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(c.FIELD)); }}
#define F64_ENTRY(KEY, FIELD)                                                                    \
    Entry{KEY, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = to_f64(k, v); }, \
          [](const RunConfig& c) { return fmt(c.FIELD); }}
#define BOOL_ENTRY(KEY, FIELD)                                                                   \
    Entry{KEY, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = to_bool(k, v); }, \
          [](const RunConfig& c) { return fmt(c.FIELD); }}
#define ENUM_ENTRY(KEY, FIELD, PARSE)                                                            \
    Entry{KEY, [](RunConfig& c, const std::string& k, const std::string& v) {                    \
              c.FIELD = wrap(k, [&] { return PARSE(v); });                                       \
          },                                                                                     \
          [](const RunConfig& c) { return std::string(to_string(c.FIELD)); }}

const std::vector<Entry>& entries() {
    static const std::vector<Entry> table = {
        ENUM_ENTRY("model.mode", model.mode, parse_model_mode),
        SIZE_ENTRY("model.depth", model.depth),
        SIZE_ENTRY("model.width", model.width),
        SIZE_ENTRY("model.heads", model.heads),
        SIZE_ENTRY("model.input_dim", model.input_dim),
        SIZE_ENTRY("model.output_dim", model.output_dim),
        SIZE_ENTRY("model.vocab", model.vocab),
        SIZE_ENTRY("model.seq_len", model.seq_len),
        U64_ENTRY("model.seed", model.seed),

        F64_ENTRY("cascade.alpha", cascade.alpha),
        F64_ENTRY("cascade.lambda", cascade.lambda),
        SIZE_ENTRY("cascade.epochs", cascade.epochs),
        SIZE_ENTRY("cascade.steps_per_expert", cascade.steps_per_expert),
        SIZE_ENTRY("cascade.batch_size", cascade.batch_size),
        SIZE_ENTRY("cascade.rank", cascade.rank),
        F64_ENTRY("cascade.lora_alpha", cascade.lora_alpha),
        ENUM_ENTRY("cascade.ladder", cascade.ladder, parse_ladder),
        ENUM_ENTRY("cascade.baseline", cascade.baseline, parse_baseline),
        BOOL_ENTRY("cascade.discard_noise", cascade.discard_noise),
        F64_ENTRY("cascade.lr_multiplier", cascade.lr_multiplier),
        Entry{"cascade.targets",
              [](RunConfig& c, const std::string&, const std::string& v) { c.cascade.targets = split_list(v); },
              [](const RunConfig& c) {
                  std::string out;
                  for (std::size_t i = 0; i < c.cascade.targets.size(); ++i) {
                      out += (i ? "," : "") + c.cascade.targets[i];
                  }
                  return out;
              }},

        F64_ENTRY("optim.lr", cascade.schedule.lr_start),
        F64_ENTRY("optim.lr_end", cascade.schedule.lr_end),
        ENUM_ENTRY("optim.schedule", cascade.schedule.kind, parse_schedule_kind),
        F64_ENTRY("optim.lr_plus_ratio", cascade.lr_policy.b_multiplier),
        F64_ENTRY("optim.beta1", cascade.adamw.beta1),
        F64_ENTRY("optim.beta2", cascade.adamw.beta2),
        F64_ENTRY("optim.eps", cascade.adamw.eps),
        F64_ENTRY("optim.weight_decay", cascade.adamw.weight_decay),

        Entry{"data.source",
              [](RunConfig& c, const std::string& k, const std::string& v) {
                  if (v != "teacher" && v != "sequence" && v != "table") {
                      mismatch(k, "one of teacher, sequence, table", v);
                  }
                  c.data.source = v;
              },
              [](const RunConfig& c) { return c.data.source; }},
        SIZE_ENTRY("data.teacher_rank", data.teacher_rank),
        F64_ENTRY("data.label_noise", data.label_noise),
        SIZE_ENTRY("data.shift_rank", data.shift_rank),
        F64_ENTRY("data.shift_scale", data.shift_scale),
        ENUM_ENTRY("data.sequence_kind", data.sequence_kind, parse_sequence_kind),
        Entry{"data.path", [](RunConfig& c, const std::string&, const std::string& v) { c.data.path = v; },
              [](const RunConfig& c) { return c.data.path; }},
        ENUM_ENTRY("data.format", data.format, parse_table_format),
        U64_ENTRY("data.seed", data.seed),
        SIZE_ENTRY("data.pretrain_steps", data.pretrain_steps),
        SIZE_ENTRY("data.pretrain_n", data.pretrain_n),
        SIZE_ENTRY("data.pretrain_batch", data.pretrain_batch),
        F64_ENTRY("data.pretrain_lr", data.pretrain_lr),

        SIZE_ENTRY("split.train", split.n_train),
        SIZE_ENTRY("split.val", split.n_val),
        SIZE_ENTRY("split.test", split.n_test),
        U64_ENTRY("split.seed", split.seed),

        Entry{"eval.corruptions",
              [](RunConfig& c, const std::string& k, const std::string& v) {
                  c.corruptions.clear();
                  for (const auto& item : split_list(v)) {
                      const auto colon = item.rfind(':');
                      if (colon == std::string::npos) mismatch(k, "list of kind:severity", item);
                      CorruptionSpec spec;
                      spec.kind = wrap(k, [&] { return parse_corruption_kind(item.substr(0, colon)); });
                      spec.severity = to_f64(k, item.substr(colon + 1));
                      if (!(spec.severity >= 0.0)) mismatch(k, "severity >= 0", item);
                      spec.seed = 0;
                      c.corruptions.push_back(spec);
                  }
              },
              [](const RunConfig& c) {
                  std::string out;
                  for (std::size_t i = 0; i < c.corruptions.size(); ++i) {
                      out += (i ? "," : "") + std::string(to_string(c.corruptions[i].kind)) + ":" +
                             fmt(c.corruptions[i].severity);
                  }
                  return out;
              }},

        Entry{"run.seeds",
              [](RunConfig& c, const std::string& k, const std::string& v) {
                  c.seeds.clear();
                  for (const auto& s : split_list(v)) c.seeds.push_back(to_u64(k, s));
              },
              [](const RunConfig& c) {
                  std::string out;
                  for (std::size_t i = 0; i < c.seeds.size(); ++i) out += (i ? "," : "") + fmt(c.seeds[i]);
                  return out;
              }},
        Entry{"run.out", [](RunConfig& c, const std::string&, const std::string& v) { c.out = v; },
              [](const RunConfig& c) { return c.out.string(); }},
        ENUM_ENTRY("run.precision", precision, parse_precision),
    };
    return table;
}

#undef SIZE_ENTRY
#undef U64_ENTRY
#undef F64_ENTRY
#undef BOOL_ENTRY
#undef ENUM_ENTRY

}  // namespace

void RunConfig::validate() const {
    model.validate();
    cascade.validate();
    if (seeds.empty()) {
        throw ConfigError("run.seeds: at least one seed is required");
    }
    if (split.n_train == 0) {
        throw ConfigError("split.train must be positive");
    }
    if (!(data.label_noise >= 0.0)) {
        throw ConfigError("data.label_noise must be >= 0");
    }
    if (data.source == "teacher") {
        if (model.mode != ModelMode::Mlp) {
            throw ConfigError("data.source: teacher tasks need model.mode = mlp");
        }
        if (data.teacher_rank < 1 || data.teacher_rank > std::min(model.input_dim, model.output_dim)) {
            throw ConfigError("data.teacher_rank must lie in [1, min(model.input_dim, model.output_dim)]");
        }
    } else if (data.source == "sequence") {
        if (model.mode != ModelMode::Transformer) {
            throw ConfigError("data.source: sequence tasks need model.mode = transformer");
        }
        if (model.output_dim != model.vocab) {
            throw ConfigError("model.output_dim must equal model.vocab for sequence tasks");
        }
    } else if (data.path.empty()) {
        throw ConfigError("data.path is required when data.source = table");
    }
}

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& e : entries()) out.emplace_back(e.key);
    return out;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
    for (const auto& e : entries()) {
        if (key == e.key) {
            e.set(config, key, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config_text(std::string_view text, const std::vector<std::pair<std::string, std::string>>& overrides) {
    RunConfig c;
    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++lineno;
        const auto hash = line.find('#');
        const std::string body = trim(line.substr(0, hash));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        set_config_value(c, trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1)));
    }
    for (const auto& [k, v] : overrides) {
        set_config_value(c, k, v);
    }
    c.validate();
    return c;
}

RunConfig parse_config(const std::filesystem::path& path, const std::vector<std::pair<std::string, std::string>>& overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read config file '" + path.string() + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), overrides);
}

std::string config_to_text(const RunConfig& config) {
    std::string out;
    for (const auto& e : entries()) {
        out += std::string(e.key) + " = " + e.get(config) + "\n";
    }
    return out;
}

std::uint64_t config_digest(std::string_view text) noexcept {
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : text) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
    return h;
}

}  // namespace lorasc
