#include "lorasc/harness/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

#include "internal/record_json.hpp"
#include "lorasc/errors.hpp"
#include "lorasc/eval/report.hpp"
#include "lorasc/streams.hpp"

namespace lorasc {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs are written in host order");

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'L', 'O', 'R', 'A', 'S', 'C', 'C', 'K'};
constexpr std::size_t kPrefix = 8 + 4 + 8;

template <typename T>
constexpr const char* dtype_name() {
    return sizeof(T) == 4 ? "f32" : "f64";
}

std::uint64_t fnv(const char* data, std::size_t n) {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t i = 0; i < n; ++i) h = (h ^ static_cast<unsigned char>(data[i])) * 1099511628211ULL;
    return h;
}

std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

class Writer {
public:
    template <typename U>
    void add(const std::string& name, const Matrix<U>& m) {
        const std::size_t nbytes = m.values().size() * sizeof(U);
        index_.push_back(json{{"name", name},
                              {"dtype", dtype_name<U>()},
                              {"shape", {m.rows(), m.cols()}},
                              {"offset", payload_.size()},
                              {"nbytes", nbytes}});
        const auto* p = reinterpret_cast<const char*>(m.values().data());
        payload_.insert(payload_.end(), p, p + nbytes);
    }
    json index() const { return index_; }
    const std::string& payload() const { return payload_; }

private:
    json index_ = json::array();
    std::string payload_;
};

class Reader {
public:
    Reader(const json& index, const char* payload, std::size_t payload_size, std::size_t payload_offset) {
        for (const auto& e : index) {
            Slot s;
            s.dtype = e.at("dtype").get<std::string>();
            s.rows = e.at("shape").at(0).get<std::size_t>();
            s.cols = e.at("shape").at(1).get<std::size_t>();
            s.offset = e.at("offset").get<std::size_t>();
            s.nbytes = e.at("nbytes").get<std::size_t>();
            const std::string name = e.at("name").get<std::string>();
            const std::size_t width = s.dtype == "f32" ? 4 : s.dtype == "f64" ? 8 : 0;
            if (width == 0 || s.nbytes != s.rows * s.cols * width) {
                throw IntegrityError("checkpoint tensor '" + name + "': dtype/shape disagree with " +
                                     std::to_string(s.nbytes) + " bytes");
            }
            if (s.offset > payload_size || s.nbytes > payload_size - s.offset) {
                throw IntegrityError("checkpoint truncated: tensor '" + name + "' needs bytes up to offset " +
                                     std::to_string(payload_offset + s.offset + s.nbytes) + ", file ends at " +
                                     std::to_string(payload_offset + payload_size));
            }
            s.data = payload + s.offset;
            slots_.emplace(name, s);
        }
    }

    bool has(const std::string& name) const { return slots_.count(name) != 0; }

    template <typename U>
    Matrix<U> get(const std::string& name) const {
        auto it = slots_.find(name);
        if (it == slots_.end()) {
            throw IntegrityError("checkpoint is missing tensor '" + name + "'");
        }
        const Slot& s = it->second;
        if (s.dtype != dtype_name<U>()) {
            throw IntegrityError("checkpoint tensor '" + name + "' is " + s.dtype + ", expected " + dtype_name<U>());
        }
        std::vector<U> v(s.rows * s.cols);
        std::memcpy(v.data(), s.data, s.nbytes);
        return Matrix<U>(s.rows, s.cols, std::move(v));
    }

private:
    struct Slot {
        std::string dtype;
        std::size_t rows = 0, cols = 0, offset = 0, nbytes = 0;
        const char* data = nullptr;
    };
    std::map<std::string, Slot> slots_;
};

struct RawFile {
    std::uint32_t version = 0;
    json header;
    std::string bytes;
    std::size_t payload_offset = 0;
};

RawFile read_raw(const std::filesystem::path& path, bool need_payload) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint '" + path.string() + "'");
    }
    RawFile f;
    f.bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    const auto& b = f.bytes;
    if (b.size() < kPrefix) {
        throw IntegrityError("checkpoint truncated at offset " + std::to_string(b.size()) + ": prefix needs " +
                             std::to_string(kPrefix) + " bytes");
    }
    if (std::memcmp(b.data(), kMagic, 8) != 0) {
        throw IntegrityError("not a checkpoint: bad magic at offset 0");
    }
    std::memcpy(&f.version, b.data() + 8, 4);
    if (f.version != kCheckpointVersion) {
        throw IntegrityError("checkpoint version " + std::to_string(f.version) +
                             " is not supported (this build reads version " + std::to_string(kCheckpointVersion) +
                             ")");
    }
    std::uint64_t header_len = 0;
    std::memcpy(&header_len, b.data() + 12, 8);
    if (header_len > b.size() - kPrefix) {
        throw IntegrityError("checkpoint truncated: header of " + std::to_string(header_len) +
                             " bytes at offset 20 runs past end of file at offset " + std::to_string(b.size()));
    }
    try {
        f.header = json::parse(b.begin() + kPrefix, b.begin() + static_cast<std::ptrdiff_t>(kPrefix + header_len));
    } catch (const json::exception& e) {
        throw IntegrityError("corrupt checkpoint header at offset 20: " + std::string(e.what()));
    }
    f.payload_offset = kPrefix + header_len;
    if (need_payload) {
        const std::size_t want = f.header.at("payload_bytes").get<std::size_t>();
        const std::size_t have = b.size() - f.payload_offset;
        if (have < want) {
            throw IntegrityError("checkpoint truncated: payload ends at offset " + std::to_string(b.size()) +
                                 ", expected " + std::to_string(f.payload_offset + want));
        }
        if (have > want) {
            throw IntegrityError("checkpoint has " + std::to_string(have - want) + " trailing bytes after offset " +
                                 std::to_string(f.payload_offset + want));
        }
        if (hex(fnv(b.data() + f.payload_offset, want)) != f.header.at("payload_checksum").get<std::string>()) {
            throw IntegrityError("checkpoint payload checksum mismatch (payload starts at offset " +
                                 std::to_string(f.payload_offset) + ")");
        }
    }
    return f;
}

std::string run_kind_name(RunKind k) {
    return k == RunKind::Lorasc ? "lorasc" : k == RunKind::Cola ? "cola" : "vanilla";
}

template <typename T>
json pair_meta(const std::vector<LoraPair<T>>& pairs) {
    json out = json::array();
    for (const auto& p : pairs) {
        out.push_back(json{{"target", p.target}, {"rank", p.rank}, {"scaling", static_cast<double>(p.scaling)}});
    }
    return out;
}

json model_to_json(const ModelConfig& m) {
    return json{{"mode", std::string(to_string(m.mode))},
                {"depth", m.depth},
                {"width", m.width},
                {"heads", m.heads},
                {"input_dim", m.input_dim},
                {"output_dim", m.output_dim},
                {"vocab", m.vocab},
                {"seq_len", m.seq_len},
                {"seed", m.seed}};
}

ModelConfig model_from_json(const json& j) {
    ModelConfig m;
    m.mode = parse_model_mode(j.at("mode").get<std::string>());
    m.depth = j.at("depth").get<std::size_t>();
    m.width = j.at("width").get<std::size_t>();
    m.heads = j.at("heads").get<std::size_t>();
    m.input_dim = j.at("input_dim").get<std::size_t>();
    m.output_dim = j.at("output_dim").get<std::size_t>();
    m.vocab = j.at("vocab").get<std::size_t>();
    m.seq_len = j.at("seq_len").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    return m;
}

json schedule_to_json(const Schedule& s) {
    return json{{"kind", std::string(to_string(s.kind))},
                {"lr_start", s.lr_start},
                {"lr_end", s.lr_end},
                {"total_steps", s.total_steps}};
}

Schedule schedule_from_json(const json& j) {
    Schedule s;
    s.kind = parse_schedule_kind(j.at("kind").get<std::string>());
    s.lr_start = j.at("lr_start").get<double>();
    s.lr_end = j.at("lr_end").get<double>();
    s.total_steps = j.at("total_steps").get<std::size_t>();
    return s;
}

json cascade_to_json(const CascadeConfig& c) {
    return json{{"alpha", c.alpha},
                {"lambda", c.lambda},
                {"epochs", c.epochs},
                {"steps_per_expert", c.steps_per_expert},
                {"batch_size", c.batch_size},
                {"rank", c.rank},
                {"lora_alpha", c.lora_alpha},
                {"ladder", std::string(to_string(c.ladder))},
                {"baseline", std::string(to_string(c.baseline))},
                {"discard_noise", c.discard_noise},
                {"b_multiplier", c.lr_policy.b_multiplier},
                {"lr_multiplier", c.lr_multiplier},
                {"schedule", schedule_to_json(c.schedule)},
                {"adamw",
                 json{{"beta1", c.adamw.beta1},
                      {"beta2", c.adamw.beta2},
                      {"eps", c.adamw.eps},
                      {"weight_decay", c.adamw.weight_decay}}},
                {"targets", c.targets},
                {"seed", c.seed},
                {"run_id", c.run_id}};
}

CascadeConfig cascade_from_json(const json& j) {
    CascadeConfig c;
    c.alpha = j.at("alpha").get<double>();
    c.lambda = j.at("lambda").get<double>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.steps_per_expert = j.at("steps_per_expert").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.rank = j.at("rank").get<std::size_t>();
    c.lora_alpha = j.at("lora_alpha").get<double>();
    c.ladder = parse_ladder(j.at("ladder").get<std::string>());
    c.baseline = parse_baseline(j.at("baseline").get<std::string>());
    c.discard_noise = j.at("discard_noise").get<bool>();
    c.lr_policy.b_multiplier = j.at("b_multiplier").get<double>();
    c.lr_multiplier = j.at("lr_multiplier").get<double>();
    c.schedule = schedule_from_json(j.at("schedule"));
    const auto& a = j.at("adamw");
    c.adamw.beta1 = a.at("beta1").get<double>();
    c.adamw.beta2 = a.at("beta2").get<double>();
    c.adamw.eps = a.at("eps").get<double>();
    c.adamw.weight_decay = a.at("weight_decay").get<double>();
    c.targets = j.at("targets").get<std::vector<std::string>>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.run_id = j.at("run_id").get<std::string>();
    return c;
}

}  // namespace

template <typename T>
void save_checkpoint(const RunState<T>& s, const std::string& config_text, const std::filesystem::path& path) {
    Writer w;
    for (const auto& [name, m] : s.backbone.params()) w.add("backbone/" + name, m);
    for (const auto& [name, m] : s.initial.params()) w.add("initial/" + name, m);
    for (std::size_t i = 0; i < s.expert.slow.size(); ++i) {
        w.add("slow/" + std::to_string(i) + "/a", s.expert.slow[i].a);
        w.add("slow/" + std::to_string(i) + "/b", s.expert.slow[i].b);
    }
    for (std::size_t i = 0; i < s.expert.fast.size(); ++i) {
        w.add("fast/" + std::to_string(i) + "/a", s.expert.fast[i].a);
        w.add("fast/" + std::to_string(i) + "/b", s.expert.fast[i].b);
    }
    for (std::size_t i = 0; i < s.optimizer.m.size(); ++i) {
        w.add("optim/m/" + std::to_string(i), s.optimizer.m[i]);
        w.add("optim/v/" + std::to_string(i), s.optimizer.v[i]);
    }
    for (std::size_t i = 0; i < s.ledger.noise_sum.size(); ++i) {
        w.add("ledger/noise/" + std::to_string(i), s.ledger.noise_sum[i]);
        w.add("ledger/slow/" + std::to_string(i), s.ledger.slow_sum[i]);
    }
    for (std::size_t i = 0; i < s.clean.size(); ++i) w.add("clean/" + std::to_string(i), s.clean[i]);

    json metrics = json::array();
    for (const auto& r : s.metrics) metrics.push_back(detail::record_to_json(r));

    json h;
    h["precision"] = dtype_name<T>();
    h["config_text"] = config_text;
    h["config_digest"] = hex(config_digest(config_text));
    h["run_id"] = s.config.run_id;
    h["seed"] = s.config.seed;
    h["ladder"] = std::string(to_string(s.config.ladder));
    h["baseline"] = std::string(to_string(s.config.baseline));
    h["model"] = model_to_json(s.backbone.config());
    h["cascade"] = cascade_to_json(s.config);
    h["kind"] = run_kind_name(s.kind);
    h["targets"] = s.targets;
    h["steps_per_epoch"] = s.steps_per_epoch;
    h["total_steps"] = s.total_steps;
    h["expert_steps"] = s.expert_steps;
    h["expert_index"] = s.expert_index;
    h["global_step"] = s.global_step;
    h["local_step"] = s.local_step;
    h["expert_active"] = s.expert_active;
    h["finished"] = s.finished;
    h["expert_epoch"] = s.expert.epoch;
    h["slow"] = pair_meta(s.expert.slow);
    h["fast"] = pair_meta(s.expert.fast);
    h["schedule"] = schedule_to_json(s.schedule);
    h["optimizer"] = json{{"step", s.optimizer.step}, {"names", s.optimizer.names}, {"lr_scale", s.optimizer.lr_scale}};
    h["rng"] = json{{"init", s.init_rng.counter()}, {"noise", s.noise_rng.counter()}};
    h["ledger"] = json{{"last_sigma", s.ledger.last_sigma}, {"noise_events", s.ledger.noise_events}};
    h["metrics"] = std::move(metrics);
    h["trace"] = s.trace;
    h["audit"] = s.audit;
    h["tensors"] = w.index();
    h["payload_bytes"] = w.payload().size();
    h["payload_checksum"] = hex(fnv(w.payload().data(), w.payload().size()));

    const std::string header = h.dump();
    std::string out(kMagic, 8);
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t len = header.size();
    out.append(reinterpret_cast<const char*>(&version), 4);
    out.append(reinterpret_cast<const char*>(&len), 8);
    out += header;
    out += w.payload();
    write_file_atomic(path, out);
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
    const RawFile f = read_raw(path, true);
    const json& h = f.header;
    try {
        if (h.at("precision").get<std::string>() != dtype_name<T>()) {
            throw ConfigError("checkpoint precision is " + h.at("precision").get<std::string>() + ", requested " +
                              dtype_name<T>());
        }
        Reader rd(h.at("tensors"), f.bytes.data() + f.payload_offset, f.bytes.size() - f.payload_offset,
                  f.payload_offset);
        Checkpoint<T> ck;
        ck.config_text = h.at("config_text").get<std::string>();
        if (hex(config_digest(ck.config_text)) != h.at("config_digest").get<std::string>()) {
            throw IntegrityError("checkpoint config digest does not match its config text");
        }
        RunState<T>& s = ck.state;
        s.config = cascade_from_json(h.at("cascade"));
        const ModelConfig model = model_from_json(h.at("model"));
        s.kind = run_kind(s.config);
        if (run_kind_name(s.kind) != h.at("kind").get<std::string>()) {
            throw IntegrityError("checkpoint run kind disagrees with its ladder/baseline");
        }
        s.targets = h.at("targets").get<std::vector<std::string>>();
        s.steps_per_epoch = h.at("steps_per_epoch").get<std::size_t>();
        s.total_steps = h.at("total_steps").get<std::size_t>();
        s.expert_steps = h.at("expert_steps").get<std::vector<std::size_t>>();
        s.expert_index = h.at("expert_index").get<std::size_t>();
        s.global_step = h.at("global_step").get<std::size_t>();
        s.local_step = h.at("local_step").get<std::size_t>();
        s.expert_active = h.at("expert_active").get<bool>();
        s.finished = h.at("finished").get<bool>();

        std::map<std::string, Matrix<T>> bb, init;
        for (const auto& e : h.at("tensors")) {
            const auto name = e.at("name").get<std::string>();
            if (name.rfind("backbone/", 0) == 0) bb.emplace(name.substr(9), rd.get<T>(name));
            if (name.rfind("initial/", 0) == 0) init.emplace(name.substr(8), rd.get<T>(name));
        }
        s.backbone = Backbone<T>(model, std::move(bb));
        s.initial = Backbone<T>(model, std::move(init));

        auto pairs = [&](const char* group) {
            std::vector<LoraPair<T>> out;
            const auto& meta = h.at(group);
            for (std::size_t i = 0; i < meta.size(); ++i) {
                LoraPair<T> p;
                p.target = meta[i].at("target").get<std::string>();
                p.rank = meta[i].at("rank").get<std::size_t>();
                p.scaling = static_cast<T>(meta[i].at("scaling").get<double>());
                p.a = rd.get<T>(std::string(group) + "/" + std::to_string(i) + "/a");
                p.b = rd.get<T>(std::string(group) + "/" + std::to_string(i) + "/b");
                out.push_back(std::move(p));
            }
            return out;
        };
        s.expert.slow = pairs("slow");
        s.expert.fast = pairs("fast");
        s.expert.epoch = h.at("expert_epoch").get<std::size_t>();

        s.schedule = schedule_from_json(h.at("schedule"));

        const auto& opt = h.at("optimizer");
        s.optimizer.config = s.config.adamw;
        s.optimizer.step = opt.at("step").get<std::uint64_t>();
        s.optimizer.names = opt.at("names").get<std::vector<std::string>>();
        s.optimizer.lr_scale = opt.at("lr_scale").get<std::vector<double>>();
        for (std::size_t i = 0; i < s.optimizer.names.size(); ++i) {
            s.optimizer.m.push_back(rd.get<T>("optim/m/" + std::to_string(i)));
            s.optimizer.v.push_back(rd.get<T>("optim/v/" + std::to_string(i)));
        }

        s.init_rng = Rng(s.config.seed, streams::kAdapterInit);
        s.init_rng.set_counter(h.at("rng").at("init").get<std::uint64_t>());
        s.noise_rng = Rng(s.config.seed, streams::kNoise);
        s.noise_rng.set_counter(h.at("rng").at("noise").get<std::uint64_t>());

        if (!rd.has("ledger/noise/0") && !s.targets.empty()) {
            throw IntegrityError("checkpoint has no noise/merge ledger");
        }
        for (std::size_t i = 0; i < s.targets.size(); ++i) {
            s.ledger.noise_sum.push_back(rd.get<double>("ledger/noise/" + std::to_string(i)));
            s.ledger.slow_sum.push_back(rd.get<double>("ledger/slow/" + std::to_string(i)));
        }
        s.ledger.last_sigma = h.at("ledger").at("last_sigma").get<std::vector<double>>();
        s.ledger.noise_events = h.at("ledger").at("noise_events").get<std::size_t>();
        for (std::size_t i = 0; rd.has("clean/" + std::to_string(i)); ++i) {
            s.clean.push_back(rd.get<T>("clean/" + std::to_string(i)));
        }
        for (const auto& r : h.at("metrics")) s.metrics.push_back(detail::record_from_json(r));
        s.trace = h.at("trace").get<std::vector<std::string>>();
        s.audit = h.at("audit").get<std::vector<double>>();
        return ck;
    } catch (const json::exception& e) {
        throw IntegrityError("corrupt checkpoint header at offset 20: " + std::string(e.what()));
    }
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
    const RawFile f = read_raw(path, false);
    CheckpointInfo info;
    info.version = f.version;
    try {
        info.precision = f.header.at("precision").get<std::string>() == "f64" ? Precision::F64 : Precision::F32;
        info.config_digest = std::stoull(f.header.at("config_digest").get<std::string>(), nullptr, 16);
    } catch (const std::exception& e) {
        throw IntegrityError("corrupt checkpoint header at offset 20: " + std::string(e.what()));
    }
    info.header_json = f.header.dump(2);
    return info;
}

template void save_checkpoint(const RunState<float>&, const std::string&, const std::filesystem::path&);
template void save_checkpoint(const RunState<double>&, const std::string&, const std::filesystem::path&);
template Checkpoint<float> load_checkpoint<float>(const std::filesystem::path&);
template Checkpoint<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace lorasc
