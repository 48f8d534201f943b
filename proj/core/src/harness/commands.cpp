#include "lorasc/harness/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lorasc/errors.hpp"
#include "lorasc/eval/ladder.hpp"
#include "lorasc/eval/report.hpp"
#include "lorasc/harness/checkpoint.hpp"
#include "lorasc/harness/task.hpp"

namespace lorasc {

int exit_code_for(const std::exception& e) noexcept {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ArgumentError*>(&e) ||
        dynamic_cast<const SchemaError*>(&e) || dynamic_cast<const LookupError*>(&e)) {
        return kExitConfig;
    }
    if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const IntegrityError*>(&e) ||
        dynamic_cast<const IngestionError*>(&e)) {
        return kExitIo;
    }
    return kExitTraining;
}

namespace {

namespace fs = std::filesystem;

class DirLock {
public:
    explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) {
            throw IoError("cannot create run directory '" + dir.string() + "': " + ec.message());
        }
        std::FILE* f = std::fopen(path_.c_str(), "wx");
        if (!f) {
            throw IoError("run directory '" + dir.string() + "' is locked by another writer (remove " +
                          path_.string() + " if it is stale)");
        }
        std::fclose(f);
    }
    ~DirLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    fs::path path_;
};

void write_text(const fs::path& path, const std::string& text) { write_file_atomic(path, text); }

void remove_marker(const fs::path& path) {
    std::error_code ec;
    fs::remove(path, ec);
}

RunConfig single_seed(RunConfig c, std::uint64_t seed) {
    c.seeds = {seed};
    return c;
}

template <typename T>
const MetricsRecord* find_final(const RunState<T>& s, const std::string& split) {
    for (auto it = s.metrics.rbegin(); it != s.metrics.rend(); ++it) {
        if (it->split == split) return &*it;
    }
    return nullptr;
}

template <typename T>
void train_seed(const RunConfig& rc, std::uint64_t seed, const TrainOptions& opt, std::ostream& log) {
    const RunConfig one = single_seed(rc, seed);
    const std::string config_text = config_to_text(one);
    const fs::path dir = one.out / ("seed-" + std::to_string(seed));
    DirLock lock(dir);
    remove_marker(dir / "FAILED");
    try {
        const RunData data = build_run_data(one);
        RunState<T> state;
        if (!opt.resume.empty()) {
            state = load_checkpoint<T>(opt.resume).state;
            log << "seed " << seed << ": resumed at epoch " << completed_epochs(state) << " (step "
                << state.global_step << ")\n";
        } else {
            state = start_run(cascade_for(one, seed), build_backbone<T>(one), data);
        }
        bool finished = state.finished;
        if (!finished && !(opt.stop_after_epoch && *opt.stop_after_epoch == 0)) {
            finished = advance(state, data, opt.stop_after_epoch.value_or(0));
        }
        if (!state.metrics.empty()) {
            emit_report(state.metrics, ReportFormat::Csv, dir / "metrics.csv");
        }
        write_text(dir / "config.txt", config_text);
        save_checkpoint(state, config_text, dir / "checkpoint.bin");
        if (!finished) {
            write_text(dir / "PARTIAL", "stopped after epoch " + std::to_string(completed_epochs(state)) + " of " +
                                            std::to_string(state.config.epochs) + "\n");
            log << "seed " << seed << ": stopped after epoch " << completed_epochs(state) << ", checkpoint "
                << (dir / "checkpoint.bin").string() << "\n";
            return;
        }
        remove_marker(dir / "PARTIAL");
        const auto* val = find_final(state, "val");
        const auto* test = find_final(state, "test");
        const double audit = state.audit.empty() ? 0.0 : *std::max_element(state.audit.begin(), state.audit.end());
        log << "seed " << seed << ": " << to_string(state.config.ladder) << " done";
        if (val) log << ", val loss " << val->loss;
        if (test) log << ", test loss " << test->loss;
        log << ", telescoping residual " << audit << "\n";
    } catch (const std::exception& e) {
        write_text(dir / "FAILED", std::string(e.what()) + "\n");
        throw;
    }
}

template <typename T>
void train_all(const RunConfig& rc, const TrainOptions& opt, std::ostream& log) {
    for (auto seed : rc.seeds) train_seed<T>(rc, seed, opt, log);
}

template <typename T>
void ablate(const RunConfig& rc, std::ostream& log) {
    DirLock lock(rc.out);
    const RunData data = build_run_data(rc);
    const Backbone<T> backbone = build_backbone<T>(rc);
    const auto rep = ablation_ladder(rc.cascade, backbone, data, rc.seeds);
    for (const auto& run : rep.runs) {
        RunConfig one = single_seed(rc, run.seed);
        one.cascade.ladder = run.level;
        one.cascade.baseline = Baseline::None;
        const fs::path dir = rc.out / (std::string(to_string(run.level)) + "-s" + std::to_string(run.seed));
        fs::create_directories(dir);
        emit_report(run.metrics, ReportFormat::Csv, dir / "metrics.csv");
        write_text(dir / "config.txt", config_to_text(one));
    }
    emit_ladder(rep.rows, ReportFormat::Csv, rc.out / "ladder.csv");
    for (const auto& row : rep.rows) {
        if (row.split != "val") continue;
        log << row.level << " seed " << row.seed << ": val loss " << row.loss << " (mean " << row.loss_mean
            << ", std " << row.loss_std << ")\n";
    }
    log << "ladder report: " << (rc.out / "ladder.csv").string() << "\n";
}

template <typename T>
void evaluate_checkpoint(const fs::path& path, const fs::path& out, std::ostream& log) {
    const auto ck = load_checkpoint<T>(path);
    const RunConfig rc = parse_config_text(ck.config_text);
    const RunData data = build_run_data(rc);
    const auto& s = ck.state;
    std::span<const LoraPair<T>> live;
    if (s.expert_active) live = std::span<const LoraPair<T>>(s.expert.fast);
    std::vector<MetricsRecord> rows;
    auto add = [&](const Dataset& d, const std::string& split) {
        if (d.empty()) return;
        MetricsRecord r = evaluate(s.backbone, live, d, split);
        r.run_id = s.config.run_id;
        r.epoch = completed_epochs(s);
        r.step = s.global_step;
        rows.push_back(r);
        log << split << ": loss " << r.loss;
        if (r.accuracy) log << ", accuracy " << *r.accuracy;
        log << "\n";
    };
    add(data.val, "val");
    add(data.test, "test");
    for (const auto& [name, d] : data.extra_eval) add(d, name);
    emit_report(rows, report_format_for(out), out);
}

template <typename T>
void rank_checkpoint(const fs::path& path, double tau, const fs::path& out, std::ostream& log) {
    const auto ck = load_checkpoint<T>(path);
    const auto& s = ck.state;
    const double residual = telescoping_residual(s);
    std::ostringstream csv;
    csv << "target,tau,rank,merges,rank_bound,telescoping_residual,singular_values\n";
    for (std::size_t i = 0; i < s.targets.size(); ++i) {
        RankReport rep = effective_rank(s.ledger.slow_sum[i], tau);
        rep.target = s.targets[i];
        rep.epoch = s.expert_index;
        const std::size_t d = s.ledger.slow_sum[i].rows(), k = s.ledger.slow_sum[i].cols();
        const std::size_t bound = std::min({s.expert_index * s.config.rank, d, k});
        csv << rep.target << ',' << tau << ',' << rep.rank << ',' << s.expert_index << ',' << bound << ','
            << residual << ',';
        char buf[32];
        for (std::size_t j = 0; j < rep.singular_values.size(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", rep.singular_values[j]);
            csv << (j ? ";" : "") << buf;
        }
        csv << '\n';
        log << rep.target << ": effective rank " << rep.rank << " after " << s.expert_index << " merges (bound "
            << bound << ")\n";
    }
    log << "telescoping residual " << residual << "\n";
    write_file_atomic(out, csv.str());
}

}  // namespace

int cmd_train(const RunConfig& config, const TrainOptions& options, std::ostream& log) {
    if (!options.resume.empty()) {
        const auto info = read_checkpoint_info(options.resume);
        const auto header = nlohmann::json::parse(info.header_json);
        const RunConfig rc = parse_config_text(header.at("config_text").get<std::string>());
        if (info.precision == Precision::F64) {
            train_all<double>(rc, options, log);
        } else {
            train_all<float>(rc, options, log);
        }
        return kExitOk;
    }
    config.validate();
    if (config.precision == Precision::F64) {
        train_all<double>(config, options, log);
    } else {
        train_all<float>(config, options, log);
    }
    return kExitOk;
}

int cmd_ablate(const RunConfig& config, std::ostream& log) {
    config.validate();
    if (config.precision == Precision::F64) {
        ablate<double>(config, log);
    } else {
        ablate<float>(config, log);
    }
    return kExitOk;
}

int cmd_evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& out, std::ostream& log) {
    if (read_checkpoint_info(checkpoint).precision == Precision::F64) {
        evaluate_checkpoint<double>(checkpoint, out, log);
    } else {
        evaluate_checkpoint<float>(checkpoint, out, log);
    }
    return kExitOk;
}

int cmd_rank(const std::filesystem::path& checkpoint, double tau, const std::filesystem::path& out,
             std::ostream& log) {
    if (!(tau > 0.0 && tau < 1.0)) {
        throw ArgumentError("--tau must lie in (0, 1)");
    }
    if (read_checkpoint_info(checkpoint).precision == Precision::F64) {
        rank_checkpoint<double>(checkpoint, tau, out, log);
    } else {
        rank_checkpoint<float>(checkpoint, tau, out, log);
    }
    return kExitOk;
}

int cmd_inspect(const std::filesystem::path& checkpoint, std::ostream& log) {
    const auto info = read_checkpoint_info(checkpoint);
    auto h = nlohmann::json::parse(info.header_json);
    log << "version " << info.version << ", precision " << to_string(info.precision) << "\n";
    h["metrics"] = std::to_string(h["metrics"].size()) + " records";
    h["tensors"] = std::to_string(h["tensors"].size()) + " tensors";
    h.erase("config_text");
    log << h.dump(2) << "\n";
    return kExitOk;
}

}  // namespace lorasc
