#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "lorasc/errors.hpp"
#include "lorasc/harness/commands.hpp"
#include "lorasc/harness/config.hpp"

namespace {

using Overrides = std::vector<std::pair<std::string, std::string>>;

struct RunFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<double> alpha, lambda, lr, lr_plus_ratio;
    std::optional<std::size_t> rank, steps_per_expert, epochs;
    std::optional<std::string> ladder, baseline, out, precision;
    bool discard_noise = false;
    std::vector<std::string> set;
};

void add_run_flags(CLI::App* app, RunFlags& f) {
    app->add_option("--config", f.config, "key = value config file");
    app->add_option("--seed", f.seed, "run seed (replaces run.seeds)");
    app->add_option("--alpha", f.alpha, "slow-fast EMA retention in [0, 1]");
    app->add_option("--lambda", f.lambda, "noise intensity >= 0");
    app->add_option("--rank", f.rank, "LoRA rank");
    app->add_option("--steps-per-expert", f.steps_per_expert, "optimizer steps per expert (0: one per epoch)");
    app->add_option("--epochs", f.epochs, "data epochs");
    app->add_option("--ladder", f.ladder, "vanilla | cascade | slow | full");
    app->add_option("--baseline", f.baseline, "none | cola");
    app->add_option("--lr", f.lr, "base learning rate");
    app->add_option("--lr-plus-ratio", f.lr_plus_ratio, "B/A learning-rate ratio (LoRA+ uses 16)");
    app->add_flag("--discard-noise", f.discard_noise, "remove each expert's noise before its merge");
    app->add_option("--out", f.out, "output directory");
    app->add_option("--precision", f.precision, "f32 | f64");
    app->add_option("--set", f.set, "extra key=value override, repeatable");
}

lorasc::RunConfig resolve(const RunFlags& f) {
    Overrides ov;
    if (const char* env = std::getenv("LORASC_SEED"); env && *env) ov.emplace_back("run.seeds", env);
    auto num = [](auto v) {
        std::ostringstream ss;
        ss.precision(17);
        ss << v;
        return ss.str();
    };
    if (f.seed) ov.emplace_back("run.seeds", std::to_string(*f.seed));
    if (f.alpha) ov.emplace_back("cascade.alpha", num(*f.alpha));
    if (f.lambda) ov.emplace_back("cascade.lambda", num(*f.lambda));
    if (f.rank) ov.emplace_back("cascade.rank", std::to_string(*f.rank));
    if (f.steps_per_expert) ov.emplace_back("cascade.steps_per_expert", std::to_string(*f.steps_per_expert));
    if (f.epochs) ov.emplace_back("cascade.epochs", std::to_string(*f.epochs));
    if (f.ladder) ov.emplace_back("cascade.ladder", *f.ladder);
    if (f.baseline) ov.emplace_back("cascade.baseline", *f.baseline);
    if (f.lr) ov.emplace_back("optim.lr", num(*f.lr));
    if (f.lr_plus_ratio) ov.emplace_back("optim.lr_plus_ratio", num(*f.lr_plus_ratio));
    if (f.discard_noise) ov.emplace_back("cascade.discard_noise", "true");
    if (f.out) ov.emplace_back("run.out", *f.out);
    if (f.precision) ov.emplace_back("run.precision", *f.precision);
    for (const auto& kv : f.set) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw lorasc::ConfigError("--set expects key=value, got '" + kv + "'");
        ov.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (f.config.empty()) return lorasc::parse_config_text("", ov);
    return lorasc::parse_config(f.config, ov);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cascading low-rank adapter training with slow-fast averaging and noisy tuning"};
    app.require_subcommand(1);

    RunFlags train_flags;
    std::optional<std::size_t> stop_after;
    std::string resume;
    auto* train = app.add_subcommand("train", "train one run per seed");
    add_run_flags(train, train_flags);
    train->add_option("--stop-after-epoch", stop_after, "stop after N epochs and leave a resumable checkpoint");
    train->add_option("--resume", resume, "continue from a checkpoint")->check(CLI::ExistingFile);

    RunFlags ablate_flags;
    auto* ablate = app.add_subcommand("ablate", "run the vanilla / cascade / slow / full ladder for every seed");
    add_run_flags(ablate, ablate_flags);

    std::string eval_ck, eval_out;
    auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on val, test and corrupted splits");
    evaluate->add_option("checkpoint", eval_ck)->required()->check(CLI::ExistingFile);
    evaluate->add_option("--out", eval_out, "report path (.csv or .jsonl)");

    std::string rank_ck, rank_out;
    double tau = 1e-6;
    auto* rank = app.add_subcommand("rank", "effective rank of each target's cumulative merged delta");
    rank->add_option("checkpoint", rank_ck)->required()->check(CLI::ExistingFile);
    rank->add_option("--tau", tau, "relative singular-value threshold");
    rank->add_option("--out", rank_out, "CSV path");

    std::string inspect_ck;
    auto* inspect = app.add_subcommand("inspect", "print a checkpoint header");
    inspect->add_option("checkpoint", inspect_ck)->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : lorasc::kExitConfig;
    }

    try {
        if (*train) {
            lorasc::TrainOptions opt;
            opt.stop_after_epoch = stop_after;
            opt.resume = resume;
            const auto cfg = resume.empty() ? resolve(train_flags) : lorasc::RunConfig{};
            return lorasc::cmd_train(cfg, opt, std::cout);
        }
        if (*ablate) {
            return lorasc::cmd_ablate(resolve(ablate_flags), std::cout);
        }
        if (*evaluate) {
            const std::filesystem::path ck = eval_ck;
            return lorasc::cmd_evaluate(ck, eval_out.empty() ? ck.parent_path() / "eval.csv" : std::filesystem::path(eval_out), std::cout);
        }
        if (*rank) {
            const std::filesystem::path ck = rank_ck;
            return lorasc::cmd_rank(ck, tau, rank_out.empty() ? ck.parent_path() / "rank.csv" : std::filesystem::path(rank_out), std::cout);
        }
        if (*inspect) {
            return lorasc::cmd_inspect(inspect_ck, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "lorasc: " << e.what() << "\n";
        return lorasc::exit_code_for(e);
    }
    return lorasc::kExitOk;
}
