#include "lorasc/eval/ladder.hpp"

#include <cmath>
#include <map>

#include "lorasc/errors.hpp"

namespace lorasc {

namespace {

struct Moments {
    double mean = 0.0;
    double std = 0.0;
};

Moments moments(const std::vector<double>& xs) {
    Moments m;
    for (double x : xs) m.mean += x;
    m.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - m.mean) * (x - m.mean);
        m.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return m;
}

}  // namespace

std::vector<LadderRow> ladder_rows(const std::vector<LadderRun>& runs, std::size_t epochs) {
    std::vector<LadderRow> rows;
    for (const auto& run : runs) {
        for (const auto& r : run.metrics) {
            if (r.split == "train" || r.epoch != epochs) continue;
            LadderRow row;
            row.level = std::string(to_string(run.level));
            row.seed = run.seed;
            row.split = r.split;
            row.loss = r.loss;
            row.accuracy = r.accuracy;
            rows.push_back(std::move(row));
        }
    }
    std::map<std::pair<std::string, std::string>, std::vector<const LadderRow*>> groups;
    for (const auto& row : rows) {
        groups[{row.level, row.split}].push_back(&row);
    }
    std::map<std::pair<std::string, std::string>, std::pair<Moments, std::optional<Moments>>> stats;
    for (const auto& [key, members] : groups) {
        std::vector<double> losses, accs;
        for (const auto* m : members) {
            losses.push_back(m->loss);
            if (m->accuracy) accs.push_back(*m->accuracy);
        }
        std::optional<Moments> acc;
        if (accs.size() == members.size()) acc = moments(accs);
        stats[key] = {moments(losses), acc};
    }
    for (auto& row : rows) {
        const auto& [lm, am] = stats.at({row.level, row.split});
        row.loss_mean = lm.mean;
        row.loss_std = lm.std;
        if (am) {
            row.accuracy_mean = am->mean;
            row.accuracy_std = am->std;
        }
    }
    return rows;
}

template <typename T>
LadderReport ablation_ladder(const CascadeConfig& base, const Backbone<T>& backbone, const RunData& data,
                             const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) {
        throw ConfigError("ablation_ladder: no seeds");
    }
    LadderReport rep;
    for (auto seed : seeds) {
        for (Ladder level : kLadderLevels) {
            CascadeConfig c = base;
            c.ladder = level;
            c.baseline = Baseline::None;
            c.seed = seed;
            c.run_id = std::string(to_string(level)) + "-s" + std::to_string(seed);
            const std::string where = "ladder level " + std::string(to_string(level)) + ", seed " +
                                      std::to_string(seed) + ": ";
            try {
                auto state = run(c, backbone, data);
                rep.runs.push_back(LadderRun{level, seed, std::move(state.metrics)});
            } catch (const TrainingError& e) {
                throw TrainingError(where + e.what());
            } catch (const NumericError& e) {
                throw NumericError(where + e.what());
            } catch (const ConfigError& e) {
                throw ConfigError(where + e.what());
            }
        }
    }
    rep.rows = ladder_rows(rep.runs, base.epochs);
    return rep;
}

template LadderReport ablation_ladder(const CascadeConfig&, const Backbone<float>&, const RunData&,
                                      const std::vector<std::uint64_t>&);
template LadderReport ablation_ladder(const CascadeConfig&, const Backbone<double>&, const RunData&,
                                      const std::vector<std::uint64_t>&);

}  // namespace lorasc
