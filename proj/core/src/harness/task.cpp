#include "lorasc/harness/task.hpp"

#include "lorasc/data/corrupt.hpp"
#include "lorasc/data/generators.hpp"
#include "lorasc/data/table.hpp"
#include "lorasc/errors.hpp"

namespace lorasc {

namespace {

MatrixD broad_teacher(const RunConfig& c) {
    return make_teacher(c.data.seed, c.model.input_dim, c.model.output_dim, c.data.teacher_rank);
}

Dataset pool_for(const RunConfig& c) {
    const auto& d = c.data;
    if (d.source == "teacher") {
        const MatrixD narrow = shift_teacher(broad_teacher(c), d.seed + 2, d.shift_rank, d.shift_scale);
        return sample_teacher_data(narrow, c.split.total(), d.label_noise, d.seed + 3);
    }
    if (d.source == "sequence") {
        return gen_sequence_task(d.seed + 3, c.split.total(), c.model.seq_len, c.model.vocab, d.sequence_kind);
    }
    TableSchema schema;
    if (c.model.mode == ModelMode::Mlp) {
        schema = TableSchema::with_default_columns(TaskKind::Regression, c.model.input_dim, c.model.output_dim, 0);
    } else {
        schema = TableSchema::with_default_columns(TaskKind::Sequence, c.model.seq_len, 0, c.model.vocab);
    }
    Dataset pool = load_table(d.path, d.format, schema);
    if (pool.size() != c.split.total()) {
        throw ConfigError("split: train + val + test = " + std::to_string(c.split.total()) + " but '" + d.path +
                          "' holds " + std::to_string(pool.size()) + " rows");
    }
    return pool;
}

}  // namespace

RunData build_run_data(const RunConfig& config) {
    const Splits s = split_dataset(pool_for(config), config.split);
    RunData out;
    out.train = s.train;
    out.val = s.val;
    out.test = s.test;
    for (std::size_t i = 0; i < config.corruptions.size(); ++i) {
        CorruptionSpec spec = config.corruptions[i];
        spec.seed = config.data.seed + 100 + i;
        if (!out.test.empty()) {
            out.extra_eval.emplace_back(corruption_label(spec), corrupt(out.test, spec));
        }
    }
    return out;
}

template <typename T>
Backbone<T> build_backbone(const RunConfig& config, PretrainResult* pretrain) {
    Backbone<T> backbone = build<T>(config.model);
    const auto& d = config.data;
    if (d.source == "table" || d.pretrain_steps == 0) {
        if (pretrain) *pretrain = PretrainResult{};
        return backbone;
    }
    Dataset broad;
    if (d.source == "teacher") {
        broad = sample_teacher_data(broad_teacher(config), d.pretrain_n, 0.0, d.seed + 1);
    } else {
        broad = gen_sequence_task(d.seed + 1, d.pretrain_n, config.model.seq_len, config.model.vocab, d.sequence_kind);
    }
    PretrainOptions opt;
    opt.steps = d.pretrain_steps;
    opt.batch_size = d.pretrain_batch;
    opt.lr = d.pretrain_lr;
    opt.seed = d.seed;
    return pretrain_backbone(std::move(backbone), broad, opt, pretrain);
}

CascadeConfig cascade_for(const RunConfig& config, std::uint64_t seed) {
    CascadeConfig c = config.cascade;
    c.seed = seed;
    c.run_id = "seed-" + std::to_string(seed);
    return c;
}

template Backbone<float> build_backbone<float>(const RunConfig&, PretrainResult*);
template Backbone<double> build_backbone<double>(const RunConfig&, PretrainResult*);

}  // namespace lorasc
