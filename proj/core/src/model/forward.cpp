#include "lorasc/model/forward.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lorasc/errors.hpp"
#include "lorasc/numkit/rng.hpp"
#include "lorasc/optim/adamw.hpp"
#include "lorasc/streams.hpp"

namespace lorasc {

namespace {

template <typename T>
class ForwardBuilder {
public:
    ForwardBuilder(const Backbone<T>& backbone, Tape<T>& tape, const Bindings<T>& bindings)
        : backbone_(backbone), tape_(tape), bindings_(bindings) {}

    Var<T> param(const std::string& name) {
        if (auto it = bindings_.params.find(name); it != bindings_.params.end()) {
            return it->second;
        }
        if (auto it = constants_.find(name); it != constants_.end()) {
            return it->second;
        }
        auto v = tape_.constant(backbone_.at(name));
        constants_.emplace(name, v);
        return v;
    }

    // x W^T (+ s (x A^T) B^T when `name` carries an adapter).
    Var<T> linear(Var<T> x, const std::string& name) {
        Var<T> w = param(name);
        Var<T> y = ad::matmul_nt(x, w);
        auto it = bindings_.adapters.find(name);
        if (it == bindings_.adapters.end()) {
            return y;
        }
        const auto& ad = it->second;
        const auto& wv = w.value();
        const auto& av = ad.a.value();
        const auto& bv = ad.b.value();
        if (av.cols() != wv.cols() || bv.rows() != wv.rows() || av.rows() != bv.cols()) {
            throw ShapeError("adapter for target '" + name + "': B " + shape_string(bv) + " * A " +
                             shape_string(av) + " does not conform to " + shape_string(wv));
        }
        Var<T> low = ad::matmul_nt(ad::matmul_nt(x, ad.a), ad.b);
        return ad::add(y, ad::scale(low, ad.scaling));
    }

    Var<T> affine(Var<T> x, const std::string& prefix) {
        return ad::add_row(linear(x, prefix + ".weight"), param(prefix + ".bias"));
    }

    Var<T> layer_norm(Var<T> x, const std::string& prefix) {
        return ad::layer_norm_rows(x, param(prefix + ".gain"), param(prefix + ".bias"));
    }

    Var<T> mlp(const MatrixD& inputs) {
        const auto& cfg = backbone_.config();
        if (inputs.cols() != cfg.input_dim) {
            throw ShapeError("forward: batch has " + std::to_string(inputs.cols()) +
                             " features, model expects " + std::to_string(cfg.input_dim));
        }
        Var<T> x = tape_.constant(inputs.template cast<T>());
        Var<T> h = ad::tanh(affine(x, "embed"));
        for (std::size_t l = 0; l < cfg.depth; ++l) {
            const std::string pre = "layers." + std::to_string(l) + ".";
            Var<T> u = ad::tanh(affine(h, pre + "fc1"));
            h = ad::add(h, affine(u, pre + "fc2"));
        }
        return affine(h, "head");
    }

    Var<T> transformer(const MatrixD& inputs) {
        const auto& cfg = backbone_.config();
        const std::size_t n = inputs.rows(), len = cfg.seq_len, d = cfg.width;
        const std::size_t dh = d / cfg.heads;
        if (inputs.cols() != len) {
            throw ShapeError("forward: batch has sequences of length " + std::to_string(inputs.cols()) +
                             ", model expects " + std::to_string(len));
        }
        std::vector<std::size_t> ids(n * len);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const double t = inputs.values()[i];
            if (t < 0 || t >= static_cast<double>(cfg.vocab) || t != std::floor(t)) {
                throw ShapeError("forward: token " + std::to_string(t) + " outside vocab of " +
                                 std::to_string(cfg.vocab));
            }
            ids[i] = static_cast<std::size_t>(t);
        }
        Var<T> h = ad::gather_rows(param("embed.weight"), std::span<const std::size_t>(ids));
        const T inv_sqrt = T{1} / static_cast<T>(std::sqrt(static_cast<double>(dh)));
        for (std::size_t l = 0; l < cfg.depth; ++l) {
            const std::string pre = "layers." + std::to_string(l) + ".";
            Var<T> a = layer_norm(h, pre + "ln1");
            Var<T> q = linear(a, pre + "attn.q.weight");
            Var<T> k = linear(a, pre + "attn.k.weight");
            Var<T> v = linear(a, pre + "attn.v.weight");
            std::vector<Var<T>> per_example;
            per_example.reserve(n);
            for (std::size_t e = 0; e < n; ++e) {
                Var<T> qe = ad::slice_rows(q, e * len, len);
                Var<T> ke = ad::slice_rows(k, e * len, len);
                Var<T> ve = ad::slice_rows(v, e * len, len);
                std::vector<Var<T>> per_head;
                per_head.reserve(cfg.heads);
                for (std::size_t hd = 0; hd < cfg.heads; ++hd) {
                    Var<T> qh = ad::slice_cols(qe, hd * dh, dh);
                    Var<T> kh = ad::slice_cols(ke, hd * dh, dh);
                    Var<T> vh = ad::slice_cols(ve, hd * dh, dh);
                    Var<T> p = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_sqrt));
                    per_head.push_back(ad::matmul(p, vh));
                }
                per_example.push_back(ad::concat_cols(std::span<const Var<T>>(per_head)));
            }
            Var<T> attn = ad::concat_rows(std::span<const Var<T>>(per_example));
            h = ad::add(h, linear(attn, pre + "attn.o.weight"));
            Var<T> b = layer_norm(h, pre + "ln2");
            Var<T> m = affine(ad::gelu(affine(b, pre + "mlp.fc1")), pre + "mlp.fc2");
            h = ad::add(h, m);
        }
        h = layer_norm(h, "final_ln");
        return affine(ad::mean_pool_rows(h, len), "head");
    }

private:
    const Backbone<T>& backbone_;
    Tape<T>& tape_;
    const Bindings<T>& bindings_;
    std::map<std::string, Var<T>> constants_;
};

}  // namespace

template <typename T>
Var<T> forward(const Backbone<T>& backbone, Tape<T>& tape, const Bindings<T>& bindings,
               const MatrixD& inputs) {
    if (inputs.rows() == 0) {
        throw ShapeError("forward: empty batch");
    }
    ForwardBuilder<T> fb(backbone, tape, bindings);
    return backbone.config().mode == ModelMode::Mlp ? fb.mlp(inputs) : fb.transformer(inputs);
}

template <typename T>
Var<T> task_loss(Var<T> outputs, const Dataset& batch) {
    switch (batch.kind) {
    case TaskKind::Regression:
        return ad::mse_loss(outputs, batch.targets.template cast<T>());
    case TaskKind::Classification:
    case TaskKind::Sequence:
        return ad::cross_entropy(outputs, std::span<const int>(batch.labels));
    }
    throw ConfigError("task_loss: unknown task kind");
}

template <typename T>
double dataset_loss(const Backbone<T>& backbone, const Dataset& data) {
    if (data.empty()) {
        throw ArgumentError("dataset_loss: empty dataset");
    }
    constexpr std::size_t kChunk = 256;
    double total = 0.0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.size(); start += kChunk) {
        const std::size_t count = std::min(kChunk, data.size() - start);
        idx.resize(count);
        std::iota(idx.begin(), idx.end(), start);
        Dataset chunk = data.subset(idx);
        Tape<T> tape;
        auto out = forward(backbone, tape, Bindings<T>{}, chunk.inputs);
        total += static_cast<double>(task_loss(out, chunk).value()(0, 0)) * static_cast<double>(count);
    }
    return total / static_cast<double>(data.size());
}

template <typename T>
Backbone<T> pretrain_backbone(Backbone<T> backbone, const Dataset& data, const PretrainOptions& options,
                              PretrainResult* result) {
    if (options.steps == 0) {
        if (result) {
            const double l = data.empty() ? 0.0 : dataset_loss(backbone, data);
            *result = PretrainResult{l, l, {}};
        }
        return backbone;
    }
    if (data.empty() || options.batch_size == 0) {
        throw ArgumentError("pretrain_backbone: need a non-empty dataset and batch size");
    }
    const auto& cfg = backbone.config();
    const bool classifier = data.kind != TaskKind::Regression;
    if ((cfg.mode == ModelMode::Transformer) != (data.kind == TaskKind::Sequence) ||
        (classifier ? data.classes != cfg.output_dim : data.targets.cols() != cfg.output_dim)) {
        throw ConfigError("pretrain_backbone: " + std::string(to_string(data.kind)) +
                          " data does not match the " + std::string(to_string(cfg.mode)) + " output head");
    }

    PretrainResult res;
    res.initial_loss = dataset_loss(backbone, data);

    std::vector<std::string> names;
    std::vector<ParamTag> tags;
    for (const auto& [name, m] : backbone.params()) {
        names.push_back(name);
        tags.push_back(ParamTag{name, m.rows(), m.cols(), false});
    }
    auto opt = reinit_optimizer<T>(tags, LrPolicy{});
    std::vector<Matrix<T>> work;
    for (const auto& n : names) {
        work.push_back(backbone.at(n));
    }

    Rng shuffle(options.seed, streams::kPretrainShuffle);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size();
    double last_finite = res.initial_loss;
    std::vector<std::size_t> batch_idx;
    for (std::size_t step = 0; step < options.steps; ++step) {
        batch_idx.clear();
        while (batch_idx.size() < options.batch_size) {
            if (cursor == order.size()) {
                for (std::size_t i = order.size(); i > 1; --i) {
                    std::swap(order[i - 1], order[shuffle.below(i)]);
                }
                cursor = 0;
            }
            batch_idx.push_back(order[cursor++]);
        }
        Dataset batch = data.subset(batch_idx);
        Tape<T> tape;
        Bindings<T> bind;
        for (std::size_t i = 0; i < names.size(); ++i) {
            bind.params.emplace(names[i], tape.parameter(work[i]));
        }
        auto loss = task_loss(forward(backbone, tape, bind, batch.inputs), batch);
        const double lv = static_cast<double>(loss.value()(0, 0));
        if (!std::isfinite(lv)) {
            throw TrainingError("pretrain_backbone: loss diverged at step " + std::to_string(step) +
                                " (last finite loss " + std::to_string(last_finite) + ")");
        }
        last_finite = lv;
        res.curve.push_back(lv);
        auto grads = tape.backward(loss);
        std::vector<Matrix<T>*> ptrs;
        for (auto& w : work) {
            ptrs.push_back(&w);
        }
        adamw_step<T>(opt, ptrs, grads, options.lr);
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
        backbone.assign(names[i], work[i]);
    }
    res.final_loss = dataset_loss(backbone, data);
    if (result) {
        *result = std::move(res);
    }
    return backbone;
}

template Var<float> forward(const Backbone<float>&, Tape<float>&, const Bindings<float>&, const MatrixD&);
template Var<double> forward(const Backbone<double>&, Tape<double>&, const Bindings<double>&, const MatrixD&);
template Var<float> task_loss(Var<float>, const Dataset&);
template Var<double> task_loss(Var<double>, const Dataset&);
template double dataset_loss(const Backbone<float>&, const Dataset&);
template double dataset_loss(const Backbone<double>&, const Dataset&);
template Backbone<float> pretrain_backbone(Backbone<float>, const Dataset&, const PretrainOptions&, PretrainResult*);
template Backbone<double> pretrain_backbone(Backbone<double>, const Dataset&, const PretrainOptions&, PretrainResult*);

}  // namespace lorasc
