#include "lorasc/eval/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "lorasc/errors.hpp"
#include "lorasc/model/forward.hpp"
#include "lorasc/numkit/svd.hpp"

namespace lorasc {

template <typename T>
MetricsRecord evaluate(const Backbone<T>& backbone, std::span<const LoraPair<T>> adapters, const Dataset& data,
                       const std::string& split) {
    if (data.empty()) {
        throw ArgumentError("evaluate: empty dataset for split '" + split + "'");
    }
    constexpr std::size_t kChunk = 256;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.size(); start += kChunk) {
        const std::size_t count = std::min(kChunk, data.size() - start);
        idx.resize(count);
        std::iota(idx.begin(), idx.end(), start);
        const Dataset chunk = data.subset(idx);
        Tape<T> tape;
        Bindings<T> bind;
        for (const auto& p : adapters) {
            bind.adapters.emplace(p.target,
                                  AdapterBinding<T>{tape.constant(p.a), tape.constant(p.b), p.scaling});
        }
        auto out = forward(backbone, tape, bind, chunk.inputs);
        loss_sum += static_cast<double>(task_loss(out, chunk).value()(0, 0)) * static_cast<double>(count);
        if (chunk.has_labels()) {
            const auto& logits = out.value();
            for (std::size_t i = 0; i < count; ++i) {
                auto row = logits.row(i);
                const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
                correct += best == chunk.labels[i] ? 1 : 0;
            }
        }
    }
    MetricsRecord r;
    r.split = split;
    r.loss = loss_sum / static_cast<double>(data.size());
    if (data.has_labels()) {
        r.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    }
    return r;
}

template <typename T>
RankReport effective_rank(const Matrix<T>& delta, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) {
        throw ArgumentError("effective_rank: tau " + std::to_string(tau) + " outside (0, 1)");
    }
    RankReport rep;
    rep.tau = tau;
    rep.singular_values = singular_values(delta);
    if (!rep.singular_values.empty() && rep.singular_values.front() > 0.0) {
        const double cut = tau * rep.singular_values.front();
        rep.rank = static_cast<std::size_t>(
            std::count_if(rep.singular_values.begin(), rep.singular_values.end(), [&](double s) { return s > cut; }));
    }
    return rep;
}

template MetricsRecord evaluate(const Backbone<float>&, std::span<const LoraPair<float>>, const Dataset&,
                                const std::string&);
template MetricsRecord evaluate(const Backbone<double>&, std::span<const LoraPair<double>>, const Dataset&,
                                const std::string&);
template RankReport effective_rank(const Matrix<float>&, double);
template RankReport effective_rank(const Matrix<double>&, double);

}  // namespace lorasc
