#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lorasc/adapter/lora.hpp"
#include "lorasc/data/dataset.hpp"
#include "lorasc/model/backbone.hpp"

namespace lorasc {

// One row of the training / evaluation log. `split` is train, val, test or
// corrupted:<kind>:<severity>.
struct MetricsRecord {
    std::string run_id;
    std::size_t epoch = 0;
    std::size_t step = 0;
    std::string split;
    double loss = 0.0;
    std::optional<double> accuracy;
    double lr = 0.0;
    std::vector<double> noise_sigma;  // one per target; empty when no noise stage ran
    double slow_norm = 0.0;
    double fast_norm = 0.0;

    bool operator==(const MetricsRecord&) const = default;
};

// Mean loss (and accuracy for labelled tasks) over the whole dataset, with
// `adapters` applied in adapter form. Fixed chunking, double accumulation.
// Throws ArgumentError for an empty dataset.
template <typename T>
MetricsRecord evaluate(const Backbone<T>& backbone, std::span<const LoraPair<T>> adapters, const Dataset& data,
                       const std::string& split = "eval");

struct RankReport {
    std::string target;
    std::vector<double> singular_values;
    std::size_t rank = 0;
    double tau = 1e-6;
    std::size_t epoch = 0;
};

// Number of singular values above tau * sigma_1; 0 for a zero matrix.
// Throws ArgumentError unless 0 < tau < 1.
template <typename T>
RankReport effective_rank(const Matrix<T>& delta, double tau = 1e-6);

}  // namespace lorasc
