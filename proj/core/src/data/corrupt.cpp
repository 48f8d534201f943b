#include "lorasc/data/corrupt.hpp"

#include <charconv>
#include <cmath>

#include "lorasc/errors.hpp"
#include "lorasc/numkit/rng.hpp"
#include "lorasc/streams.hpp"

namespace lorasc {

std::string_view to_string(CorruptionKind kind) noexcept {
    switch (kind) {
    case CorruptionKind::GaussianInput:
        return "gaussian_input";
    case CorruptionKind::FeatureMask:
        return "feature_mask";
    case CorruptionKind::CovariateShift:
        return "covariate_shift";
    }
    return "unknown";
}

CorruptionKind parse_corruption_kind(std::string_view text) {
    if (text == "gaussian_input") return CorruptionKind::GaussianInput;
    if (text == "feature_mask") return CorruptionKind::FeatureMask;
    if (text == "covariate_shift") return CorruptionKind::CovariateShift;
    throw ConfigError("unknown corruption kind '" + std::string(text) +
                      "' (expected gaussian_input, feature_mask or covariate_shift)");
}

std::string corruption_label(const CorruptionSpec& spec) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), spec.severity);
    return "corrupted:" + std::string(to_string(spec.kind)) + ":" + std::string(buf, res.ptr);
}

Dataset corrupt(const Dataset& data, const CorruptionSpec& spec) {
    if (!(spec.severity >= 0.0) || !std::isfinite(spec.severity)) {
        throw ConfigError("corrupt: severity must be finite and >= 0");
    }
    if (data.kind == TaskKind::Sequence && spec.kind != CorruptionKind::FeatureMask) {
        throw ConfigError("corrupt: " + std::string(to_string(spec.kind)) +
                          " is not defined for token sequences");
    }
    if (spec.kind == CorruptionKind::FeatureMask && spec.severity > 1.0) {
        throw ConfigError("corrupt: feature_mask severity is a probability, got " +
                          std::to_string(spec.severity));
    }
    Dataset out = data;
    if (spec.severity == 0.0) {
        return out;
    }
    Rng rng(spec.seed, streams::kCorruption);
    auto x = out.inputs.values();
    switch (spec.kind) {
    case CorruptionKind::GaussianInput:
        for (auto& v : x) {
            v += spec.severity * rng.normal();
        }
        break;
    case CorruptionKind::FeatureMask:
        for (auto& v : x) {
            if (rng.uniform01() < spec.severity) {
                v = 0.0;
            }
        }
        break;
    case CorruptionKind::CovariateShift: {
        auto dir = sample_normal<double>(1, out.inputs.cols(), 1.0, rng);
        dir *= 1.0 / frobenius_norm(dir);
        for (std::size_t i = 0; i < out.inputs.rows(); ++i) {
            for (std::size_t j = 0; j < out.inputs.cols(); ++j) {
                out.inputs(i, j) += spec.severity * dir(0, j);
            }
        }
        break;
    }
    }
    out.provenance = data.provenance + "+" + corruption_label(spec);
    return out;
}

}  // namespace lorasc
