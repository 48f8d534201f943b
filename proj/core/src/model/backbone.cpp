#include "lorasc/model/backbone.hpp"

#include <cmath>
#include <set>

#include "lorasc/errors.hpp"
#include "lorasc/numkit/rng.hpp"
#include "lorasc/streams.hpp"

namespace lorasc {

std::string_view to_string(ModelMode mode) noexcept {
    return mode == ModelMode::Mlp ? "mlp" : "transformer";
}

ModelMode parse_model_mode(std::string_view text) {
    if (text == "mlp") return ModelMode::Mlp;
    if (text == "transformer") return ModelMode::Transformer;
    throw ConfigError("model.mode: unknown mode '" + std::string(text) + "' (expected mlp or transformer)");
}

void ModelConfig::validate() const {
    auto positive = [](std::size_t v, const char* field) {
        if (v == 0) {
            throw ConfigError(std::string("model.") + field + " must be positive");
        }
    };
    positive(depth, "depth");
    positive(width, "width");
    positive(output_dim, "output_dim");
    if (mode == ModelMode::Mlp) {
        positive(input_dim, "input_dim");
        return;
    }
    positive(heads, "heads");
    positive(seq_len, "seq_len");
    if (width % heads != 0) {
        throw ConfigError("model.heads: width " + std::to_string(width) + " is not divisible by " +
                          std::to_string(heads) + " heads");
    }
    if (vocab < 2) {
        throw ConfigError("model.vocab must be >= 2");
    }
}

template <typename T>
Backbone<T>::Backbone(ModelConfig config, std::map<std::string, Matrix<T>> params)
    : config_(std::move(config)), params_(std::move(params)) {}

template <typename T>
const Matrix<T>& Backbone<T>::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) {
        throw LookupError("backbone has no parameter '" + name + "'");
    }
    return it->second;
}

template <typename T>
Matrix<T>& Backbone<T>::mutable_at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) {
        throw LookupError("backbone has no parameter '" + name + "'");
    }
    return it->second;
}

template <typename T>
void Backbone<T>::assign(const std::string& name, const Matrix<T>& value) {
    auto& m = mutable_at(name);
    if (!m.same_shape(value)) {
        throw ShapeError("backbone '" + name + "': cannot assign " + shape_string(value) + " to " +
                         shape_string(m));
    }
    check_finite(value, "backbone assign '" + name + "'");
    m = value;
}

template <typename T>
void Backbone<T>::add_to(const std::string& name, const Matrix<T>& delta) {
    auto& m = mutable_at(name);
    if (!m.same_shape(delta)) {
        throw ShapeError("backbone '" + name + "': delta " + shape_string(delta) + " does not match " +
                         shape_string(m));
    }
    m += delta;
}

template <typename T>
std::vector<std::string> Backbone<T>::default_targets() const {
    std::vector<std::string> out;
    for (std::size_t l = 0; l < config_.depth; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        if (config_.mode == ModelMode::Transformer) {
            out.push_back(p + "attn.q.weight");
            out.push_back(p + "attn.v.weight");
        } else {
            out.push_back(p + "fc1.weight");
        }
    }
    return out;
}

template <typename T>
std::uint64_t Backbone<T>::checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& [name, m] : params_) {
        for (char c : name) {
            h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
        }
        h = (h ^ lorasc::checksum(m)) * 1099511628211ULL;
    }
    return h;
}

template <typename T>
bool bit_equal(const Backbone<T>& a, const Backbone<T>& b) noexcept {
    if (a.params().size() != b.params().size()) {
        return false;
    }
    auto ib = b.params().begin();
    for (const auto& [name, m] : a.params()) {
        if (name != ib->first || !bit_equal(m, ib->second)) {
            return false;
        }
        ++ib;
    }
    return true;
}

template <typename T>
Backbone<T> build(const ModelConfig& config) {
    config.validate();
    Rng rng(config.seed, streams::kModelInit);
    std::map<std::string, Matrix<T>> p;
    auto weight = [&](const std::string& name, std::size_t out, std::size_t in) {
        p.emplace(name, sample_normal<T>(out, in, 1.0 / std::sqrt(static_cast<double>(in)), rng));
    };
    auto zeros = [&](const std::string& name, std::size_t n) { p.emplace(name, Matrix<T>(1, n)); };
    auto ones = [&](const std::string& name, std::size_t n) { p.emplace(name, Matrix<T>(1, n, T{1})); };

    const std::size_t d = config.width;
    if (config.mode == ModelMode::Mlp) {
        weight("embed.weight", d, config.input_dim);
        zeros("embed.bias", d);
        for (std::size_t l = 0; l < config.depth; ++l) {
            const std::string pre = "layers." + std::to_string(l) + ".";
            weight(pre + "fc1.weight", d, d);
            zeros(pre + "fc1.bias", d);
            weight(pre + "fc2.weight", d, d);
            zeros(pre + "fc2.bias", d);
        }
    } else {
        p.emplace("embed.weight", sample_normal<T>(config.vocab, d, 1.0, rng));
        for (std::size_t l = 0; l < config.depth; ++l) {
            const std::string pre = "layers." + std::to_string(l) + ".";
            ones(pre + "ln1.gain", d);
            zeros(pre + "ln1.bias", d);
            weight(pre + "attn.q.weight", d, d);
            weight(pre + "attn.k.weight", d, d);
            weight(pre + "attn.v.weight", d, d);
            weight(pre + "attn.o.weight", d, d);
            ones(pre + "ln2.gain", d);
            zeros(pre + "ln2.bias", d);
            weight(pre + "mlp.fc1.weight", 2 * d, d);
            zeros(pre + "mlp.fc1.bias", 2 * d);
            weight(pre + "mlp.fc2.weight", d, 2 * d);
            zeros(pre + "mlp.fc2.bias", d);
        }
        ones("final_ln.gain", d);
        zeros("final_ln.bias", d);
    }
    weight("head.weight", config.output_dim, d);
    zeros("head.bias", config.output_dim);
    return Backbone<T>(config, std::move(p));
}

template <typename T>
void validate_targets(const Backbone<T>& backbone, const std::vector<std::string>& targets) {
    std::set<std::string> seen;
    for (const auto& t : targets) {
        backbone.at(t);
        if (!seen.insert(t).second) {
            throw ConfigError("adapter target '" + t + "' listed twice");
        }
    }
}

template class Backbone<float>;
template class Backbone<double>;
template bool bit_equal(const Backbone<float>&, const Backbone<float>&) noexcept;
template bool bit_equal(const Backbone<double>&, const Backbone<double>&) noexcept;
template Backbone<float> build<float>(const ModelConfig&);
template Backbone<double> build<double>(const ModelConfig&);
template void validate_targets(const Backbone<float>&, const std::vector<std::string>&);
template void validate_targets(const Backbone<double>&, const std::vector<std::string>&);

}  // namespace lorasc
