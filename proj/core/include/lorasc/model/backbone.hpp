#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "lorasc/numkit/matrix.hpp"

namespace lorasc {

enum class ModelMode { Mlp, Transformer };

std::string_view to_string(ModelMode mode) noexcept;
ModelMode parse_model_mode(std::string_view text);

// mlp:         embed (tanh) -> depth residual blocks h += fc2(tanh(fc1(h))) -> head
// transformer: token embedding -> depth pre-norm blocks
//              (softmax self-attention with q/k/v/o, then a GELU MLP)
//              -> final layer norm -> mean pool over positions -> head
struct ModelConfig {
    ModelMode mode = ModelMode::Mlp;
    std::size_t depth = 2;
    std::size_t width = 32;       // d_model
    std::size_t heads = 4;        // transformer only
    std::size_t input_dim = 16;   // mlp feature count
    std::size_t output_dim = 4;   // regression outputs or class count
    std::size_t vocab = 8;        // transformer only
    std::size_t seq_len = 8;      // transformer only
    std::uint64_t seed = 1234;

    // Throws ConfigError naming the offending field.
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

// Named weight matrices. Weights are stored out x in (y = x W^T) so the
// adapter convention W + s*B*A with B: d x r, A: r x k applies directly.
// Shapes are fixed at construction; only values change.
template <typename T>
class Backbone {
public:
    Backbone() = default;
    Backbone(ModelConfig config, std::map<std::string, Matrix<T>> params);

    const ModelConfig& config() const noexcept { return config_; }
    const std::map<std::string, Matrix<T>>& params() const noexcept { return params_; }

    bool contains(const std::string& name) const { return params_.count(name) != 0; }
    // Throws LookupError for unknown names.
    const Matrix<T>& at(const std::string& name) const;

    // In-place value updates; shapes must match the existing tensor.
    void assign(const std::string& name, const Matrix<T>& value);
    void add_to(const std::string& name, const Matrix<T>& delta);

    // q and v projections of every attention layer (transformer) or the first
    // matrix of every residual block (mlp), in layer order.
    std::vector<std::string> default_targets() const;

    std::uint64_t checksum() const;

    template <typename U>
    Backbone<U> cast() const {
        std::map<std::string, Matrix<U>> out;
        for (const auto& [name, m] : params_) {
            out.emplace(name, m.template cast<U>());
        }
        return Backbone<U>(config_, std::move(out));
    }

private:
    Matrix<T>& mutable_at(const std::string& name);

    ModelConfig config_;
    std::map<std::string, Matrix<T>> params_;
};

template <typename T>
bool bit_equal(const Backbone<T>& a, const Backbone<T>& b) noexcept;

// Deterministic initialization from config.seed: N(0, 1/fan_in) weights,
// zero biases, unit layer-norm gains.
template <typename T>
Backbone<T> build(const ModelConfig& config);

// Throws LookupError unless every name resolves, ConfigError on duplicates.
template <typename T>
void validate_targets(const Backbone<T>& backbone, const std::vector<std::string>& targets);

}  // namespace lorasc
