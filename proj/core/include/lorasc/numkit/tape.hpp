#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "lorasc/numkit/matrix.hpp"

namespace lorasc {

template <typename T>
class Tape;

// Handle to a node on a Tape. Cheap to copy; valid until the tape is reset.
template <typename T>
struct Var {
    Tape<T>* tape = nullptr;
    std::size_t id = 0;

    const Matrix<T>& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
};

// Reverse-mode autodiff tape. Nodes are appended in evaluation order, so the
// node list is already topologically sorted; backward walks it in reverse and
// visits each node that lies on a gradient path exactly once.
template <typename T>
class Tape {
public:
    // Receives the node's own output value and the upstream gradient.
    using BackwardFn =
        std::function<void(Tape&, const Matrix<T>& out, const Matrix<T>& grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<T> constant(Matrix<T> value);
    // Registers a differentiable leaf; backward() reports its gradient at
    // position parameter_count() - 1 at the time of registration.
    Var<T> parameter(Matrix<T> value);

    // Used by the primitive ops in namespace ad. `fn` is dropped when no
    // parent requires a gradient.
    Var<T> record(Matrix<T> value, std::vector<std::size_t> parents, BackwardFn fn,
                  const char* op);

    const Matrix<T>& value(Var<T> v) const { return nodes_[v.id].value; }
    bool needs_grad(Var<T> v) const { return nodes_[v.id].needs_grad; }

    // Adds `g` into the gradient slot of node `id`; no-op for constants.
    void accumulate(std::size_t id, const Matrix<T>& g);

    // Gradients of every registered parameter in registration order. The loss
    // must be a 1x1 node; parameters off the loss path get exact zeros.
    std::vector<Matrix<T>> backward(Var<T> loss);

    // Gradient of any node after backward(); zeros if it received none.
    Matrix<T> grad(Var<T> v) const;

    std::size_t size() const noexcept { return nodes_.size(); }
    std::size_t parameter_count() const noexcept { return params_.size(); }
    std::size_t last_backward_visits() const noexcept { return visits_; }

    void reset();

private:
    struct Node {
        Matrix<T> value;
        Matrix<T> grad;
        BackwardFn backward;
        bool needs_grad = false;
    };

    Var<T> push(Node node);

    std::vector<Node> nodes_;
    std::vector<std::size_t> params_;
    std::size_t visits_ = 0;
};

template <typename T>
const Matrix<T>& Var<T>::value() const {
    return tape->value(*this);
}

// Differentiable primitives. Each records one node.
namespace ad {

template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
// a * b^T, the row-major linear-layer product x W^T.
template <typename T> Var<T> matmul_nt(Var<T> a, Var<T> b);
template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
// x (n x c) + row (1 x c) broadcast over rows.
template <typename T> Var<T> add_row(Var<T> x, Var<T> row);
template <typename T> Var<T> scale(Var<T> x, T s);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> tanh(Var<T> x);
// tanh approximation of GELU.
template <typename T> Var<T> gelu(Var<T> x);
template <typename T> Var<T> softmax_rows(Var<T> x);
template <typename T> Var<T> layer_norm_rows(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5));
template <typename T> Var<T> slice_rows(Var<T> x, std::size_t begin, std::size_t count);
template <typename T> Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t count);
template <typename T> Var<T> concat_rows(std::span<const Var<T>> parts);
template <typename T> Var<T> concat_cols(std::span<const Var<T>> parts);
// Mean of each consecutive block of `group` rows: (n*group x c) -> (n x c).
template <typename T> Var<T> mean_pool_rows(Var<T> x, std::size_t group);
// Embedding lookup: out row i = table row ids[i].
template <typename T> Var<T> gather_rows(Var<T> table, std::span<const std::size_t> ids);
template <typename T> Var<T> sum(Var<T> x);
// Mean over all elements of (pred - target)^2.
template <typename T> Var<T> mse_loss(Var<T> pred, const Matrix<T>& target);
// Mean over rows of -log softmax(logits)[label].
template <typename T> Var<T> cross_entropy(Var<T> logits, std::span<const int> labels);

}  // namespace ad

// Central differences (f(p + h) - f(p - h)) / 2h for every coordinate of every
// parameter. Parameters are perturbed in place and restored bit-exactly.
template <typename T>
std::vector<Matrix<T>> finite_diff_grad(const std::function<double(std::span<const Matrix<T>>)>& f,
                                        std::vector<Matrix<T>> params, double step);

}  // namespace lorasc
