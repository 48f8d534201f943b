#include "lorasc/numkit/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lorasc/errors.hpp"

namespace lorasc {

template <typename T>
Var<T> Tape<T>::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::constant(Matrix<T> value) {
    check_finite(value, "Tape::constant");
    return push(Node{std::move(value), {}, {}, false});
}

template <typename T>
Var<T> Tape<T>::parameter(Matrix<T> value) {
    check_finite(value, "Tape::parameter");
    auto v = push(Node{std::move(value), {}, {}, true});
    params_.push_back(v.id);
    return v;
}

template <typename T>
Var<T> Tape<T>::record(Matrix<T> value, std::vector<std::size_t> parents, BackwardFn fn,
                       const char* op) {
    check_finite(value, op);
    bool needs = false;
    for (auto p : parents) {
        needs = needs || nodes_[p].needs_grad;
    }
    return push(Node{std::move(value), {}, needs ? std::move(fn) : BackwardFn{}, needs});
}

template <typename T>
void Tape<T>::accumulate(std::size_t id, const Matrix<T>& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) {
        return;
    }
    if (!g.same_shape(n.value)) {
        throw ShapeError("Tape::accumulate: gradient " + shape_string(g) + " for node " +
                         shape_string(n.value));
    }
    if (n.grad.empty() && !n.value.empty()) {
        n.grad = g;
    } else {
        n.grad += g;
    }
}

template <typename T>
std::vector<Matrix<T>> Tape<T>::backward(Var<T> loss) {
    if (loss.tape != this) {
        throw ContractError("Tape::backward: loss node belongs to another tape");
    }
    const Matrix<T>& lv = nodes_[loss.id].value;
    if (lv.rows() != 1 || lv.cols() != 1) {
        throw ContractError("Tape::backward: loss must be a 1x1 scalar node, got " +
                            shape_string(lv));
    }
    for (auto& n : nodes_) {
        n.grad = Matrix<T>();
    }
    visits_ = 0;
    if (nodes_[loss.id].needs_grad) {
        nodes_[loss.id].grad = Matrix<T>(1, 1, T{1});
    }
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.needs_grad || n.grad.empty()) {
            continue;
        }
        ++visits_;
        if (n.backward) {
            n.backward(*this, n.value, n.grad);
        }
    }
    std::vector<Matrix<T>> out;
    out.reserve(params_.size());
    for (auto id : params_) {
        const Node& n = nodes_[id];
        out.push_back(n.grad.empty() ? Matrix<T>(n.value.rows(), n.value.cols()) : n.grad);
    }
    return out;
}

template <typename T>
Matrix<T> Tape<T>::grad(Var<T> v) const {
    const Node& n = nodes_[v.id];
    return n.grad.empty() ? Matrix<T>(n.value.rows(), n.value.cols()) : n.grad;
}

template <typename T>
void Tape<T>::reset() {
    nodes_.clear();
    params_.clear();
    visits_ = 0;
}

namespace ad {

namespace {

template <typename T>
void same_tape(Var<T> a, Var<T> b, const char* op) {
    if (a.tape != b.tape) {
        throw ContractError(std::string(op) + ": operands live on different tapes");
    }
}

template <typename T>
void same_shape(const Matrix<T>& a, const Matrix<T>& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                         shape_string(b));
    }
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
    same_tape(a, b, "ad::matmul");
    Tape<T>& t = *a.tape;
    auto out = lorasc::matmul(a.value(), b.value());
    return t.record(std::move(out), {a.id, b.id},
                    [a, b](Tape<T>& tape, const Matrix<T>&, const Matrix<T>& g) {
                        if (tape.needs_grad(a)) {
                            tape.accumulate(a.id, lorasc::matmul_nt(g, b.value()));
                        }
                        if (tape.needs_grad(b)) {
                            tape.accumulate(b.id, lorasc::matmul_tn(a.value(), g));
                        }
                    },
                    "ad::matmul");
}

template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
    same_tape(a, b, "ad::matmul_nt");
    Tape<T>& t = *a.tape;
    auto out = lorasc::matmul_nt(a.value(), b.value());
    return t.record(std::move(out), {a.id, b.id},
                    [a, b](Tape<T>& tape, const Matrix<T>&, const Matrix<T>& g) {
                        if (tape.needs_grad(a)) {
                            tape.accumulate(a.id, lorasc::matmul(g, b.value()));
                        }
                        if (tape.needs_grad(b)) {
                            tape.accumulate(b.id, lorasc::matmul_tn(g, a.value()));
                        }
                    },
                    "ad::matmul_nt");
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    same_tape(a, b, "ad::add");
    same_shape(a.value(), b.value(), "ad::add");
    auto out = lorasc::add(a.value(), b.value());
    return a.tape->record(std::move(out), {a.id, b.id},
                          [a, b](Tape<T>& tape, const Matrix<T>&, const Matrix<T>& g) {
                              tape.accumulate(a.id, g);
                              tape.accumulate(b.id, g);
                          },
                          "ad::add");
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    same_tape(a, b, "ad::sub");
    same_shape(a.value(), b.value(), "ad::sub");
    auto out = lorasc::sub(a.value(), b.value());
    return a.tape->record(std::move(out), {a.id, b.id},
                          [a, b](Tape<T>& tape, const Matrix<T>&, const Matrix<T>& g) {
                              tape.accumulate(a.id, g);
                              if (tape.needs_grad(b)) {
                                  tape.accumulate(b.id, lorasc::scale(g, T{-1}));
                              }
                          },
                          "ad::sub");
}

template <typename T>
Var<T> add_row(Var<T> x, Var<T> row) {
    same_tape(x, row, "ad::add_row");
    const auto& xv = x.value();
    const auto& rv = row.value();
    if (rv.rows() != 1 || rv.cols() != xv.cols()) {
        throw ShapeError("ad::add_row: row " + shape_string(rv) + " does not broadcast over " +
                         shape_string(xv));
    }
    Matrix<T> out = xv;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        for (std::size_t j = 0; j < out.cols(); ++j) {
            out(i, j) += rv(0, j);
        }
    }
    return x.tape->record(std::move(out), {x.id, row.id},
                          [x, row](Tape<T>& tape, const Matrix<T>&, const Matrix<T>& g) {
                              tape.accumulate(x.id, g);
                              if (tape.needs_grad(row)) {
                                  Matrix<T> gr(1, g.cols());
                                  for (std::size_t i = 0; i < g.rows(); ++i) {
                                      for (std::size_t j = 0; j < g.cols(); ++j) {
                                          gr(0, j) += g(i, j);
                                      }
                                  }
                                  tape.accumulate(row.id, gr);
                              }
                          },
                          "ad::add_row");
}

template <typename T>
Var<T> scale(Var<T> x, T s) {
    auto out = lorasc::scale(x.value(), s);
    return x.tape->record(std::move(out), {x.id},
                          [x, s](Tape<T>& tape, const Matrix<T>&, const Matrix<T>& g) {
                              tape.accumulate(x.id, lorasc::scale(g, s));
                          },
                          "ad::scale");
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    same_tape(a, b, "ad::mul");
    auto out = lorasc::hadamard(a.value(), b.value());
    return a.tape->record(std::move(out), {a.id, b.id},
                          [a, b](Tape<T>& tape, const Matrix<T>&, const Matrix<T>& g) {
                              if (tape.needs_grad(a)) {
                                  tape.accumulate(a.id, lorasc::hadamard(g, b.value()));
                              }
                              if (tape.needs_grad(b)) {
                                  tape.accumulate(b.id, lorasc::hadamard(g, a.value()));
                              }
                          },
                          "ad::mul");
}

template <typename T>
Var<T> tanh(Var<T> x) {
    Matrix<T> out = x.value();
    for (auto& v : out.values()) {
        v = std::tanh(v);
    }
    return x.tape->record(std::move(out), {x.id},
                          [x](Tape<T>& tape, const Matrix<T>& y, const Matrix<T>& g) {
                              Matrix<T> dx(g.rows(), g.cols());
                              auto yv = y.values();
                              auto gv = g.values();
                              auto dv = dx.values();
                              for (std::size_t i = 0; i < dv.size(); ++i) {
                                  dv[i] = gv[i] * (T{1} - yv[i] * yv[i]);
                              }
                              tape.accumulate(x.id, dx);
                          },
                          "ad::tanh");
}

template <typename T>
Var<T> gelu(Var<T> x) {
    constexpr T kC = T(0.7978845608028654);  // sqrt(2/pi)
    constexpr T kA = T(0.044715);
    Matrix<T> out = x.value();
    for (auto& v : out.values()) {
        const T u = kC * (v + kA * v * v * v);
        v = T(0.5) * v * (T{1} + std::tanh(u));
    }
    return x.tape->record(std::move(out), {x.id},
                          [x](Tape<T>& tape, const Matrix<T>&, const Matrix<T>& g) {
                              const auto& xv = x.value();
                              Matrix<T> dx(g.rows(), g.cols());
                              auto in = xv.values();
                              auto gv = g.values();
                              auto dv = dx.values();
                              for (std::size_t i = 0; i < dv.size(); ++i) {
                                  const T v = in[i];
                                  const T t = std::tanh(kC * (v + kA * v * v * v));
                                  const T du = kC * (T{1} + T{3} * kA * v * v);
                                  dv[i] = gv[i] * (T(0.5) * (T{1} + t) + T(0.5) * v * (T{1} - t * t) * du);
                              }
                              tape.accumulate(x.id, dx);
                          },
                          "ad::gelu");
}

template <typename T>
Var<T> softmax_rows(Var<T> x) {
    Matrix<T> out = x.value();
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        T mx = r[0];
        for (T v : r) {
            mx = std::max(mx, v);
        }
        T total{0};
        for (auto& v : r) {
            v = std::exp(v - mx);
            total += v;
        }
        for (auto& v : r) {
            v /= total;
        }
    }
    return x.tape->record(std::move(out), {x.id},
                          [x](Tape<T>& tape, const Matrix<T>& y, const Matrix<T>& g) {
                              Matrix<T> dx(g.rows(), g.cols());
                              for (std::size_t i = 0; i < g.rows(); ++i) {
                                  T dot{0};
                                  for (std::size_t j = 0; j < g.cols(); ++j) {
                                      dot += g(i, j) * y(i, j);
                                  }
                                  for (std::size_t j = 0; j < g.cols(); ++j) {
                                      dx(i, j) = y(i, j) * (g(i, j) - dot);
                                  }
                              }
                              tape.accumulate(x.id, dx);
                          },
                          "ad::softmax_rows");
}

template <typename T>
Var<T> layer_norm_rows(Var<T> x, Var<T> gain, Var<T> bias, T eps) {
    same_tape(x, gain, "ad::layer_norm_rows");
    same_tape(x, bias, "ad::layer_norm_rows");
    const auto& xv = x.value();
    const std::size_t n = xv.rows(), c = xv.cols();
    if (gain.value().rows() != 1 || gain.value().cols() != c || !gain.value().same_shape(bias.value())) {
        throw ShapeError("ad::layer_norm_rows: gain/bias " + shape_string(gain.value()) + "/" +
                         shape_string(bias.value()) + " do not match " + shape_string(xv));
    }
    Matrix<T> xhat(n, c);
    std::vector<T> inv_std(n);
    for (std::size_t i = 0; i < n; ++i) {
        T mean{0};
        for (std::size_t j = 0; j < c; ++j) {
            mean += xv(i, j);
        }
        mean /= static_cast<T>(c);
        T var{0};
        for (std::size_t j = 0; j < c; ++j) {
            const T d = xv(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<T>(c);
        inv_std[i] = T{1} / std::sqrt(var + eps);
        for (std::size_t j = 0; j < c; ++j) {
            xhat(i, j) = (xv(i, j) - mean) * inv_std[i];
        }
    }
    Matrix<T> out(n, c);
    const auto& gv = gain.value();
    const auto& bv = bias.value();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            out(i, j) = xhat(i, j) * gv(0, j) + bv(0, j);
        }
    }
    return x.tape->record(
        std::move(out), {x.id, gain.id, bias.id},
        [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](
            Tape<T>& tape, const Matrix<T>&, const Matrix<T>& g) {
            const std::size_t n = g.rows(), c = g.cols();
            const auto& gv = gain.value();
            if (tape.needs_grad(gain) || tape.needs_grad(bias)) {
                Matrix<T> dgain(1, c), dbias(1, c);
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < c; ++j) {
                        dgain(0, j) += g(i, j) * xhat(i, j);
                        dbias(0, j) += g(i, j);
                    }
                }
                tape.accumulate(gain.id, dgain);
                tape.accumulate(bias.id, dbias);
            }
            if (tape.needs_grad(x)) {
                Matrix<T> dx(n, c);
                for (std::size_t i = 0; i < n; ++i) {
                    T mean_d{0}, mean_dx{0};
                    for (std::size_t j = 0; j < c; ++j) {
                        const T d = g(i, j) * gv(0, j);
                        mean_d += d;
                        mean_dx += d * xhat(i, j);
                    }
                    mean_d /= static_cast<T>(c);
                    mean_dx /= static_cast<T>(c);
                    for (std::size_t j = 0; j < c; ++j) {
                        const T d = g(i, j) * gv(0, j);
                        dx(i, j) = inv_std[i] * (d - mean_d - xhat(i, j) * mean_dx);
                    }
                }
                tape.accumulate(x.id, dx);
            }
        },
        "ad::layer_norm_rows");
}

template <typename T>
Var<T> slice_rows(Var<T> x, std::size_t begin, std::size_t count) {
    const auto& xv = x.value();
    if (begin + count > xv.rows()) {
        throw ShapeError("ad::slice_rows: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + shape_string(xv));
    }
    Matrix<T> out(count, xv.cols());
    for (std::size_t i = 0; i < count; ++i) {
        std::copy(xv.row(begin + i).begin(), xv.row(begin + i).end(), out.row(i).begin());
    }
    return x.tape->record(std::move(out), {x.id},
                          [x, begin](Tape<T>& tape, const Matrix<T>&, const Matrix<T>& g) {
                              const auto& xv = x.value();
                              Matrix<T> dx(xv.rows(), xv.cols());
                              for (std::size_t i = 0; i < g.rows(); ++i) {
                                  std::copy(g.row(i).begin(), g.row(i).end(), dx.row(begin + i).begin());
                              }
                              tape.accumulate(x.id, dx);
                          },
                          "ad::slice_rows");
}

template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t count) {
    const auto& xv = x.value();
    if (begin + count > xv.cols()) {
        throw ShapeError("ad::slice_cols: cols [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + shape_string(xv));
    }
    Matrix<T> out(xv.rows(), count);
    for (std::size_t i = 0; i < xv.rows(); ++i) {
        for (std::size_t j = 0; j < count; ++j) {
            out(i, j) = xv(i, begin + j);
        }
    }
    return x.tape->record(std::move(out), {x.id},
                          [x, begin](Tape<T>& tape, const Matrix<T>&, const Matrix<T>& g) {
                              const auto& xv = x.value();
                              Matrix<T> dx(xv.rows(), xv.cols());
                              for (std::size_t i = 0; i < g.rows(); ++i) {
                                  for (std::size_t j = 0; j < g.cols(); ++j) {
                                      dx(i, begin + j) = g(i, j);
                                  }
                              }
                              tape.accumulate(x.id, dx);
                          },
                          "ad::slice_cols");
}

template <typename T>
Var<T> concat_rows(std::span<const Var<T>> parts) {
    if (parts.empty()) {
        throw ShapeError("ad::concat_rows: no parts");
    }
    const std::size_t c = parts[0].cols();
    std::size_t total = 0;
    std::vector<std::size_t> ids;
    for (const auto& p : parts) {
        same_tape(parts[0], p, "ad::concat_rows");
        if (p.cols() != c) {
            throw ShapeError("ad::concat_rows: column mismatch " + shape_string(p.value()));
        }
        total += p.rows();
        ids.push_back(p.id);
    }
    Matrix<T> out(total, c);
    std::size_t r = 0;
    for (const auto& p : parts) {
        const auto& pv = p.value();
        std::copy(pv.values().begin(), pv.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(r * c));
        r += pv.rows();
    }
    std::vector<Var<T>> held(parts.begin(), parts.end());
    return parts[0].tape->record(std::move(out), ids,
                                 [held](Tape<T>& tape, const Matrix<T>&, const Matrix<T>& g) {
                                     std::size_t r = 0;
                                     for (const auto& p : held) {
                                         const std::size_t pr = p.rows();
                                         if (tape.needs_grad(p)) {
                                             Matrix<T> dp(pr, g.cols());
                                             auto first = g.values().begin() + static_cast<std::ptrdiff_t>(r * g.cols());
                                             std::copy(first, first + static_cast<std::ptrdiff_t>(pr * g.cols()),
                                                       dp.values().begin());
                                             tape.accumulate(p.id, dp);
                                         }
                                         r += pr;
                                     }
                                 },
                                 "ad::concat_rows");
}

template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
    if (parts.empty()) {
        throw ShapeError("ad::concat_cols: no parts");
    }
    const std::size_t n = parts[0].rows();
    std::size_t total = 0;
    std::vector<std::size_t> ids;
    for (const auto& p : parts) {
        same_tape(parts[0], p, "ad::concat_cols");
        if (p.rows() != n) {
            throw ShapeError("ad::concat_cols: row mismatch " + shape_string(p.value()));
        }
        total += p.cols();
        ids.push_back(p.id);
    }
    Matrix<T> out(n, total);
    std::size_t c0 = 0;
    for (const auto& p : parts) {
        const auto& pv = p.value();
        for (std::size_t i = 0; i < n; ++i) {
            std::copy(pv.row(i).begin(), pv.row(i).end(), out.row(i).begin() + static_cast<std::ptrdiff_t>(c0));
        }
        c0 += pv.cols();
    }
    std::vector<Var<T>> held(parts.begin(), parts.end());
    return parts[0].tape->record(std::move(out), ids,
                                 [held](Tape<T>& tape, const Matrix<T>&, const Matrix<T>& g) {
                                     std::size_t c0 = 0;
                                     for (const auto& p : held) {
                                         const std::size_t pc = p.cols();
                                         if (tape.needs_grad(p)) {
                                             Matrix<T> dp(g.rows(), pc);
                                             for (std::size_t i = 0; i < g.rows(); ++i) {
                                                 for (std::size_t j = 0; j < pc; ++j) {
                                                     dp(i, j) = g(i, c0 + j);
                                                 }
                                             }
                                             tape.accumulate(p.id, dp);
                                         }
                                         c0 += pc;
                                     }
                                 },
                                 "ad::concat_cols");
}

template <typename T>
Var<T> mean_pool_rows(Var<T> x, std::size_t group) {
    const auto& xv = x.value();
    if (group == 0 || xv.rows() % group != 0) {
        throw ShapeError("ad::mean_pool_rows: group " + std::to_string(group) +
                         " does not divide rows of " + shape_string(xv));
    }
    const std::size_t n = xv.rows() / group;
    Matrix<T> out(n, xv.cols());
    const T inv = T{1} / static_cast<T>(group);
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t r = 0; r < group; ++r) {
            for (std::size_t j = 0; j < xv.cols(); ++j) {
                out(b, j) += xv(b * group + r, j);
            }
        }
        for (std::size_t j = 0; j < xv.cols(); ++j) {
            out(b, j) *= inv;
        }
    }
    return x.tape->record(std::move(out), {x.id},
                          [x, group, inv](Tape<T>& tape, const Matrix<T>&, const Matrix<T>& g) {
                              Matrix<T> dx(g.rows() * group, g.cols());
                              for (std::size_t b = 0; b < g.rows(); ++b) {
                                  for (std::size_t r = 0; r < group; ++r) {
                                      for (std::size_t j = 0; j < g.cols(); ++j) {
                                          dx(b * group + r, j) = g(b, j) * inv;
                                      }
                                  }
                              }
                              tape.accumulate(x.id, dx);
                          },
                          "ad::mean_pool_rows");
}

template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const std::size_t> ids) {
    const auto& tv = table.value();
    Matrix<T> out(ids.size(), tv.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= tv.rows()) {
            throw ShapeError("ad::gather_rows: index " + std::to_string(ids[i]) + " out of " +
                             shape_string(tv));
        }
        std::copy(tv.row(ids[i]).begin(), tv.row(ids[i]).end(), out.row(i).begin());
    }
    std::vector<std::size_t> held(ids.begin(), ids.end());
    return table.tape->record(std::move(out), {table.id},
                              [table, held](Tape<T>& tape, const Matrix<T>&, const Matrix<T>& g) {
                                  const auto& tv = table.value();
                                  Matrix<T> dt(tv.rows(), tv.cols());
                                  for (std::size_t i = 0; i < held.size(); ++i) {
                                      for (std::size_t j = 0; j < g.cols(); ++j) {
                                          dt(held[i], j) += g(i, j);
                                      }
                                  }
                                  tape.accumulate(table.id, dt);
                              },
                              "ad::gather_rows");
}

template <typename T>
Var<T> sum(Var<T> x) {
    Matrix<T> out(1, 1, static_cast<T>(sum_all(x.value())));
    return x.tape->record(std::move(out), {x.id},
                          [x](Tape<T>& tape, const Matrix<T>&, const Matrix<T>& g) {
                              const auto& xv = x.value();
                              tape.accumulate(x.id, Matrix<T>(xv.rows(), xv.cols(), g(0, 0)));
                          },
                          "ad::sum");
}

template <typename T>
Var<T> mse_loss(Var<T> pred, const Matrix<T>& target) {
    const auto& pv = pred.value();
    same_shape(pv, target, "ad::mse_loss");
    if (pv.empty()) {
        throw ShapeError("ad::mse_loss: empty prediction");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const double d = static_cast<double>(pv.values()[i]) - static_cast<double>(target.values()[i]);
        acc += d * d;
    }
    Matrix<T> out(1, 1, static_cast<T>(acc / static_cast<double>(pv.size())));
    return pred.tape->record(std::move(out), {pred.id},
                             [pred, target](Tape<T>& tape, const Matrix<T>&, const Matrix<T>& g) {
                                 const auto& pv = pred.value();
                                 const T k = T{2} * g(0, 0) / static_cast<T>(pv.size());
                                 Matrix<T> dp(pv.rows(), pv.cols());
                                 for (std::size_t i = 0; i < pv.size(); ++i) {
                                     dp.values()[i] = k * (pv.values()[i] - target.values()[i]);
                                 }
                                 tape.accumulate(pred.id, dp);
                             },
                             "ad::mse_loss");
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> labels) {
    const auto& lv = logits.value();
    if (lv.rows() != labels.size() || lv.rows() == 0) {
        throw ShapeError("ad::cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_string(lv));
    }
    Matrix<T> probs(lv.rows(), lv.cols());
    double acc = 0.0;
    for (std::size_t i = 0; i < lv.rows(); ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= lv.cols()) {
            throw ShapeError("ad::cross_entropy: label " + std::to_string(y) + " out of range for " +
                             shape_string(lv));
        }
        double mx = lv(i, 0);
        for (std::size_t j = 0; j < lv.cols(); ++j) {
            mx = std::max(mx, static_cast<double>(lv(i, j)));
        }
        double z = 0.0;
        for (std::size_t j = 0; j < lv.cols(); ++j) {
            z += std::exp(static_cast<double>(lv(i, j)) - mx);
        }
        const double log_z = mx + std::log(z);
        for (std::size_t j = 0; j < lv.cols(); ++j) {
            probs(i, j) = static_cast<T>(std::exp(static_cast<double>(lv(i, j)) - log_z));
        }
        acc += log_z - static_cast<double>(lv(i, static_cast<std::size_t>(y)));
    }
    Matrix<T> out(1, 1, static_cast<T>(acc / static_cast<double>(lv.rows())));
    std::vector<int> held(labels.begin(), labels.end());
    return logits.tape->record(
        std::move(out), {logits.id},
        [logits, held, probs = std::move(probs)](Tape<T>& tape, const Matrix<T>&, const Matrix<T>& g) {
            const T k = g(0, 0) / static_cast<T>(probs.rows());
            Matrix<T> dl = probs;
            for (std::size_t i = 0; i < dl.rows(); ++i) {
                dl(i, static_cast<std::size_t>(held[i])) -= T{1};
            }
            dl *= k;
            tape.accumulate(logits.id, dl);
        },
        "ad::cross_entropy");
}

#define LORASC_INSTANTIATE_AD(T)                                                            \
    template Var<T> matmul(Var<T>, Var<T>);                                                 \
    template Var<T> matmul_nt(Var<T>, Var<T>);                                              \
    template Var<T> add(Var<T>, Var<T>);                                                    \
    template Var<T> sub(Var<T>, Var<T>);                                                    \
    template Var<T> add_row(Var<T>, Var<T>);                                                \
    template Var<T> scale(Var<T>, T);                                                       \
    template Var<T> mul(Var<T>, Var<T>);                                                    \
    template Var<T> tanh(Var<T>);                                                           \
    template Var<T> gelu(Var<T>);                                                           \
    template Var<T> softmax_rows(Var<T>);                                                   \
    template Var<T> layer_norm_rows(Var<T>, Var<T>, Var<T>, T);                             \
    template Var<T> slice_rows(Var<T>, std::size_t, std::size_t);                           \
    template Var<T> slice_cols(Var<T>, std::size_t, std::size_t);                           \
    template Var<T> concat_rows(std::span<const Var<T>>);                                   \
    template Var<T> concat_cols(std::span<const Var<T>>);                                   \
    template Var<T> mean_pool_rows(Var<T>, std::size_t);                                    \
    template Var<T> gather_rows(Var<T>, std::span<const std::size_t>);                      \
    template Var<T> sum(Var<T>);                                                            \
    template Var<T> mse_loss(Var<T>, const Matrix<T>&);                                     \
    template Var<T> cross_entropy(Var<T>, std::span<const int>);

LORASC_INSTANTIATE_AD(float)
LORASC_INSTANTIATE_AD(double)

#undef LORASC_INSTANTIATE_AD

}  // namespace ad

template <typename T>
std::vector<Matrix<T>> finite_diff_grad(const std::function<double(std::span<const Matrix<T>>)>& f,
                                        std::vector<Matrix<T>> params, double step) {
    if (!(step > 0.0)) {
        throw ArgumentError("finite_diff_grad: step must be positive, got " + std::to_string(step));
    }
    auto eval = [&](std::size_t p, std::size_t i) {
        const double v = f(params);
        if (!std::isfinite(v)) {
            throw NumericError("finite_diff_grad: non-finite objective at parameter " +
                               std::to_string(p) + " coordinate " + std::to_string(i));
        }
        return v;
    };
    std::vector<Matrix<T>> grads;
    grads.reserve(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
        Matrix<T> g(params[p].rows(), params[p].cols());
        for (std::size_t i = 0; i < params[p].size(); ++i) {
            T& x = params[p].values()[i];
            const T saved = x;
            x = static_cast<T>(static_cast<double>(saved) + step);
            const double hi = eval(p, i);
            x = static_cast<T>(static_cast<double>(saved) - step);
            const double lo = eval(p, i);
            x = saved;
            g.values()[i] = static_cast<T>((hi - lo) / (2.0 * step));
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

template class Tape<float>;
template class Tape<double>;
template std::vector<Matrix<float>> finite_diff_grad(const std::function<double(std::span<const Matrix<float>>)>&,
                                                     std::vector<Matrix<float>>, double);
template std::vector<Matrix<double>> finite_diff_grad(const std::function<double(std::span<const Matrix<double>>)>&,
                                                      std::vector<Matrix<double>>, double);

}  // namespace lorasc
