#pragma once

#include <cstddef>
#include <cstdint>

#include "lorasc/numkit/matrix.hpp"

namespace lorasc {

// Counter-based generator: sample i of stream s under seed k is a pure hash
// of (k, s, i). Independent streams therefore need no shared state, and the
// whole generator state is (seed, stream, counter).
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0) noexcept
        : seed_(seed), stream_(stream) {}

    std::uint64_t next_u64() noexcept;

    // Uniform on the open interval (0, 1) with 53 bits of resolution.
    double uniform01() noexcept;

    // Standard normal via Box-Muller; consumes two counters per draw.
    double normal() noexcept;

    // Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n) noexcept;

    // A sibling generator on another stream of the same seed, counter 0.
    Rng fork(std::uint64_t stream) const noexcept { return Rng(seed_, stream); }

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream() const noexcept { return stream_; }
    std::uint64_t counter() const noexcept { return counter_; }
    void set_counter(std::uint64_t c) noexcept { counter_ = c; }

    bool operator==(const Rng&) const = default;

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
};

// i.i.d. samples in [lo, hi). Throws ArgumentError when lo > hi.
template <typename T>
Matrix<T> sample_uniform(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng);

// i.i.d. N(0, stddev^2) samples.
template <typename T>
Matrix<T> sample_normal(std::size_t rows, std::size_t cols, double stddev, Rng& rng);

}  // namespace lorasc
