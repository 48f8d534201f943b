#include "lorasc/numkit/rng.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "lorasc/errors.hpp"

namespace lorasc {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t Rng::next_u64() noexcept {
    const std::uint64_t key = mix64(seed_ + kGolden) ^ mix64(stream_ * kGolden + 0x632BE59BD9B4E019ULL);
    const std::uint64_t c = counter_++;
    return mix64(mix64(key + c * kGolden) ^ c);
}

double Rng::uniform01() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() noexcept {
    const double u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) noexcept {
    // Rejection sampling keeps the result exactly uniform.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = next_u64();
    while (x >= limit) {
        x = next_u64();
    }
    return x % n;
}

template <typename T>
Matrix<T> sample_uniform(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng) {
    if (!(lo <= hi)) {
        throw ArgumentError("sample_uniform: lo (" + std::to_string(lo) + ") > hi (" +
                            std::to_string(hi) + ")");
    }
    Matrix<T> m(rows, cols);
    const T lo_t = static_cast<T>(lo);
    const T hi_t = static_cast<T>(hi);
    for (auto& v : m.values()) {
        T x = static_cast<T>(lo + (hi - lo) * rng.uniform01());
        // Narrowing to T can round up onto the excluded endpoint.
        if (hi > lo && x >= hi_t) {
            x = std::nextafter(hi_t, lo_t);
        }
        v = x;
    }
    return m;
}

template <typename T>
Matrix<T> sample_normal(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
    Matrix<T> m(rows, cols);
    for (auto& v : m.values()) {
        v = static_cast<T>(stddev * rng.normal());
    }
    return m;
}

template Matrix<float> sample_uniform<float>(std::size_t, std::size_t, double, double, Rng&);
template Matrix<double> sample_uniform<double>(std::size_t, std::size_t, double, double, Rng&);
template Matrix<float> sample_normal<float>(std::size_t, std::size_t, double, Rng&);
template Matrix<double> sample_normal<double>(std::size_t, std::size_t, double, Rng&);

}  // namespace lorasc
