#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace lorasc {

// Dense row-major 2-D array. All numeric state in the project (weights,
// activations, gradients, adapter factors, noise) is carried by Matrix<T>,
// instantiated for float (production) and double (tight-tolerance testing).
template <typename T>
class Matrix {
public:
    using value_type = T;

    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T{0});
    Matrix(std::size_t rows, std::size_t cols, std::vector<T> data);

    static Matrix identity(std::size_t n);
    static Matrix from_rows(std::initializer_list<std::initializer_list<T>> rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(T scalar);

    bool same_shape(const Matrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    // Value comparison (0.0 == -0.0). Use bit_equal() for byte identity.
    bool operator==(const Matrix& other) const = default;

    template <typename U>
    Matrix<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) {
            out[i] = static_cast<U>(data_[i]);
        }
        return Matrix<U>(rows_, cols_, std::move(out));
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

template <typename T>
std::string shape_string(const Matrix<T>& m);

// Throws NumericError naming `what` if any element is NaN or infinite.
template <typename T>
void check_finite(const Matrix<T>& m, const std::string& what);

template <typename T>
bool all_finite(const Matrix<T>& m) noexcept;

template <typename T>
bool bit_equal(const Matrix<T>& a, const Matrix<T>& b) noexcept;

// c = a * b
template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b);

// c = a * b^T
template <typename T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b);

// c = a^T * b
template <typename T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b);

template <typename T>
Matrix<T> transpose(const Matrix<T>& m);

template <typename T>
Matrix<T> add(const Matrix<T>& a, const Matrix<T>& b);

template <typename T>
Matrix<T> sub(const Matrix<T>& a, const Matrix<T>& b);

template <typename T>
Matrix<T> scale(const Matrix<T>& m, T s);

template <typename T>
Matrix<T> hadamard(const Matrix<T>& a, const Matrix<T>& b);

// Reductions accumulate in double in row-major order so results are
// independent of build flags.
template <typename T>
double sum_all(const Matrix<T>& m);

template <typename T>
double frobenius_norm(const Matrix<T>& m);

template <typename T>
double max_abs(const Matrix<T>& m);

template <typename T>
double max_abs_diff(const Matrix<T>& a, const Matrix<T>& b);

// Population standard deviation over every element (divides by n).
template <typename T>
double std_all(const Matrix<T>& m);

// FNV-1a over the raw bytes; used for freeze/isolation checks and digests.
template <typename T>
std::uint64_t checksum(const Matrix<T>& m) noexcept;

using MatrixF = Matrix<float>;
using MatrixD = Matrix<double>;

}  // namespace lorasc
