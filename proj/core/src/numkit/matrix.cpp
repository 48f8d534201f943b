#include "lorasc/numkit/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "lorasc/errors.hpp"

namespace lorasc {

namespace {

template <typename T>
void require_same_shape(const Matrix<T>& a, const Matrix<T>& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                         shape_string(b));
    }
}

template <typename T>
Matrix<T> finite_or_throw(Matrix<T> m, const char* op) {
    check_finite(m, op);
    return m;
}

}  // namespace

template <typename T>
Matrix<T>::Matrix(std::size_t rows, std::size_t cols, T fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

template <typename T>
Matrix<T>::Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
}

template <typename T>
Matrix<T> Matrix<T>::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = T{1};
    }
    return m;
}

template <typename T>
Matrix<T> Matrix<T>::from_rows(std::initializer_list<std::initializer_list<T>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<T> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw ShapeError("Matrix::from_rows: ragged rows");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
}

template <typename T>
Matrix<T>& Matrix<T>::operator+=(const Matrix& other) {
    require_same_shape(*this, other, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) {
        data_[i] += other.data_[i];
    }
    check_finite(*this, "operator+=");
    return *this;
}

template <typename T>
Matrix<T>& Matrix<T>::operator-=(const Matrix& other) {
    require_same_shape(*this, other, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) {
        data_[i] -= other.data_[i];
    }
    check_finite(*this, "operator-=");
    return *this;
}

template <typename T>
Matrix<T>& Matrix<T>::operator*=(T scalar) {
    for (auto& v : data_) {
        v *= scalar;
    }
    check_finite(*this, "operator*=");
    return *this;
}

template <typename T>
std::string shape_string(const Matrix<T>& m) {
    std::ostringstream os;
    os << '[' << m.rows() << 'x' << m.cols() << ']';
    return os.str();
}

template <typename T>
bool all_finite(const Matrix<T>& m) noexcept {
    for (T v : m.values()) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

template <typename T>
void check_finite(const Matrix<T>& m, const std::string& what) {
    const auto vals = m.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
        if (!std::isfinite(vals[i])) {
            throw NumericError(what + ": non-finite value at element (" +
                               std::to_string(i / m.cols()) + ", " + std::to_string(i % m.cols()) +
                               ") of " + shape_string(m));
        }
    }
}

template <typename T>
bool bit_equal(const Matrix<T>& a, const Matrix<T>& b) noexcept {
    if (!a.same_shape(b)) {
        return false;
    }
    return a.size() == 0 ||
           std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(T)) == 0;
}

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions differ, lhs " + shape_string(a) + " rhs " +
                         shape_string(b));
    }
    Matrix<T> c(a.rows(), b.cols());
    const std::size_t n = a.rows(), inner = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        T* crow = &c(i, 0);
        for (std::size_t k = 0; k < inner; ++k) {
            const T aik = a(i, k);
            const T* brow = &b(k, 0);
            for (std::size_t j = 0; j < m; ++j) {
                crow[j] += aik * brow[j];
            }
        }
    }
    return finite_or_throw(std::move(c), "matmul");
}

template <typename T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: inner dimensions differ, lhs " + shape_string(a) +
                         " rhs^T of " + shape_string(b));
    }
    Matrix<T> c(a.rows(), b.rows());
    const std::size_t inner = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const T* arow = &a(i, 0);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const T* brow = &b(j, 0);
            T acc{0};
            for (std::size_t k = 0; k < inner; ++k) {
                acc += arow[k] * brow[k];
            }
            c(i, j) = acc;
        }
    }
    return finite_or_throw(std::move(c), "matmul_nt");
}

template <typename T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_tn: inner dimensions differ, lhs^T of " + shape_string(a) +
                         " rhs " + shape_string(b));
    }
    Matrix<T> c(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const T* arow = &a(k, 0);
        const T* brow = &b(k, 0);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const T aki = arow[i];
            T* crow = &c(i, 0);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                crow[j] += aki * brow[j];
            }
        }
    }
    return finite_or_throw(std::move(c), "matmul_tn");
}

template <typename T>
Matrix<T> transpose(const Matrix<T>& m) {
    Matrix<T> t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            t(j, i) = m(i, j);
        }
    }
    return t;
}

template <typename T>
Matrix<T> add(const Matrix<T>& a, const Matrix<T>& b) {
    Matrix<T> c = a;
    c += b;
    return c;
}

template <typename T>
Matrix<T> sub(const Matrix<T>& a, const Matrix<T>& b) {
    Matrix<T> c = a;
    c -= b;
    return c;
}

template <typename T>
Matrix<T> scale(const Matrix<T>& m, T s) {
    Matrix<T> c = m;
    c *= s;
    return c;
}

template <typename T>
Matrix<T> hadamard(const Matrix<T>& a, const Matrix<T>& b) {
    require_same_shape(a, b, "hadamard");
    Matrix<T> c = a;
    auto cv = c.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < cv.size(); ++i) {
        cv[i] *= bv[i];
    }
    return finite_or_throw(std::move(c), "hadamard");
}

template <typename T>
double sum_all(const Matrix<T>& m) {
    double s = 0.0;
    for (T v : m.values()) {
        s += static_cast<double>(v);
    }
    return s;
}

template <typename T>
double frobenius_norm(const Matrix<T>& m) {
    double s = 0.0;
    for (T v : m.values()) {
        s += static_cast<double>(v) * static_cast<double>(v);
    }
    return std::sqrt(s);
}

template <typename T>
double max_abs(const Matrix<T>& m) {
    double best = 0.0;
    for (T v : m.values()) {
        best = std::max(best, std::abs(static_cast<double>(v)));
    }
    return best;
}

template <typename T>
double max_abs_diff(const Matrix<T>& a, const Matrix<T>& b) {
    require_same_shape(a, b, "max_abs_diff");
    double best = 0.0;
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) {
        best = std::max(best, std::abs(static_cast<double>(av[i]) - static_cast<double>(bv[i])));
    }
    return best;
}

template <typename T>
double std_all(const Matrix<T>& m) {
    if (m.empty()) {
        throw ShapeError("std_all: empty matrix " + shape_string(m));
    }
    const double n = static_cast<double>(m.size());
    const double mean = sum_all(m) / n;
    double ss = 0.0;
    for (T v : m.values()) {
        const double d = static_cast<double>(v) - mean;
        ss += d * d;
    }
    return std::sqrt(ss / n);
}

template <typename T>
std::uint64_t checksum(const Matrix<T>& m) noexcept {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xFFU;
            h *= 1099511628211ULL;
        }
    };
    mix(m.rows());
    mix(m.cols());
    const auto* bytes = reinterpret_cast<const unsigned char*>(m.values().data());
    for (std::size_t i = 0; i < m.size() * sizeof(T); ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
    }
    return h;
}

#define LORASC_INSTANTIATE_MATRIX(T)                                               \
    template class Matrix<T>;                                                      \
    template std::string shape_string(const Matrix<T>&);                           \
    template void check_finite(const Matrix<T>&, const std::string&);              \
    template bool all_finite(const Matrix<T>&) noexcept;                           \
    template bool bit_equal(const Matrix<T>&, const Matrix<T>&) noexcept;          \
    template Matrix<T> matmul(const Matrix<T>&, const Matrix<T>&);                 \
    template Matrix<T> matmul_nt(const Matrix<T>&, const Matrix<T>&);              \
    template Matrix<T> matmul_tn(const Matrix<T>&, const Matrix<T>&);              \
    template Matrix<T> transpose(const Matrix<T>&);                                \
    template Matrix<T> add(const Matrix<T>&, const Matrix<T>&);                    \
    template Matrix<T> sub(const Matrix<T>&, const Matrix<T>&);                    \
    template Matrix<T> scale(const Matrix<T>&, T);                                 \
    template Matrix<T> hadamard(const Matrix<T>&, const Matrix<T>&);               \
    template double sum_all(const Matrix<T>&);                                     \
    template double frobenius_norm(const Matrix<T>&);                              \
    template double max_abs(const Matrix<T>&);                                     \
    template double max_abs_diff(const Matrix<T>&, const Matrix<T>&);              \
    template double std_all(const Matrix<T>&);                                     \
    template std::uint64_t checksum(const Matrix<T>&) noexcept;

LORASC_INSTANTIATE_MATRIX(float)
LORASC_INSTANTIATE_MATRIX(double)

#undef LORASC_INSTANTIATE_MATRIX

}  // namespace lorasc
