#include "lorasc/numkit/svd.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "lorasc/errors.hpp"

namespace lorasc {

template <typename T>
std::vector<double> singular_values(const Matrix<T>& m, std::size_t max_sweeps) {
    check_finite(m, "singular_values");
    // Work on the orientation with more rows than columns so the column count
    // (the number of singular values) is min(rows, cols).
    const bool flip = m.rows() < m.cols();
    const std::size_t rows = flip ? m.cols() : m.rows();
    const std::size_t cols = flip ? m.rows() : m.cols();
    if (cols == 0) {
        return {};
    }

    // Column-major working copy: col[j] is contiguous.
    std::vector<std::vector<double>> col(cols, std::vector<double>(rows));
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            const double v = static_cast<double>(m(i, j));
            if (flip) {
                col[i][j] = v;
            } else {
                col[j][i] = v;
            }
        }
    }

    const double eps = std::numeric_limits<double>::epsilon();
    bool converged = false;
    for (std::size_t sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        converged = true;
        for (std::size_t p = 0; p + 1 < cols; ++p) {
            for (std::size_t q = p + 1; q < cols; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < rows; ++i) {
                    alpha += col[p][i] * col[p][i];
                    beta += col[q][i] * col[q][i];
                    gamma += col[p][i] * col[q][i];
                }
                if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) {
                    continue;
                }
                converged = false;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < rows; ++i) {
                    const double xp = col[p][i];
                    const double xq = col[q][i];
                    col[p][i] = c * xp - s * xq;
                    col[q][i] = s * xp + c * xq;
                }
            }
        }
    }
    if (!converged) {
        throw NumericError("singular_values: Jacobi sweeps did not converge within cap of " +
                           std::to_string(max_sweeps) + " sweeps for " + shape_string(m));
    }

    std::vector<double> sv(cols);
    for (std::size_t j = 0; j < cols; ++j) {
        double ss = 0.0;
        for (double v : col[j]) {
            ss += v * v;
        }
        sv[j] = std::sqrt(ss);
    }
    std::sort(sv.begin(), sv.end(), std::greater<>());
    return sv;
}

template std::vector<double> singular_values(const Matrix<float>&, std::size_t);
template std::vector<double> singular_values(const Matrix<double>&, std::size_t);

}  // namespace lorasc
