#pragma once

#include <cstddef>
#include <vector>

#include "lorasc/numkit/matrix.hpp"

namespace lorasc {

inline constexpr std::size_t kSvdMaxSweeps = 80;

// Singular values in descending order, count = min(rows, cols).
// One-sided Jacobi in double precision; throws NumericError if the rotation
// sweeps have not converged after `max_sweeps`.
template <typename T>
std::vector<double> singular_values(const Matrix<T>& m, std::size_t max_sweeps = kSvdMaxSweeps);

}  // namespace lorasc
