#pragma once

#include <vector>

#include "dastack/matrix.hpp"

namespace dastack {

/// Thin SVD: a == u * diag(singular_values) * vt with k = min(rows, cols).
/// singular_values are sorted descending and non-negative.
struct SvdResult {
  Matrix u;                            // rows x k
  std::vector<double> singular_values;  // k
  Matrix vt;                           // k x cols
};

/// One-sided Jacobi SVD. Deterministic for a fixed input; throws NumericError
/// if the sweep cap is reached without the columns becoming orthogonal.
SvdResult svd(const Matrix& a);

/// Sum of singular values.
double nuclear_norm(const Matrix& a);

/// Sample covariance of the rows of x: columns centered, n-1 divisor.
/// Requires at least 2 rows.
Matrix covariance(const Matrix& x);

/// K[i][j] = exp(-||x_i - y_j||^2 / (2 * bandwidth)). bandwidth must be > 0.
Matrix rbf_kernel_matrix(const Matrix& x, const Matrix& y, double bandwidth);

/// Median of pairwise squared distances over the pooled rows of x and y,
/// zero distances excluded. Returns 1 when every distance is zero, so the
/// result is always usable as a kernel bandwidth.
double median_sq_dist(const Matrix& x, const Matrix& y);

/// Solves m * x = rhs for symmetric positive definite m via Cholesky.
Matrix solve_spd(const Matrix& m, const Matrix& rhs);

}  // namespace dastack
