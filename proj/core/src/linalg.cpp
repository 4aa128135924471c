#include "dastack/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dastack/errors.hpp"

namespace dastack {

namespace {

// Hestenes one-sided Jacobi on the rows of g, where row j of g is column j
// of the (tall) matrix being decomposed. vt accumulates the right singular
// vectors, one per row. Rotations stop once every pair of rows is orthogonal
// relative to kOrthTol.
void jacobi_orthogonalize(Matrix& g, Matrix& vt) {
  constexpr int kMaxSweeps = 100;
  constexpr double kOrthTol = 1e-14;
  const std::size_t n = g.rows();
  const std::size_t m = g.cols();
  if (n <= 1) return;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double* gp = g.row(p).data();
        double* gq = g.row(q).data();
        double app = 0.0, aqq = 0.0, apq = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
          app += gp[k] * gp[k];
          aqq += gq[k] * gq[k];
          apq += gp[k] * gq[k];
        }
        if (apq == 0.0 || std::abs(apq) <= kOrthTol * std::sqrt(app * aqq)) continue;
        rotated = true;
        const double zeta = (aqq - app) / (2.0 * apq);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t k = 0; k < m; ++k) {
          const double xp = gp[k], xq = gq[k];
          gp[k] = c * xp - s * xq;
          gq[k] = s * xp + c * xq;
        }
        double* vp = vt.row(p).data();
        double* vq = vt.row(q).data();
        for (std::size_t k = 0; k < n; ++k) {
          const double xp = vp[k], xq = vq[k];
          vp[k] = c * xp - s * xq;
          vq[k] = s * xp + c * xq;
        }
      }
    }
    if (!rotated) return;
  }
  throw NumericError("svd: Jacobi sweep cap reached without convergence");
}

}  // namespace

SvdResult svd(const Matrix& a) {
  if (!all_finite(a)) throw InvalidParameterError("svd: non-finite input");
  const bool flip = a.rows() < a.cols();   // decompose the transpose when wide
  const std::size_t m = flip ? a.rows() : a.cols();  // = min(rows, cols)
  Matrix g = flip ? a : transpose(a);      // m rows, each a column of the tall matrix
  Matrix vt = Matrix::identity(m);
  jacobi_orthogonalize(g, vt);

  std::vector<double> sv(m);
  for (std::size_t j = 0; j < m; ++j) {
    double s = 0.0;
    for (double v : g.row(j)) s += v * v;
    sv[j] = std::sqrt(s);
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return sv[i] > sv[j]; });

  SvdResult out;
  out.singular_values.resize(m);
  out.u = Matrix(a.rows(), m);
  out.vt = Matrix(m, a.cols());
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t src = order[j];
    const double s = sv[src];
    out.singular_values[j] = s;
    if (!flip) {
      // a = tall: columns of U are the normalized rows of g, rows of vt come
      // from the accumulated rotations.
      if (s > 0.0)
        for (std::size_t i = 0; i < a.rows(); ++i) out.u(i, j) = g(src, i) / s;
      for (std::size_t k = 0; k < m; ++k) out.vt(j, k) = vt(src, k);
    } else {
      // a = tall^T, so the roles of u and vt swap.
      for (std::size_t i = 0; i < a.rows(); ++i) out.u(i, j) = vt(src, i);
      if (s > 0.0)
        for (std::size_t k = 0; k < a.cols(); ++k) out.vt(j, k) = g(src, k) / s;
    }
  }
  return out;
}

double nuclear_norm(const Matrix& a) {
  const auto res = svd(a);
  double s = 0.0;
  for (double v : res.singular_values) s += v;
  return s;
}

Matrix covariance(const Matrix& x) {
  const std::size_t n = x.rows();
  if (n < 2) throw DegenerateInputError("covariance: needs at least 2 rows");
  const std::size_t m = x.cols();
  std::vector<double> mean(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = x.row(i);
    for (std::size_t j = 0; j < m; ++j) mean[j] += r[j];
  }
  for (double& v : mean) v /= static_cast<double>(n);
  Matrix centered(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) centered(i, j) = x(i, j) - mean[j];
  Matrix cov = matmul(transpose(centered), centered);
  cov *= 1.0 / static_cast<double>(n - 1);
  return cov;
}

Matrix rbf_kernel_matrix(const Matrix& x, const Matrix& y, double bandwidth) {
  if (!(bandwidth > 0.0)) {
    throw InvalidParameterError("rbf_kernel_matrix: bandwidth must be positive, got " +
                                std::to_string(bandwidth));
  }
  if (x.cols() != y.cols()) throw ShapeError("rbf_kernel_matrix: feature dims differ");
  Matrix k(x.rows(), y.rows());
  const double inv = 1.0 / (2.0 * bandwidth);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < y.rows(); ++j)
      k(i, j) = std::exp(-sq_dist(x.row(i), y.row(j)) * inv);
  return k;
}

double median_sq_dist(const Matrix& x, const Matrix& y) {
  if (x.cols() != y.cols()) throw ShapeError("median_sq_dist: feature dims differ");
  const std::size_t nx = x.rows();
  const std::size_t n = nx + y.rows();
  auto row = [&](std::size_t i) { return i < nx ? x.row(i) : y.row(i - nx); };
  std::vector<double> d2;
  d2.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = sq_dist(row(i), row(j));
      if (d > 0.0) d2.push_back(d);
    }
  if (d2.empty()) return 1.0;
  std::sort(d2.begin(), d2.end());
  const std::size_t k = d2.size();
  return k % 2 == 1 ? d2[k / 2] : 0.5 * (d2[k / 2 - 1] + d2[k / 2]);
}

Matrix solve_spd(const Matrix& m, const Matrix& rhs) {
  const std::size_t n = m.rows();
  if (m.cols() != n) throw ShapeError("solve_spd: matrix not square");
  if (rhs.rows() != n) throw ShapeError("solve_spd: rhs rows mismatch");
  // Cholesky m = L L^T, stored in the lower triangle.
  Matrix l(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = m(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      if (i == j) {
        if (!(s > 0.0)) throw NumericError("solve_spd: matrix not positive definite");
        l(i, i) = std::sqrt(s);
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
  Matrix x = rhs;
  const std::size_t c = rhs.cols();
  // forward: L z = rhs
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t col = 0; col < c; ++col) {
      double s = x(i, col);
      for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x(k, col);
      x(i, col) = s / l(i, i);
    }
  // backward: L^T x = z
  for (std::size_t ii = n; ii-- > 0;)
    for (std::size_t col = 0; col < c; ++col) {
      double s = x(ii, col);
      for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x(k, col);
      x(ii, col) = s / l(ii, ii);
    }
  if (!all_finite(x)) throw NumericError("solve_spd: non-finite solution");
  return x;
}

}  // namespace dastack
