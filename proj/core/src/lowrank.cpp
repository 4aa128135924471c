#include "dastack/lowrank.hpp"

#include <algorithm>
#include <cmath>

#include "dastack/errors.hpp"
#include "dastack/linalg.hpp"

namespace dastack {

namespace {

void check_alm_config(const AlmConfig& cfg) {
  if (!(cfg.lambda_e > 0.0)) throw InvalidParameterError("AlmConfig: lambda_e must be > 0");
  if (!(cfg.mu0 > 0.0)) throw InvalidParameterError("AlmConfig: mu0 must be > 0");
  if (!(cfg.rho >= 1.0)) throw InvalidParameterError("AlmConfig: rho must be >= 1");
  if (!(cfg.mu_max >= cfg.mu0)) throw InvalidParameterError("AlmConfig: mu_max < mu0");
  if (!(cfg.tol > 0.0)) throw InvalidParameterError("AlmConfig: tol must be > 0");
  if (cfg.max_iters == 0) throw InvalidParameterError("AlmConfig: max_iters must be >= 1");
}

double l1_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += std::abs(v);
  return s;
}

}  // namespace

Matrix svt(const Matrix& a, double tau) {
  if (!(tau >= 0.0)) throw InvalidParameterError("svt: tau must be >= 0");
  const SvdResult dec = svd(a);
  const std::size_t k = dec.singular_values.size();
  // U * diag(max(s - tau, 0)) * Vt, skipping fully shrunk components.
  Matrix out(a.rows(), a.cols());
  for (std::size_t r = 0; r < k; ++r) {
    const double s = dec.singular_values[r] - tau;
    if (s <= 0.0) break;  // singular values are sorted descending
    for (std::size_t i = 0; i < a.rows(); ++i) {
      const double us = dec.u(i, r) * s;
      if (us == 0.0) continue;
      double* oi = out.row(i).data();
      const double* vr = dec.vt.row(r).data();
      for (std::size_t j = 0; j < a.cols(); ++j) oi[j] += us * vr[j];
    }
  }
  return out;
}

Matrix soft_threshold(const Matrix& a, double tau) {
  if (!(tau >= 0.0)) throw InvalidParameterError("soft_threshold: tau must be >= 0");
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double v = a.values()[i];
    const double mag = std::abs(v) - tau;
    out.values()[i] = mag > 0.0 ? std::copysign(mag, v) : 0.0;
  }
  return out;
}

AlmState solve_lrr(const Matrix& xs, const Matrix& xt, const AlmConfig& cfg) {
  check_alm_config(cfg);
  if (xs.cols() != xt.cols()) throw ShapeError("solve_lrr: feature dims differ");
  if (xs.rows() == 0 || xt.rows() == 0) throw DegenerateInputError("solve_lrr: empty input");

  // Work with samples as columns: A is m x n_s, X is m x n_t.
  const Matrix a = transpose(xs);
  const Matrix x = transpose(xt);
  const std::size_t ns = a.cols();
  const std::size_t nt = x.cols();

  const Matrix at = transpose(a);
  Matrix gram = matmul(at, a);  // I + A^T A stays constant across iterations
  for (std::size_t i = 0; i < ns; ++i) gram(i, i) += 1.0;

  const double x_norm = std::max(1.0, frobenius_norm(x));

  AlmState st;
  st.z = Matrix(ns, nt);
  st.j = Matrix(ns, nt);
  st.e = Matrix(x.rows(), nt);
  st.y1 = Matrix(x.rows(), nt);
  st.y2 = Matrix(ns, nt);
  st.mu = cfg.mu0;
  st.residual_history.reserve(cfg.max_iters);

  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    const double inv_mu = 1.0 / st.mu;

    Matrix jin = st.z;
    add_scaled(jin, st.y2, inv_mu);
    st.j = svt(jin, inv_mu);

    Matrix rhs = matmul(at, x - st.e);
    rhs += st.j;
    add_scaled(rhs, matmul(at, st.y1), inv_mu);
    add_scaled(rhs, st.y2, -inv_mu);
    st.z = solve_spd(gram, rhs);

    const Matrix az = matmul(a, st.z);
    Matrix ein = x - az;
    add_scaled(ein, st.y1, inv_mu);
    st.e = soft_threshold(ein, cfg.lambda_e * inv_mu);

    Matrix r1 = x - az;
    r1 -= st.e;
    add_scaled(st.y1, r1, st.mu);
    Matrix r2 = st.z - st.j;
    add_scaled(st.y2, r2, st.mu);

    st.iterations = it + 1;
    st.residual_primal = frobenius_norm(r1) / x_norm;
    st.residual_history.push_back(st.residual_primal);
    const double z_norm = std::max(1.0, frobenius_norm(st.z));
    if (st.residual_primal <= cfg.tol && frobenius_norm(r2) <= cfg.tol * z_norm) {
      st.converged = true;
      break;
    }
    st.mu = std::min(st.mu * cfg.rho, cfg.mu_max);
  }
  if (!all_finite(st.z) || !all_finite(st.e)) {
    throw NumericError("solve_lrr: iterate diverged to non-finite values");
  }
  st.objective = nuclear_norm(st.z) + cfg.lambda_e * l1_norm(st.e);
  return st;
}

LossWithGrad lowrank_surrogate(const Matrix& xs, const Matrix& xt, const AlmState& state) {
  if (xs.cols() != xt.cols()) throw ShapeError("lowrank_surrogate: feature dims differ");
  if (state.z.rows() != xs.rows() || state.z.cols() != xt.rows())
    throw ShapeError("lowrank_surrogate: state does not match inputs");
  // R = X - A Z - E in the column view; value = 0.5 ||R||_F^2.
  // In the row view: R^T = xt - Z^T xs - E^T.
  const Matrix zt = transpose(state.z);
  const Matrix et = transpose(state.e);
  Matrix rt = xt - matmul(zt, xs);
  rt -= et;
  LossWithGrad out;
  const double nrm = frobenius_norm(rt);
  out.value = 0.5 * nrm * nrm;
  // d/dA = -R Z^T  =>  d/dxs = -(R Z^T)^T = -Z R^T;  d/dX = R  =>  d/dxt = R^T.
  out.grad_source = matmul(state.z, rt);
  out.grad_source *= -1.0;
  out.grad_target = rt;
  return out;
}

LossWithGrad lowrank_penalty(const Matrix& xs, const Matrix& xt, const AlmConfig& cfg) {
  const AlmState st = solve_lrr(xs, xt, cfg);
  LossWithGrad out = lowrank_surrogate(xs, xt, st);
  out.value = st.objective;
  return out;
}

}  // namespace dastack
