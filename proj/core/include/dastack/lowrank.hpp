#pragma once

#include <cstddef>
#include <vector>

#include "dastack/loss.hpp"
#include "dastack/matrix.hpp"

namespace dastack {

/// Settings for the inexact augmented Lagrange multiplier solver of
///   min ||Z||_* + lambda_e * ||E||_1   s.t.   X = A Z + E,
/// where A holds source features and X target features, one sample per
/// column. Non-convergence within max_iters is a reported state, not an
/// error; callers read AlmState::converged.
struct AlmConfig {
  double lambda_e = 1.0;  // weight of the sparse noise term
  double mu0 = 1e-3;
  double rho = 1.2;
  double mu_max = 1e8;
  double tol = 1e-6;
  std::size_t max_iters = 500;
};

/// Solver variables in the sample-as-column view (A = xs^T, X = xt^T).
struct AlmState {
  Matrix z;   // n_source x n_target coding coefficients
  Matrix j;   // auxiliary copy of z for the nuclear norm step
  Matrix e;   // feature_dim x n_target sparse noise
  Matrix y1;  // multiplier on X - A Z - E
  Matrix y2;  // multiplier on Z - J
  double mu = 0.0;
  std::size_t iterations = 0;
  double residual_primal = 0.0;  // ||X - A Z - E||_F / max(1, ||X||_F)
  bool converged = false;
  double objective = 0.0;  // ||Z||_* + lambda_e * ||E||_1
  std::vector<double> residual_history;  // primal residual per iteration
};

/// Singular value thresholding: U * max(S - tau, 0) * V^T, the proximal
/// operator of tau * ||.||_*.
Matrix svt(const Matrix& a, double tau);

/// Entrywise sign(a) * max(|a| - tau, 0), the proximal operator of
/// tau * ||.||_1.
Matrix soft_threshold(const Matrix& a, double tau);

/// Runs the three-block inexact ALM iteration on the row-sample matrices
/// xs (n_s x m) and xt (n_t x m). Feature dimensions must agree.
AlmState solve_lrr(const Matrix& xs, const Matrix& xt, const AlmConfig& cfg);

/// Quadratic coupling term 0.5 * ||X - A Z - E||_F^2 evaluated at the given
/// solver state with Z and E held fixed, plus its exact gradients in xs and
/// xt. This is the pathway through which the solve reaches network training.
LossWithGrad lowrank_surrogate(const Matrix& xs, const Matrix& xt, const AlmState& state);

/// Runs solve_lrr and reports value = ||Z*||_* + lambda_e * ||E*||_1 with the
/// surrogate gradients taken at (Z*, E*).
LossWithGrad lowrank_penalty(const Matrix& xs, const Matrix& xt, const AlmConfig& cfg);

}  // namespace dastack
