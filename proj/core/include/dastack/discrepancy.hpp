#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "dastack/loss.hpp"
#include "dastack/lowrank.hpp"
#include "dastack/matrix.hpp"

namespace dastack {

enum class MethodTag { Mmd, Cmmd, LowRank, Coral };

const char* method_name(MethodTag tag);

/// Inverse of method_name; nullopt for unknown names.
std::optional<MethodTag> parse_method_tag(std::string_view name);

/// Which distribution-distance a base learner minimizes, plus its knobs.
/// bandwidth_scales multiply the per-call median squared distance heuristic
/// to form the kernel bandwidth list (MMD/CMMD only). alm configures the
/// low-rank solver (LowRank only); alm.lambda_e is the l1 weight.
struct DiscrepancyMethod {
  MethodTag tag = MethodTag::Mmd;
  std::vector<double> bandwidth_scales = {0.25, 0.5, 1.0, 2.0, 4.0};
  AlmConfig alm;
};

void validate(const DiscrepancyMethod& method);

/// Median-heuristic bandwidths for one source/target pair: each scale times
/// median_sq_dist(xs, xt).
std::vector<double> resolve_bandwidths(const Matrix& xs, const Matrix& xt,
                                       std::span<const double> scales);

/// Squared population MMD between the rows of xs and xt, summed over the
/// given kernel bandwidths (biased V-statistic). Bandwidths are treated as
/// constants by the gradients.
LossWithGrad mmd_fixed(const Matrix& xs, const Matrix& xt, std::span<const double> bandwidths);
LossWithGrad mmd(const Matrix& xs, const Matrix& xt, const DiscrepancyMethod& method);

/// Class-conditional MMD: per-class MMD averaged over classes present in
/// both domains (source by true label, target by pseudo-label). Classes
/// missing on either side are skipped; if no class overlaps this throws
/// NoOverlappingClassError.
LossWithGrad cmmd_fixed(const Matrix& xs, const std::vector<int>& ys, const Matrix& xt,
                        const std::vector<int>& yt_pseudo, int n_classes,
                        std::span<const double> bandwidths);
LossWithGrad cmmd(const Matrix& xs, const std::vector<int>& ys, const Matrix& xt,
                  const std::vector<int>& yt_pseudo, int n_classes,
                  const DiscrepancyMethod& method);

/// ||cov(xs) - cov(xt)||_F^2 / (4 m^2) with exact gradients through the
/// centering and covariance. Both inputs need at least 2 rows.
LossWithGrad coral(const Matrix& xs, const Matrix& xt);

/// Data-dependent quantities that the gradients treat as constants. When a
/// filled context is passed back in, the loss is evaluated with the stored
/// bandwidths or solver state frozen; for LowRank the frozen evaluation
/// reports the quadratic surrogate, the same function the gradients
/// differentiate. An empty context is filled on first use.
struct MethodContext {
  std::vector<double> bandwidths;
  std::optional<AlmState> alm;
  bool filled = false;
};

/// Dispatches on method.tag. Labels are consulted only by Cmmd.
LossWithGrad adaptation_loss(const Matrix& xs, const std::vector<int>& ys, const Matrix& xt,
                             const std::vector<int>& yt_pseudo, int n_classes,
                             const DiscrepancyMethod& method, MethodContext* ctx = nullptr);

}  // namespace dastack
