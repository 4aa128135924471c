#pragma once

#include <optional>
#include <vector>

#include "dastack/data.hpp"
#include "dastack/discrepancy.hpp"
#include "dastack/nn.hpp"

namespace dastack {

/// One discrepancy-minimizing base learner. A shared extractor g feeds d
/// parallel substructures s_1..s_d; the classifier f consumes their
/// concatenated outputs. The adaptation penalty is applied independently to
/// each substructure's output, so the representations align at several
/// depths and widths at once.
struct BaseLearner {
  Mlp shared;
  std::vector<Mlp> substructures;
  Mlp classifier;
  DiscrepancyMethod method;
  std::size_t n_classes = 0;
};

void validate(const BaseLearner& learner);

/// Default architecture: g is input -> 32 relu -> 16, followed by four
/// substructures of differing depth (16->16r->8, 16->16r->12r->8, 16->8,
/// 16->8) and a linear classifier on the 32-wide concatenation.
BaseLearner make_base_learner(std::size_t input_dim, std::size_t n_classes, MethodTag tag,
                              Rng& rng);

/// Forward state of the representation stage for one batch.
struct ExtractResult {
  ForwardCache shared_cache;
  std::vector<ForwardCache> sub_caches;
  std::vector<Matrix> sub_outputs;
  Matrix concat;
};

ExtractResult extract(const BaseLearner& learner, const Matrix& x);

/// Gradients (or momentum buffers) for every parameter of a base learner.
struct LearnerGrads {
  MlpGrads shared;
  std::vector<MlpGrads> substructures;
  MlpGrads classifier;
};

LearnerGrads zero_grads(const BaseLearner& learner);

/// Frozen per-substructure quantities for finite-difference checks: kernel
/// bandwidths and low-rank solver states captured on the first evaluation
/// and reused afterwards, making the joint loss a fixed differentiable
/// function of the inputs.
struct AdaptContext {
  std::vector<MethodContext> methods;
  bool filled = false;
};

struct Eq1Result {
  double total = 0.0;
  double class_loss = 0.0;
  double adapt_loss = 0.0;  // unweighted sum over substructures
};

/// Joint objective on one batch pair: source cross-entropy plus
/// lambda * sum_i D(s_i(g(xs)), s_i(g(xt))). Parameter gradients are
/// accumulated into `grads`. Target labels enter only as Cmmd pseudo-labels;
/// when lambda is zero the target pass is skipped entirely.
Eq1Result eq1_loss(const BaseLearner& learner, const Matrix& xs, const std::vector<int>& ys,
                   const Matrix& xt, const std::vector<int>& yt_pseudo, double lambda,
                   LearnerGrads& grads, AdaptContext* ctx = nullptr);

/// Draws equal-sized index batches from both domains. The source side is an
/// epoch-wise shuffle consumed without replacement; the target side is an
/// independent shuffle that wraps (reshuffling) when exhausted.
class BalancedSampler {
 public:
  BalancedSampler(std::size_t n_source, std::size_t n_target, std::size_t batch_size);

  /// Reshuffles the source pool; call at the start of every epoch.
  void start_epoch(Rng& rng);

  struct Batch {
    std::vector<std::size_t> source;
    std::vector<std::size_t> target;
  };

  /// Next batch of the current epoch. The source part holds at most
  /// batch_size indices (fewer on the final batch); the target part always
  /// matches the source count.
  Batch next(Rng& rng);

  std::size_t batches_per_epoch() const { return batches_per_epoch_; }
  bool target_wrapped() const { return target_wrapped_; }

 private:
  std::vector<std::size_t> source_pool_;
  std::vector<std::size_t> target_pool_;
  std::size_t batch_size_ = 0;
  std::size_t source_pos_ = 0;
  std::size_t target_pos_ = 0;
  std::size_t batches_per_epoch_ = 0;
  bool target_wrapped_ = false;
};

struct TrainConfig {
  SgdConfig sgd;
  double lambda_tradeoff = 1.0;
  std::size_t warmup_epochs = 3;  ///< epochs trained with lambda forced to 0
  bool pseudo_refresh = true;     ///< re-estimate Cmmd pseudo-labels each epoch
};

void validate(const TrainConfig& cfg);

struct EpochStats {
  std::size_t epoch = 0;
  double class_loss = 0.0;  // batch means
  double adapt_loss = 0.0;
  double lr = 0.0;  // learning rate at the first step of the epoch
  double source_acc = 0.0;
  std::optional<double> target_acc;  // only when target labels are available
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
};

/// Current-model argmax predictions on the target features, used as Cmmd
/// pseudo-labels.
std::vector<int> refresh_pseudo_labels(const BaseLearner& learner, const Matrix& xt);

/// Minibatch SGD on the joint objective. Target labels, when present, are
/// used for reporting only and never touch a gradient. Throws NumericError
/// if the loss stops being finite.
TrainHistory train_base(BaseLearner& learner, const LabeledSet& source, const LabeledSet& target,
                        const TrainConfig& cfg, Rng& rng);

/// Row-wise class probabilities from the full pipeline.
Matrix predict_proba(const BaseLearner& learner, const Matrix& x);

std::vector<int> predict(const BaseLearner& learner, const Matrix& x);

}  // namespace dastack
