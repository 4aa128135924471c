#pragma once

#include <array>
#include <span>

#include "dastack/adapt.hpp"

namespace dastack {

/// Three base learners (kernel-mean, low-rank, covariance alignment, in that
/// order) combined by a small network trained on their stacked class
/// probabilities.
struct StackedModel {
  std::vector<BaseLearner> bases;
  Mlp meta;
  std::size_t n_classes = 0;
};

void validate(const StackedModel& model);

/// Seed-stream slot per method. The kernel-mean variants share slot 0, so a
/// single-method run and the corresponding stack row start from identical
/// parameters.
std::size_t method_slot(MethodTag tag);

/// Concatenated per-base class probabilities, the meta learner's input.
Matrix meta_features(const StackedModel& model, const Matrix& x);

/// Meta network: 3 * n_classes -> 64 relu -> n_classes.
Mlp make_meta(std::size_t n_classes, Rng& rng);

enum class ValDomain { Source, Target };

const char* val_domain_name(ValDomain v);

/// Which rows each stage consumes: bases train on source.train + target.train,
/// the meta learner on the validation split of the chosen domain.
struct StackPlan {
  DataSplit source;
  DataSplit target;
  ValDomain val_domain = ValDomain::Source;
};

struct BaseSpec {
  DiscrepancyMethod method;
  TrainConfig train;
};

struct StackConfig {
  std::array<BaseSpec, 3> bases;
  SgdConfig meta_sgd;

  /// Per-method calibrated defaults; first_tag picks Mmd or Cmmd for slot 0.
  static StackConfig defaults(MethodTag first_tag = MethodTag::Cmmd);
};

void validate(const StackConfig& cfg);

DiscrepancyMethod default_method(MethodTag tag);

/// Training defaults per method. The trade-off weight differs across
/// discrepancies because their raw magnitudes differ by orders of magnitude;
/// the low-rank entry also swaps in a truncated solver schedule, since a
/// fully converged code pushes the whole residual into the sparse term and
/// leaves no gradient for the network.
TrainConfig default_train_config(MethodTag tag);

struct MetaEpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double val_acc = 0.0;
};

struct StackHistory {
  std::array<TrainHistory, 3> bases;
  std::vector<MetaEpochStats> meta;
  bool degenerate_validation = false;  ///< validation split missed some class
};

/// Supervised minibatch SGD for the meta network on fixed features.
void fit_meta(Mlp& meta, const Matrix& features, const std::vector<int>& labels,
              const SgdConfig& sgd, Rng& rng, std::vector<MetaEpochStats>* history = nullptr);

/// Trains the three bases sequentially, then the meta learner on the
/// validation split. Every stage draws from a stream derived from root_seed
/// ("base0".."base2", "meta", each split into "init" and "sgd"), so the whole
/// model is a pure function of data, config and root_seed.
StackedModel fit_stack(const StackPlan& plan, const StackConfig& cfg, std::uint64_t root_seed,
                       StackHistory* history = nullptr);

Matrix predict_proba(const StackedModel& model, const Matrix& x);
std::vector<int> predict(const StackedModel& model, const Matrix& x);

struct Evaluation {
  double accuracy = 0.0;
  std::vector<std::vector<long>> confusion;  // confusion[truth][predicted]
};

Evaluation evaluate(std::span<const int> predicted, std::span<const int> truth,
                    std::size_t n_classes);
Evaluation evaluate(const BaseLearner& learner, const LabeledSet& set);
Evaluation evaluate(const StackedModel& model, const LabeledSet& set);

}  // namespace dastack
