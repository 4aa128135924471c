#include "dastack/stack.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <string>

#include "dastack/errors.hpp"
#include "dastack/io.hpp"

namespace dastack {

std::size_t method_slot(MethodTag tag) {
  switch (tag) {
    case MethodTag::Mmd:
    case MethodTag::Cmmd:
      return 0;
    case MethodTag::LowRank:
      return 1;
    case MethodTag::Coral:
      return 2;
  }
  throw InvalidParameterError("method_slot: unknown tag");
}

namespace {

void check_slot_order(MethodTag t0, MethodTag t1, MethodTag t2, const char* what) {
  if (method_slot(t0) != 0 || t1 != MethodTag::LowRank || t2 != MethodTag::Coral)
    throw ConfigError(std::string(what) +
                      ": bases must be kernel-mean, lowrank, coral in that order");
}

}  // namespace

void validate(const StackedModel& model) {
  if (model.bases.size() != 3) throw ConfigError("StackedModel: expected exactly 3 base learners");
  check_slot_order(model.bases[0].method.tag, model.bases[1].method.tag,
                   model.bases[2].method.tag, "StackedModel");
  for (const BaseLearner& b : model.bases) {
    validate(b);
    if (b.n_classes != model.n_classes)
      throw ConfigError("StackedModel: base learner class count mismatch");
  }
  validate(model.meta);
  if (model.meta.layers.size() != 2 || model.meta.input_dim() != 3 * model.n_classes ||
      model.meta.layers[0].weights.cols() != 64 ||
      model.meta.layers[0].activation != Activation::Relu ||
      model.meta.output_dim() != model.n_classes)
    throw ConfigError("StackedModel: meta must be 3C -> 64 relu -> C");
}

Matrix meta_features(const StackedModel& model, const Matrix& x) {
  if (model.bases.size() != 3)
    throw ConfigError("meta_features: model is missing its three base learners");
  std::vector<Matrix> probs;
  probs.reserve(model.bases.size());
  for (const BaseLearner& b : model.bases) probs.push_back(predict_proba(b, x));
  return hcat(probs);
}

Mlp make_meta(std::size_t n_classes, Rng& rng) {
  if (n_classes < 2) throw InvalidParameterError("make_meta: need at least 2 classes");
  const std::size_t dims[] = {3 * n_classes, 64, n_classes};
  const Activation acts[] = {Activation::Relu, Activation::None};
  return make_mlp(dims, acts, rng);
}

const char* val_domain_name(ValDomain v) { return v == ValDomain::Source ? "source" : "target"; }

void validate(const StackConfig& cfg) {
  check_slot_order(cfg.bases[0].method.tag, cfg.bases[1].method.tag, cfg.bases[2].method.tag,
                   "StackConfig");
  for (const BaseSpec& b : cfg.bases) {
    validate(b.method);
    validate(b.train);
  }
  validate(cfg.meta_sgd);
}

DiscrepancyMethod default_method(MethodTag tag) {
  DiscrepancyMethod m;
  m.tag = tag;
  if (tag == MethodTag::LowRank) m.alm.max_iters = 40;
  return m;
}

TrainConfig default_train_config(MethodTag tag) {
  TrainConfig t;
  switch (tag) {
    case MethodTag::Mmd:
    case MethodTag::Cmmd:
      t.lambda_tradeoff = 1.0;
      break;
    case MethodTag::LowRank:
      t.lambda_tradeoff = 0.1;
      break;
    case MethodTag::Coral:
      t.lambda_tradeoff = 20.0;
      break;
  }
  return t;
}

StackConfig StackConfig::defaults(MethodTag first_tag) {
  if (method_slot(first_tag) != 0)
    throw ConfigError("StackConfig::defaults: first base must be mmd or cmmd");
  StackConfig cfg;
  const MethodTag tags[3] = {first_tag, MethodTag::LowRank, MethodTag::Coral};
  for (std::size_t i = 0; i < 3; ++i) {
    cfg.bases[i].method = default_method(tags[i]);
    cfg.bases[i].train = default_train_config(tags[i]);
  }
  return cfg;
}

void fit_meta(Mlp& meta, const Matrix& features, const std::vector<int>& labels,
              const SgdConfig& sgd, Rng& rng, std::vector<MetaEpochStats>* history) {
  validate(meta);
  validate(sgd);
  const std::size_t n = features.rows();
  if (n == 0) throw DegenerateInputError("fit_meta: empty training set");
  if (labels.size() != n) throw ShapeError("fit_meta: label count does not match rows");
  for (int y : labels)
    if (y < 0 || y >= static_cast<int>(meta.output_dim()))
      throw InvalidParameterError("fit_meta: label out of range");

  const std::size_t steps_per_epoch = (n + sgd.batch_size - 1) / sgd.batch_size;
  const std::size_t total_steps = sgd.epochs * steps_per_epoch;
  MlpGrads velocity = zero_grads(meta);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < sgd.epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    double loss_sum = 0.0;
    double lr_first = 0.0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b, ++step) {
      const std::size_t lo = b * sgd.batch_size;
      const std::size_t hi = std::min(lo + sgd.batch_size, n);
      std::vector<std::size_t> rows(idx.begin() + static_cast<std::ptrdiff_t>(lo),
                                    idx.begin() + static_cast<std::ptrdiff_t>(hi));
      const Matrix x = gather_rows(features, rows);
      std::vector<int> y;
      y.reserve(rows.size());
      for (std::size_t i : rows) y.push_back(labels[i]);

      ForwardCache cache;
      const Matrix logits = forward(meta, x, &cache);
      XentResult xe = softmax_xent(logits, y);
      if (!std::isfinite(xe.loss))
        throw NumericError("fit_meta: loss diverged at epoch " + std::to_string(epoch) +
                           " batch " + std::to_string(b));
      MlpGrads grads = zero_grads(meta);
      backward_into(meta, cache, std::move(xe.grad_logits), grads);

      const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
      const double lr = lr_at(sgd, progress);
      if (b == 0) lr_first = lr;
      sgd_step(meta, grads, velocity, lr, sgd.momentum);
      loss_sum += xe.loss;
    }
    if (history) {
      MetaEpochStats st;
      st.epoch = epoch;
      st.loss = loss_sum / static_cast<double>(steps_per_epoch);
      st.lr = lr_first;
      const std::vector<int> pred = argmax_rows(forward(meta, features, nullptr));
      std::size_t hits = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (pred[i] == labels[i]) ++hits;
      st.val_acc = static_cast<double>(hits) / static_cast<double>(n);
      history->push_back(st);
    }
  }
}

StackedModel fit_stack(const StackPlan& plan, const StackConfig& cfg, std::uint64_t root_seed,
                       StackHistory* history) {
  validate(cfg);
  const LabeledSet& strain = plan.source.train;
  const LabeledSet& ttrain = plan.target.train;
  if (strain.size() == 0 || ttrain.size() == 0)
    throw DegenerateInputError("fit_stack: empty training split");
  if (!strain.labels) throw ProtocolError("fit_stack: source training split must be labeled");
  const LabeledSet& val =
      plan.val_domain == ValDomain::Source ? plan.source.val : plan.target.val;
  if (val.size() == 0)
    throw ProtocolError("fit_stack: validation split is empty, nothing to train the meta on");
  if (!val.labels)
    throw ProtocolError("fit_stack: validation split is unlabeled; use val_domain=source or "
                        "provide target labels");

  int max_label = 0;
  for (int y : *strain.labels) max_label = std::max(max_label, y);
  for (int y : *val.labels) max_label = std::max(max_label, y);
  const std::size_t n_classes = static_cast<std::size_t>(max_label) + 1;
  if (n_classes < 2) throw DegenerateInputError("fit_stack: need at least 2 classes");

  StackedModel model;
  model.n_classes = n_classes;
  static const char* kStreams[3] = {"base0", "base1", "base2"};
  for (std::size_t i = 0; i < 3; ++i) {
    const std::uint64_t seed_i = derive_seed(root_seed, kStreams[i]);
    Rng init = make_rng(seed_i, "init");
    BaseLearner base = make_base_learner(strain.features.cols(), n_classes,
                                         cfg.bases[i].method.tag, init);
    base.method = cfg.bases[i].method;
    Rng sgd = make_rng(seed_i, "sgd");
    TrainHistory h = train_base(base, strain, ttrain, cfg.bases[i].train, sgd);
    if (history) history->bases[i] = std::move(h);
    model.bases.push_back(std::move(base));
  }

  std::vector<bool> seen(n_classes, false);
  for (int y : *val.labels) seen[static_cast<std::size_t>(y)] = true;
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    std::cerr << "warning: validation split does not cover every class; the meta learner "
                 "cannot calibrate the missing ones\n";
    if (history) history->degenerate_validation = true;
  }
  const LabeledSet& val_train =
      plan.val_domain == ValDomain::Source ? strain : ttrain;
  if (val.size() == val_train.size() && val.features.values() == val_train.features.values()) {
    std::cerr << "warning: validation split duplicates the training split; the meta learner "
                 "is being fit on resubstitution predictions\n";
    if (history) history->degenerate_validation = true;
  }

  const std::uint64_t meta_seed = derive_seed(root_seed, "meta");
  Rng meta_init = make_rng(meta_seed, "init");
  model.meta = make_meta(n_classes, meta_init);
  const Matrix mf = meta_features(model, val.features);
  Rng meta_sgd = make_rng(meta_seed, "sgd");
  fit_meta(model.meta, mf, *val.labels, cfg.meta_sgd, meta_sgd,
           history ? &history->meta : nullptr);
  validate(model);
  return model;
}

Matrix predict_proba(const StackedModel& model, const Matrix& x) {
  return softmax(forward(model.meta, meta_features(model, x), nullptr));
}

std::vector<int> predict(const StackedModel& model, const Matrix& x) {
  return argmax_rows(forward(model.meta, meta_features(model, x), nullptr));
}

Evaluation evaluate(std::span<const int> predicted, std::span<const int> truth,
                    std::size_t n_classes) {
  if (predicted.size() != truth.size())
    throw ShapeError("evaluate: prediction/label count mismatch");
  if (predicted.empty()) throw DegenerateInputError("evaluate: nothing to evaluate");
  Evaluation ev;
  ev.confusion.assign(n_classes, std::vector<long>(n_classes, 0));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const int p = predicted[i];
    const int t = truth[i];
    if (p < 0 || t < 0 || p >= static_cast<int>(n_classes) || t >= static_cast<int>(n_classes))
      throw InvalidParameterError("evaluate: label outside [0, n_classes)");
    ++ev.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    if (p == t) ++hits;
  }
  ev.accuracy = static_cast<double>(hits) / static_cast<double>(predicted.size());
  return ev;
}

Evaluation evaluate(const BaseLearner& learner, const LabeledSet& set) {
  if (!set.labels) throw ProtocolError("evaluate: set has no labels");
  return evaluate(predict(learner, set.features), *set.labels, learner.n_classes);
}

Evaluation evaluate(const StackedModel& model, const LabeledSet& set) {
  if (!set.labels) throw ProtocolError("evaluate: set has no labels");
  return evaluate(predict(model, set.features), *set.labels, model.n_classes);
}

}  // namespace dastack
