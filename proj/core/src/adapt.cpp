#include "dastack/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <string>

#include "dastack/errors.hpp"
#include "dastack/io.hpp"

namespace dastack {

void validate(const BaseLearner& learner) {
  validate(learner.shared);
  if (learner.substructures.empty())
    throw InvalidParameterError("BaseLearner: needs at least one substructure");
  std::size_t concat_width = 0;
  for (const Mlp& sub : learner.substructures) {
    validate(sub);
    if (sub.input_dim() != learner.shared.output_dim())
      throw ShapeError("BaseLearner: substructure input does not match shared output");
    concat_width += sub.output_dim();
  }
  validate(learner.classifier);
  if (learner.classifier.input_dim() != concat_width)
    throw ShapeError("BaseLearner: classifier input does not match concatenated width");
  if (learner.n_classes < 2) throw InvalidParameterError("BaseLearner: need at least 2 classes");
  if (learner.classifier.output_dim() != learner.n_classes)
    throw ShapeError("BaseLearner: classifier output does not match n_classes");
  validate(learner.method);
}

BaseLearner make_base_learner(std::size_t input_dim, std::size_t n_classes, MethodTag tag,
                              Rng& rng) {
  if (input_dim == 0) throw InvalidParameterError("make_base_learner: input_dim must be >= 1");
  if (n_classes < 2) throw InvalidParameterError("make_base_learner: need at least 2 classes");
  using A = Activation;
  const auto mk = [&rng](std::initializer_list<std::size_t> dims,
                         std::initializer_list<A> acts) {
    return make_mlp(std::span<const std::size_t>(dims.begin(), dims.size()),
                    std::span<const A>(acts.begin(), acts.size()), rng);
  };
  BaseLearner learner;
  learner.shared = mk({input_dim, 32, 16}, {A::Relu, A::None});
  learner.substructures.push_back(mk({16, 16, 8}, {A::Relu, A::None}));
  learner.substructures.push_back(mk({16, 16, 12, 8}, {A::Relu, A::Relu, A::None}));
  learner.substructures.push_back(mk({16, 8}, {A::None}));
  learner.substructures.push_back(mk({16, 8}, {A::None}));
  learner.classifier = mk({32, n_classes}, {A::None});
  learner.method.tag = tag;
  learner.n_classes = n_classes;
  validate(learner);
  return learner;
}

ExtractResult extract(const BaseLearner& learner, const Matrix& x) {
  ExtractResult r;
  Matrix rep = forward(learner.shared, x, &r.shared_cache);
  r.sub_caches.resize(learner.substructures.size());
  r.sub_outputs.reserve(learner.substructures.size());
  for (std::size_t i = 0; i < learner.substructures.size(); ++i)
    r.sub_outputs.push_back(forward(learner.substructures[i], rep, &r.sub_caches[i]));
  r.concat = hcat(r.sub_outputs);
  return r;
}

LearnerGrads zero_grads(const BaseLearner& learner) {
  LearnerGrads g;
  g.shared = zero_grads(learner.shared);
  g.substructures.reserve(learner.substructures.size());
  for (const Mlp& sub : learner.substructures) g.substructures.push_back(zero_grads(sub));
  g.classifier = zero_grads(learner.classifier);
  return g;
}

namespace {

Matrix slice_cols(const Matrix& m, std::size_t off, std::size_t width) {
  Matrix out(m.rows(), width);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double* src = m.row(i).data() + off;
    double* dst = out.row(i).data();
    for (std::size_t j = 0; j < width; ++j) dst[j] = src[j];
  }
  return out;
}

double accuracy_of(const BaseLearner& learner, const Matrix& x, const std::vector<int>& y) {
  const std::vector<int> pred = predict(learner, x);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == y[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace

Eq1Result eq1_loss(const BaseLearner& learner, const Matrix& xs, const std::vector<int>& ys,
                   const Matrix& xt, const std::vector<int>& yt_pseudo, double lambda,
                   LearnerGrads& grads, AdaptContext* ctx) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw InvalidParameterError("eq1_loss: lambda must be finite and >= 0");
  const std::size_t d = learner.substructures.size();
  if (grads.substructures.size() != d) throw ShapeError("eq1_loss: grads do not match learner");
  if (ctx && ctx->methods.size() != d) ctx->methods.resize(d);

  ExtractResult es = extract(learner, xs);
  ForwardCache cls_cache;
  const Matrix logits = forward(learner.classifier, es.concat, &cls_cache);
  XentResult xe = softmax_xent(logits, ys);
  const Matrix dconcat =
      backward_into(learner.classifier, cls_cache, std::move(xe.grad_logits), grads.classifier);

  Eq1Result out;
  out.class_loss = xe.loss;

  const bool adapting = lambda != 0.0;
  ExtractResult et;
  Matrix shared_grad_t;
  if (adapting) {
    et = extract(learner, xt);
    shared_grad_t = Matrix(xt.rows(), learner.shared.output_dim());
  }
  Matrix shared_grad_s(xs.rows(), learner.shared.output_dim());

  std::size_t off = 0;
  for (std::size_t i = 0; i < d; ++i) {
    const Mlp& sub = learner.substructures[i];
    const std::size_t width = sub.output_dim();
    Matrix grad_out_s = slice_cols(dconcat, off, width);
    off += width;

    if (adapting) {
      MethodContext* mc = ctx ? &ctx->methods[i] : nullptr;
      LossWithGrad disc =
          adaptation_loss(es.sub_outputs[i], ys, et.sub_outputs[i], yt_pseudo,
                          static_cast<int>(learner.n_classes), learner.method, mc);
      out.adapt_loss += disc.value;
      add_scaled(grad_out_s, disc.grad_source, lambda);
      disc.grad_target *= lambda;
      shared_grad_t += backward_into(sub, et.sub_caches[i], std::move(disc.grad_target),
                                     grads.substructures[i]);
    }
    shared_grad_s +=
        backward_into(sub, es.sub_caches[i], std::move(grad_out_s), grads.substructures[i]);
  }
  backward_into(learner.shared, es.shared_cache, std::move(shared_grad_s), grads.shared);
  if (adapting)
    backward_into(learner.shared, et.shared_cache, std::move(shared_grad_t), grads.shared);

  if (ctx) ctx->filled = true;
  out.total = out.class_loss + lambda * out.adapt_loss;
  return out;
}

BalancedSampler::BalancedSampler(std::size_t n_source, std::size_t n_target,
                                 std::size_t batch_size)
    : batch_size_(batch_size) {
  if (batch_size == 0) throw InvalidParameterError("BalancedSampler: batch_size must be >= 1");
  if (n_source == 0 || n_target == 0)
    throw DegenerateInputError("BalancedSampler: both domains need at least one row");
  source_pool_.resize(n_source);
  for (std::size_t i = 0; i < n_source; ++i) source_pool_[i] = i;
  target_pool_.resize(n_target);
  for (std::size_t i = 0; i < n_target; ++i) target_pool_[i] = i;
  batches_per_epoch_ = (n_source + batch_size - 1) / batch_size;
  // A trailing batch of one row breaks covariance-based penalties, so an
  // orphan row joins the preceding batch instead of standing alone.
  if (batches_per_epoch_ > 1 && n_source % batch_size == 1) --batches_per_epoch_;
  source_pos_ = n_source;  // next() is invalid until start_epoch
}

void BalancedSampler::start_epoch(Rng& rng) {
  std::shuffle(source_pool_.begin(), source_pool_.end(), rng);
  source_pos_ = 0;
}

BalancedSampler::Batch BalancedSampler::next(Rng& rng) {
  if (source_pos_ >= source_pool_.size())
    throw ProtocolError("BalancedSampler: epoch exhausted, call start_epoch first");
  std::size_t take = std::min(batch_size_, source_pool_.size() - source_pos_);
  if (source_pool_.size() - source_pos_ - take == 1) ++take;
  Batch b;
  b.source.assign(source_pool_.begin() + static_cast<std::ptrdiff_t>(source_pos_),
                  source_pool_.begin() + static_cast<std::ptrdiff_t>(source_pos_ + take));
  source_pos_ += take;
  b.target.reserve(take);
  for (std::size_t k = 0; k < take; ++k) {
    if (target_pos_ == 0) std::shuffle(target_pool_.begin(), target_pool_.end(), rng);
    b.target.push_back(target_pool_[target_pos_]);
    if (++target_pos_ == target_pool_.size()) {
      target_pos_ = 0;
      if (k + 1 < take || source_pos_ < source_pool_.size()) target_wrapped_ = true;
    }
  }
  return b;
}

void validate(const TrainConfig& cfg) {
  validate(cfg.sgd);
  if (!(cfg.lambda_tradeoff >= 0.0) || !std::isfinite(cfg.lambda_tradeoff))
    throw InvalidParameterError("TrainConfig: lambda_tradeoff must be finite and >= 0");
}

std::vector<int> refresh_pseudo_labels(const BaseLearner& learner, const Matrix& xt) {
  return predict(learner, xt);
}

TrainHistory train_base(BaseLearner& learner, const LabeledSet& source, const LabeledSet& target,
                        const TrainConfig& cfg, Rng& rng) {
  validate(learner);
  validate(cfg);
  validate(source);
  validate(target);
  if (!source.labels) throw ProtocolError("train_base: source set must be labeled");
  if (source.size() == 0 || target.size() == 0)
    throw DegenerateInputError("train_base: empty domain");
  if (source.features.cols() != learner.shared.input_dim() ||
      target.features.cols() != learner.shared.input_dim())
    throw ShapeError("train_base: feature width does not match the learner");
  for (int y : *source.labels)
    if (y >= static_cast<int>(learner.n_classes))
      throw InvalidParameterError("train_base: source label out of range");

  const SgdConfig& sgd = cfg.sgd;
  BalancedSampler sampler(source.size(), target.size(), sgd.batch_size);
  LearnerGrads velocity = zero_grads(learner);
  const std::size_t steps_per_epoch = sampler.batches_per_epoch();
  const std::size_t total_steps = sgd.epochs * steps_per_epoch;

  std::vector<int> pseudo;
  bool pseudo_ready = false;
  bool wrap_noted = false;
  TrainHistory hist;
  hist.epochs.reserve(sgd.epochs);
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < sgd.epochs; ++epoch) {
    const bool adapting = epoch >= cfg.warmup_epochs && cfg.lambda_tradeoff != 0.0;
    const double lambda = adapting ? cfg.lambda_tradeoff : 0.0;
    if (adapting && learner.method.tag == MethodTag::Cmmd &&
        (cfg.pseudo_refresh || !pseudo_ready)) {
      pseudo = refresh_pseudo_labels(learner, target.features);
      pseudo_ready = true;
    }
    sampler.start_epoch(rng);

    double cls_sum = 0.0;
    double adp_sum = 0.0;
    double lr_first = 0.0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b, ++step) {
      const BalancedSampler::Batch batch = sampler.next(rng);
      const Matrix xs = gather_rows(source.features, batch.source);
      std::vector<int> ys;
      ys.reserve(batch.source.size());
      for (std::size_t i : batch.source) ys.push_back((*source.labels)[i]);
      const Matrix xt = gather_rows(target.features, batch.target);
      std::vector<int> yt;
      if (adapting && learner.method.tag == MethodTag::Cmmd) {
        yt.reserve(batch.target.size());
        for (std::size_t i : batch.target) yt.push_back(pseudo[i]);
      }

      LearnerGrads grads = zero_grads(learner);
      Eq1Result r;
      try {
        r = eq1_loss(learner, xs, ys, xt, yt, lambda, grads);
      } catch (const NoOverlappingClassError& e) {
        throw NoOverlappingClassError("epoch " + std::to_string(epoch) + " batch " +
                                      std::to_string(b) + ": " + e.what());
      }
      if (!std::isfinite(r.total))
        throw NumericError("train_base: loss diverged at epoch " + std::to_string(epoch) +
                           " batch " + std::to_string(b) + " (class " +
                           format_double(r.class_loss) + ", adapt " +
                           format_double(r.adapt_loss) + ")");

      const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
      const double lr = lr_at(sgd, progress);
      if (b == 0) lr_first = lr;
      sgd_step(learner.shared, grads.shared, velocity.shared, lr, sgd.momentum);
      for (std::size_t i = 0; i < learner.substructures.size(); ++i)
        sgd_step(learner.substructures[i], grads.substructures[i], velocity.substructures[i], lr,
                 sgd.momentum);
      sgd_step(learner.classifier, grads.classifier, velocity.classifier, lr, sgd.momentum);
      cls_sum += r.class_loss;
      adp_sum += r.adapt_loss;
    }
    if (sampler.target_wrapped() && !wrap_noted) {
      std::cerr << "note: target training set is smaller than the source epoch; "
                   "target rows are reused within an epoch\n";
      wrap_noted = true;
    }

    EpochStats st;
    st.epoch = epoch;
    st.class_loss = cls_sum / static_cast<double>(steps_per_epoch);
    st.adapt_loss = adp_sum / static_cast<double>(steps_per_epoch);
    st.lr = lr_first;
    st.source_acc = accuracy_of(learner, source.features, *source.labels);
    if (target.labels) st.target_acc = accuracy_of(learner, target.features, *target.labels);
    hist.epochs.push_back(st);
  }
  return hist;
}

Matrix predict_proba(const BaseLearner& learner, const Matrix& x) {
  ExtractResult r = extract(learner, x);
  return softmax(forward(learner.classifier, r.concat, nullptr));
}

std::vector<int> predict(const BaseLearner& learner, const Matrix& x) {
  ExtractResult r = extract(learner, x);
  return argmax_rows(forward(learner.classifier, r.concat, nullptr));
}

}  // namespace dastack
