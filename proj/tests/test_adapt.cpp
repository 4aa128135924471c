#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "dastack/adapt.hpp"
#include "dastack/errors.hpp"
#include "support/fd.hpp"
#include "support/oracles.hpp"

using namespace dastack;
using testsupport::fd_grad;
using testsupport::grads_close;
using testsupport::random_matrix;

namespace {

/// A learner small enough for entrywise finite differences.
BaseLearner small_learner(MethodTag tag, std::uint64_t seed) {
  Rng rng = make_rng(seed, "small");
  BaseLearner learner;
  const std::size_t shared_dims[] = {3, 4};
  const Activation linear[] = {Activation::None};
  learner.shared = make_mlp(shared_dims, linear, rng);
  const std::size_t sub0[] = {4, 3};
  const std::size_t sub1[] = {4, 2};
  learner.substructures.push_back(make_mlp(sub0, linear, rng));
  learner.substructures.push_back(make_mlp(sub1, linear, rng));
  const std::size_t cls[] = {5, 2};
  learner.classifier = make_mlp(cls, linear, rng);
  learner.method.tag = tag;
  learner.method.alm.max_iters = 20;
  learner.n_classes = 2;
  return learner;
}

double eq1_total(const BaseLearner& learner, const Matrix& xs, const std::vector<int>& ys,
                 const Matrix& xt, const std::vector<int>& yt, double lambda, AdaptContext& ctx) {
  LearnerGrads sink = zero_grads(learner);
  return eq1_loss(learner, xs, ys, xt, yt, lambda, sink, &ctx).total;
}

void check_mlp_grads_fd(const BaseLearner& learner, Mlp BaseLearner::* which,
                        const MlpGrads& got, const Matrix& xs, const std::vector<int>& ys,
                        const Matrix& xt, const std::vector<int>& yt, double lambda,
                        AdaptContext& ctx) {
  const Mlp& net = learner.*which;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const Matrix fd_w = fd_grad(
        [&](const Matrix& w) {
          BaseLearner copy = learner;
          (copy.*which).layers[l].weights = w;
          return eq1_total(copy, xs, ys, xt, yt, lambda, ctx);
        },
        net.layers[l].weights);
    CHECK(grads_close(got.weights[l], fd_w));

    for (std::size_t j = 0; j < net.layers[l].bias.size(); ++j) {
      BaseLearner copy = learner;
      const double h = 1e-5;
      (copy.*which).layers[l].bias[j] += h;
      const double up = eq1_total(copy, xs, ys, xt, yt, lambda, ctx);
      (copy.*which).layers[l].bias[j] -= 2 * h;
      const double down = eq1_total(copy, xs, ys, xt, yt, lambda, ctx);
      const double fd = (up - down) / (2 * h);
      CHECK(got.bias[l][j] == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
    }
  }
}

LabeledSet tiny_source(std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed, "src");
  LabeledSet s;
  s.features = random_matrix(n, 3, rng, 1.5);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % 2);
  s.labels = std::move(y);
  return s;
}

LabeledSet tiny_target(std::size_t n, std::uint64_t seed, bool labeled) {
  Rng rng = make_rng(seed, "tgt");
  LabeledSet s;
  s.features = random_matrix(n, 3, rng, 1.2);
  s.domain = Domain::Target;
  if (labeled) {
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>((i + 1) % 2);
    s.labels = std::move(y);
  }
  return s;
}

std::vector<double> flatten(const BaseLearner& learner) {
  std::vector<double> out;
  const auto push = [&out](const Mlp& net) {
    for (const Dense& l : net.layers) {
      out.insert(out.end(), l.weights.values().begin(), l.weights.values().end());
      out.insert(out.end(), l.bias.begin(), l.bias.end());
    }
  };
  push(learner.shared);
  for (const Mlp& s : learner.substructures) push(s);
  push(learner.classifier);
  return out;
}

}  // namespace

TEST_CASE("joint loss gradients match finite differences for every method") {
  Rng data_rng = make_rng(60, "adapt");
  const Matrix xs = random_matrix(6, 3, data_rng, 1.5);
  const Matrix xt = random_matrix(5, 3, data_rng, 1.2);
  const std::vector<int> ys{0, 1, 0, 1, 0, 1};
  const std::vector<int> yt{1, 0, 1, 0, 1};
  const double lambda = 0.7;

  for (MethodTag tag : {MethodTag::Mmd, MethodTag::Cmmd, MethodTag::LowRank, MethodTag::Coral}) {
    CAPTURE(method_name(tag));
    const BaseLearner learner = small_learner(tag, 77);

    AdaptContext ctx;
    LearnerGrads grads = zero_grads(learner);
    eq1_loss(learner, xs, ys, xt, yt, lambda, grads, &ctx);
    REQUIRE(ctx.filled);

    check_mlp_grads_fd(learner, &BaseLearner::shared, grads.shared, xs, ys, xt, yt, lambda, ctx);
    check_mlp_grads_fd(learner, &BaseLearner::classifier, grads.classifier, xs, ys, xt, yt,
                       lambda, ctx);
    for (std::size_t i = 0; i < learner.substructures.size(); ++i) {
      const Mlp& net = learner.substructures[i];
      for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const Matrix fd_w = fd_grad(
            [&](const Matrix& w) {
              BaseLearner copy = learner;
              copy.substructures[i].layers[l].weights = w;
              return eq1_total(copy, xs, ys, xt, yt, lambda, ctx);
            },
            net.layers[l].weights);
        CHECK(grads_close(grads.substructures[i].weights[l], fd_w));
      }
    }
  }
}

TEST_CASE("joint loss splits into class and adaptation parts") {
  Rng data_rng = make_rng(61, "adapt");
  const Matrix xs = random_matrix(6, 3, data_rng);
  const Matrix xt = random_matrix(5, 3, data_rng);
  const std::vector<int> ys{0, 1, 0, 1, 0, 1};
  const std::vector<int> yt{0, 1, 0, 1, 0};
  const BaseLearner learner = small_learner(MethodTag::Mmd, 78);

  LearnerGrads g0 = zero_grads(learner);
  const Eq1Result at0 = eq1_loss(learner, xs, ys, xt, yt, 0.0, g0);
  CHECK(at0.adapt_loss == 0.0);
  CHECK(at0.total == at0.class_loss);

  LearnerGrads g2 = zero_grads(learner);
  const Eq1Result at2 = eq1_loss(learner, xs, ys, xt, yt, 2.0, g2);
  CHECK(at2.class_loss == doctest::Approx(at0.class_loss));
  CHECK(at2.adapt_loss > 0.0);
  CHECK(at2.total == doctest::Approx(at2.class_loss + 2.0 * at2.adapt_loss));
}

TEST_CASE("lambda zero ignores the target features entirely") {
  Rng data_rng = make_rng(62, "adapt");
  const Matrix xs = random_matrix(6, 3, data_rng);
  const Matrix xt_a = random_matrix(5, 3, data_rng);
  const Matrix xt_b = random_matrix(5, 3, data_rng, 9.0);
  const std::vector<int> ys{0, 1, 0, 1, 0, 1};
  const std::vector<int> yt{0, 1, 0, 1, 0};
  const BaseLearner learner = small_learner(MethodTag::Coral, 79);

  LearnerGrads ga = zero_grads(learner);
  LearnerGrads gb = zero_grads(learner);
  const Eq1Result ra = eq1_loss(learner, xs, ys, xt_a, yt, 0.0, ga);
  const Eq1Result rb = eq1_loss(learner, xs, ys, xt_b, yt, 0.0, gb);
  CHECK(ra.total == rb.total);
  for (std::size_t l = 0; l < ga.shared.weights.size(); ++l)
    CHECK(ga.shared.weights[l].values() == gb.shared.weights[l].values());
}

TEST_CASE("joint loss propagates the no-overlap failure") {
  Rng data_rng = make_rng(63, "adapt");
  const Matrix xs = random_matrix(4, 3, data_rng);
  const Matrix xt = random_matrix(4, 3, data_rng);
  const std::vector<int> ys{0, 0, 0, 0};
  const std::vector<int> yt{1, 1, 1, 1};
  const BaseLearner learner = small_learner(MethodTag::Cmmd, 80);
  LearnerGrads grads = zero_grads(learner);
  CHECK_THROWS_AS(eq1_loss(learner, xs, ys, xt, yt, 1.0, grads), NoOverlappingClassError);
}

TEST_CASE("balanced sampler covers the source exactly once per epoch") {
  BalancedSampler sampler(10, 7, 4);
  CHECK(sampler.batches_per_epoch() == 3);
  Rng rng = make_rng(64, "sampler");
  sampler.start_epoch(rng);
  std::multiset<std::size_t> seen;
  for (std::size_t b = 0; b < sampler.batches_per_epoch(); ++b) {
    const BalancedSampler::Batch batch = sampler.next(rng);
    CHECK(batch.source.size() == batch.target.size());
    CHECK(batch.source.size() <= 4);
    seen.insert(batch.source.begin(), batch.source.end());
    for (std::size_t t : batch.target) CHECK(t < 7);
  }
  REQUIRE(seen.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) CHECK(seen.count(i) == 1);
  CHECK(sampler.target_wrapped());  // 10 target draws from a pool of 7
}

TEST_CASE("balanced sampler folds an orphan row into the last batch") {
  BalancedSampler sampler(9, 9, 4);
  CHECK(sampler.batches_per_epoch() == 2);
  Rng rng = make_rng(65, "sampler");
  sampler.start_epoch(rng);
  const auto b0 = sampler.next(rng);
  const auto b1 = sampler.next(rng);
  CHECK(b0.source.size() == 4);
  CHECK(b1.source.size() == 5);
  CHECK_FALSE(sampler.target_wrapped());
}

TEST_CASE("balanced sampler enforces its protocol") {
  BalancedSampler sampler(4, 4, 2);
  Rng rng = make_rng(66, "sampler");
  CHECK_THROWS_AS(sampler.next(rng), ProtocolError);
  sampler.start_epoch(rng);
  sampler.next(rng);
  sampler.next(rng);
  CHECK_THROWS_AS(sampler.next(rng), ProtocolError);
  CHECK_THROWS_AS(BalancedSampler(0, 4, 2), DegenerateInputError);
  CHECK_THROWS_AS(BalancedSampler(4, 0, 2), DegenerateInputError);
}

TEST_CASE("training is deterministic in the seed") {
  const LabeledSet source = tiny_source(24, 1);
  const LabeledSet target = tiny_target(20, 2, true);
  TrainConfig cfg;
  cfg.sgd.epochs = 4;
  cfg.sgd.batch_size = 8;
  cfg.warmup_epochs = 1;

  BaseLearner a = small_learner(MethodTag::Mmd, 7);
  BaseLearner b = small_learner(MethodTag::Mmd, 7);
  Rng ra = make_rng(90, "sgd");
  Rng rb = make_rng(90, "sgd");
  const TrainHistory ha = train_base(a, source, target, cfg, ra);
  const TrainHistory hb = train_base(b, source, target, cfg, rb);

  CHECK(flatten(a) == flatten(b));
  REQUIRE(ha.epochs.size() == hb.epochs.size());
  for (std::size_t e = 0; e < ha.epochs.size(); ++e) {
    CHECK(ha.epochs[e].class_loss == hb.epochs[e].class_loss);
    CHECK(ha.epochs[e].adapt_loss == hb.epochs[e].adapt_loss);
  }
}

TEST_CASE("target labels never influence the learned parameters") {
  const LabeledSet source = tiny_source(24, 3);
  LabeledSet honest = tiny_target(20, 4, true);
  LabeledSet corrupted = honest;
  for (int& y : *corrupted.labels) y = 1 - y;
  LabeledSet unlabeled = honest;
  unlabeled.labels.reset();

  TrainConfig cfg;
  cfg.sgd.epochs = 4;
  cfg.sgd.batch_size = 8;
  cfg.warmup_epochs = 1;

  std::vector<std::vector<double>> params;
  for (const LabeledSet* tgt : {&honest, &corrupted, &unlabeled}) {
    BaseLearner learner = small_learner(MethodTag::Cmmd, 8);
    Rng rng = make_rng(91, "sgd");
    train_base(learner, source, *tgt, cfg, rng);
    params.push_back(flatten(learner));
  }
  CHECK(params[0] == params[1]);
  CHECK(params[0] == params[2]);
}

TEST_CASE("an all-warmup schedule equals training with lambda zero") {
  const LabeledSet source = tiny_source(24, 5);
  const LabeledSet target = tiny_target(20, 6, false);

  TrainConfig warm;
  warm.sgd.epochs = 3;
  warm.sgd.batch_size = 8;
  warm.warmup_epochs = 3;
  warm.lambda_tradeoff = 5.0;

  TrainConfig off = warm;
  off.warmup_epochs = 0;
  off.lambda_tradeoff = 0.0;

  BaseLearner a = small_learner(MethodTag::Coral, 9);
  BaseLearner b = small_learner(MethodTag::Coral, 9);
  Rng ra = make_rng(92, "sgd");
  Rng rb = make_rng(92, "sgd");
  const TrainHistory ha = train_base(a, source, target, warm, ra);
  const TrainHistory hb = train_base(b, source, target, off, rb);

  CHECK(flatten(a) == flatten(b));
  for (const EpochStats& e : ha.epochs) CHECK(e.adapt_loss == 0.0);
}

TEST_CASE("history records the schedule faithfully") {
  const LabeledSet source = tiny_source(16, 10);
  const LabeledSet target = tiny_target(16, 11, true);
  TrainConfig cfg;
  cfg.sgd.epochs = 3;
  cfg.sgd.batch_size = 8;
  cfg.warmup_epochs = 1;

  BaseLearner learner = small_learner(MethodTag::Mmd, 12);
  Rng rng = make_rng(93, "sgd");
  const TrainHistory hist = train_base(learner, source, target, cfg, rng);

  REQUIRE(hist.epochs.size() == 3);
  CHECK(hist.epochs[0].epoch == 0);
  CHECK(hist.epochs[0].lr == cfg.sgd.eta0);  // progress is 0 at the first step
  CHECK(hist.epochs[1].lr < hist.epochs[0].lr);
  CHECK(hist.epochs[0].adapt_loss == 0.0);  // warmup epoch
  CHECK(hist.epochs[1].adapt_loss > 0.0);
  for (const EpochStats& e : hist.epochs) {
    CHECK(e.source_acc >= 0.0);
    CHECK(e.source_acc <= 1.0);
    REQUIRE(e.target_acc.has_value());
    CHECK(*e.target_acc >= 0.0);
    CHECK(*e.target_acc <= 1.0);
  }

  BaseLearner fresh = small_learner(MethodTag::Mmd, 12);
  Rng rng2 = make_rng(94, "sgd");
  const LabeledSet blind = tiny_target(16, 11, false);
  const TrainHistory hist2 = train_base(fresh, source, blind, cfg, rng2);
  CHECK_FALSE(hist2.epochs[0].target_acc.has_value());
}

TEST_CASE("a runaway learning rate reports divergence") {
  const LabeledSet source = tiny_source(16, 13);
  const LabeledSet target = tiny_target(16, 14, false);
  TrainConfig cfg;
  cfg.sgd.eta0 = 1e18;
  cfg.sgd.epochs = 2;
  cfg.sgd.batch_size = 8;

  BaseLearner learner = small_learner(MethodTag::Mmd, 15);
  Rng rng = make_rng(95, "sgd");
  CHECK_THROWS_AS(train_base(learner, source, target, cfg, rng), NumericError);
}

TEST_CASE("train_base rejects malformed inputs") {
  TrainConfig cfg;
  cfg.sgd.epochs = 1;
  BaseLearner learner = small_learner(MethodTag::Mmd, 16);
  Rng rng = make_rng(96, "sgd");

  LabeledSet unlabeled_source = tiny_source(8, 17);
  unlabeled_source.labels.reset();
  CHECK_THROWS_AS(train_base(learner, unlabeled_source, tiny_target(8, 18, false), cfg, rng),
                  ProtocolError);

  LabeledSet bad_width = tiny_source(8, 19);
  bad_width.features = Matrix(8, 5);
  bad_width.labels = std::vector<int>(8, 0);
  CHECK_THROWS_AS(train_base(learner, bad_width, tiny_target(8, 20, false), cfg, rng),
                  ShapeError);

  LabeledSet high_label = tiny_source(8, 21);
  (*high_label.labels)[0] = 2;  // learner was built for 2 classes
  CHECK_THROWS_AS(train_base(learner, high_label, tiny_target(8, 22, false), cfg, rng),
                  InvalidParameterError);
}

TEST_CASE("the default architecture matches its contract") {
  Rng rng = make_rng(97, "init");
  const BaseLearner learner = make_base_learner(6, 5, MethodTag::Cmmd, rng);
  CHECK(learner.shared.input_dim() == 6);
  CHECK(learner.shared.output_dim() == 16);
  CHECK(learner.shared.layers.size() == 2);
  REQUIRE(learner.substructures.size() == 4);
  CHECK(learner.substructures[0].layers.size() == 2);
  CHECK(learner.substructures[1].layers.size() == 3);
  CHECK(learner.substructures[2].layers.size() == 1);
  CHECK(learner.substructures[3].layers.size() == 1);
  std::size_t concat = 0;
  for (const Mlp& s : learner.substructures) {
    CHECK(s.input_dim() == 16);
    CHECK(s.output_dim() == 8);
    concat += s.output_dim();
  }
  CHECK(learner.classifier.input_dim() == concat);
  CHECK(learner.classifier.output_dim() == 5);
  CHECK(learner.n_classes == 5);
  CHECK_NOTHROW(validate(learner));

  const ExtractResult ex = extract(learner, Matrix(3, 6));
  CHECK(ex.concat.rows() == 3);
  CHECK(ex.concat.cols() == concat);
  CHECK(ex.sub_outputs.size() == 4);
}

TEST_CASE("predictions are argmax of well-formed probabilities") {
  Rng rng = make_rng(98, "init");
  const BaseLearner learner = make_base_learner(3, 2, MethodTag::Mmd, rng);
  Rng data_rng = make_rng(99, "adapt");
  const Matrix x = random_matrix(7, 3, data_rng);
  const Matrix proba = predict_proba(learner, x);
  REQUIRE(proba.rows() == 7);
  REQUIRE(proba.cols() == 2);
  for (std::size_t i = 0; i < proba.rows(); ++i) {
    CHECK(proba(i, 0) + proba(i, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(proba(i, 0) >= 0.0);
  }
  CHECK(predict(learner, x) == argmax_rows(proba));
  CHECK(refresh_pseudo_labels(learner, x) == predict(learner, x));
}
