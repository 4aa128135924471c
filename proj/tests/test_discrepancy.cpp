#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "dastack/discrepancy.hpp"
#include "dastack/errors.hpp"
#include "dastack/linalg.hpp"
#include "support/fd.hpp"
#include "support/oracles.hpp"

using namespace dastack;
using testsupport::fd_grad;
using testsupport::grads_close;
using testsupport::random_matrix;

TEST_CASE("mmd of a set against itself is zero") {
  Rng rng = make_rng(31, "mmd");
  const Matrix x = random_matrix(9, 3, rng);
  const std::vector<double> bw{0.5, 1.0, 2.0};
  CHECK(std::abs(mmd_fixed(x, x, bw).value) <= 1e-10);
}

TEST_CASE("mmd matches the double-loop oracle per bandwidth and sums over the list") {
  Rng rng = make_rng(32, "mmd");
  const Matrix xs = random_matrix(7, 4, rng);
  const Matrix xt = random_matrix(5, 4, rng, 1.5);
  double expected = 0.0;
  for (double bw : {0.7, 1.3, 4.0}) {
    const double one = testsupport::mmd_oracle(xs, xt, bw);
    const std::vector<double> single{bw};
    CHECK(mmd_fixed(xs, xt, single).value == doctest::Approx(one).epsilon(1e-12));
    expected += one;
  }
  const std::vector<double> all{0.7, 1.3, 4.0};
  CHECK(mmd_fixed(xs, xt, all).value == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("mmd is symmetric in its two sets") {
  Rng rng = make_rng(33, "mmd");
  const Matrix xs = random_matrix(6, 3, rng);
  const Matrix xt = random_matrix(4, 3, rng);
  const std::vector<double> bw{1.1};
  const LossWithGrad fwd = mmd_fixed(xs, xt, bw);
  const LossWithGrad rev = mmd_fixed(xt, xs, bw);
  CHECK(fwd.value == doctest::Approx(rev.value).epsilon(1e-14));
  CHECK(frobenius_norm(fwd.grad_source - rev.grad_target) < 1e-13);
  CHECK(frobenius_norm(fwd.grad_target - rev.grad_source) < 1e-13);
}

TEST_CASE("mmd gradients match finite differences") {
  Rng rng = make_rng(34, "mmd");
  const Matrix xs = random_matrix(6, 3, rng);
  const Matrix xt = random_matrix(5, 3, rng, 1.4);
  const std::vector<double> bw{0.8, 2.5};
  const LossWithGrad lg = mmd_fixed(xs, xt, bw);
  const Matrix fd_s = fd_grad([&](const Matrix& m) { return mmd_fixed(m, xt, bw).value; }, xs);
  const Matrix fd_t = fd_grad([&](const Matrix& m) { return mmd_fixed(xs, m, bw).value; }, xt);
  CHECK(grads_close(lg.grad_source, fd_s));
  CHECK(grads_close(lg.grad_target, fd_t));
}

TEST_CASE("resolve_bandwidths multiplies the median heuristic by each scale") {
  Rng rng = make_rng(35, "mmd");
  const Matrix xs = random_matrix(5, 2, rng);
  const Matrix xt = random_matrix(6, 2, rng);
  const double med = median_sq_dist(xs, xt);
  const std::vector<double> scales{0.25, 1.0, 4.0};
  const std::vector<double> bw = resolve_bandwidths(xs, xt, scales);
  REQUIRE(bw.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(bw[i] == doctest::Approx(scales[i] * med));

  DiscrepancyMethod method;
  method.bandwidth_scales = scales;
  const LossWithGrad via_method = mmd(xs, xt, method);
  const LossWithGrad via_fixed = mmd_fixed(xs, xt, bw);
  CHECK(via_method.value == via_fixed.value);
}

TEST_CASE("cmmd with one class is exactly mmd") {
  Rng rng = make_rng(36, "cmmd");
  const Matrix xs = random_matrix(6, 3, rng);
  const Matrix xt = random_matrix(5, 3, rng);
  const std::vector<int> ys(6, 0);
  const std::vector<int> yt(5, 0);
  const std::vector<double> bw{0.9, 1.7};
  const LossWithGrad c = cmmd_fixed(xs, ys, xt, yt, 1, bw);
  const LossWithGrad m = mmd_fixed(xs, xt, bw);
  CHECK(c.value == m.value);
  CHECK(frobenius_norm(c.grad_source - m.grad_source) == 0.0);
  CHECK(frobenius_norm(c.grad_target - m.grad_target) == 0.0);
}

TEST_CASE("cmmd averages per-class mmd over classes present on both sides") {
  Rng rng = make_rng(37, "cmmd");
  const Matrix xs = random_matrix(9, 2, rng);
  const Matrix xt = random_matrix(7, 2, rng);
  // class 2 exists only in the source, so it must be skipped
  const std::vector<int> ys{0, 0, 0, 1, 1, 1, 2, 2, 2};
  const std::vector<int> yt{0, 0, 1, 1, 1, 0, 1};
  const std::vector<double> bw{1.2};

  const LossWithGrad c = cmmd_fixed(xs, ys, xt, yt, 3, bw);

  double expected = 0.0;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> si, ti;
    for (std::size_t i = 0; i < ys.size(); ++i)
      if (ys[i] == cls) si.push_back(i);
    for (std::size_t i = 0; i < yt.size(); ++i)
      if (yt[i] == cls) ti.push_back(i);
    expected += mmd_fixed(gather_rows(xs, si), gather_rows(xt, ti), bw).value;
  }
  expected /= 2.0;
  CHECK(c.value == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("cmmd gradients scatter back to the right rows") {
  Rng rng = make_rng(38, "cmmd");
  const Matrix xs = random_matrix(8, 3, rng);
  const Matrix xt = random_matrix(6, 3, rng);
  const std::vector<int> ys{0, 1, 0, 1, 0, 1, 0, 1};
  const std::vector<int> yt{1, 0, 1, 0, 1, 0};
  const std::vector<double> bw{0.6, 2.2};
  const LossWithGrad lg = cmmd_fixed(xs, ys, xt, yt, 2, bw);
  const Matrix fd_s =
      fd_grad([&](const Matrix& m) { return cmmd_fixed(m, ys, xt, yt, 2, bw).value; }, xs);
  const Matrix fd_t =
      fd_grad([&](const Matrix& m) { return cmmd_fixed(xs, ys, m, yt, 2, bw).value; }, xt);
  CHECK(grads_close(lg.grad_source, fd_s));
  CHECK(grads_close(lg.grad_target, fd_t));
}

TEST_CASE("cmmd with no shared class refuses to produce a number") {
  const Matrix xs = Matrix::from_rows({{0.0, 0.0}, {1.0, 0.0}});
  const Matrix xt = Matrix::from_rows({{0.0, 1.0}, {1.0, 1.0}});
  const std::vector<int> ys{0, 0};
  const std::vector<int> yt{1, 1};
  const std::vector<double> bw{1.0};
  CHECK_THROWS_AS(cmmd_fixed(xs, ys, xt, yt, 2, bw), NoOverlappingClassError);
}

TEST_CASE("coral hand case: variance 2 against variance 0 scores exactly 1") {
  const Matrix xs = Matrix::from_rows({{0.0}, {2.0}});
  const Matrix xt = Matrix::from_rows({{5.0}, {5.0}});
  const LossWithGrad lg = coral(xs, xt);
  CHECK(lg.value == 1.0);
}

TEST_CASE("coral of a set against itself is exactly zero") {
  Rng rng = make_rng(39, "coral");
  const Matrix x = random_matrix(8, 3, rng);
  CHECK(coral(x, x).value == 0.0);
}

TEST_CASE("coral gradients match finite differences") {
  Rng rng = make_rng(40, "coral");
  const Matrix xs = random_matrix(7, 4, rng, 2.0);
  const Matrix xt = random_matrix(6, 4, rng);
  const LossWithGrad lg = coral(xs, xt);
  const Matrix fd_s = fd_grad([&](const Matrix& m) { return coral(m, xt).value; }, xs);
  const Matrix fd_t = fd_grad([&](const Matrix& m) { return coral(xs, m).value; }, xt);
  CHECK(grads_close(lg.grad_source, fd_s));
  CHECK(grads_close(lg.grad_target, fd_t));
}

TEST_CASE("coral needs two rows per side") {
  CHECK_THROWS_AS(coral(Matrix(1, 3), Matrix(4, 3)), DegenerateInputError);
  CHECK_THROWS_AS(coral(Matrix(4, 3), Matrix(1, 3)), DegenerateInputError);
}

TEST_CASE("adaptation_loss dispatches to each method unchanged") {
  Rng rng = make_rng(41, "dispatch");
  const Matrix xs = random_matrix(8, 3, rng);
  const Matrix xt = random_matrix(6, 3, rng);
  const std::vector<int> ys{0, 1, 0, 1, 0, 1, 0, 1};
  const std::vector<int> yt{0, 1, 0, 1, 0, 1};

  DiscrepancyMethod m;
  m.tag = MethodTag::Mmd;
  CHECK(adaptation_loss(xs, ys, xt, yt, 2, m).value == mmd(xs, xt, m).value);
  m.tag = MethodTag::Cmmd;
  CHECK(adaptation_loss(xs, ys, xt, yt, 2, m).value == cmmd(xs, ys, xt, yt, 2, m).value);
  m.tag = MethodTag::Coral;
  CHECK(adaptation_loss(xs, ys, xt, yt, 2, m).value == coral(xs, xt).value);
  m.tag = MethodTag::LowRank;
  const AlmState st = solve_lrr(xs, xt, m.alm);
  CHECK(adaptation_loss(xs, ys, xt, yt, 2, m).value == doctest::Approx(st.objective));
}

TEST_CASE("a filled context freezes kernel bandwidths") {
  Rng rng = make_rng(42, "ctx");
  const Matrix xs = random_matrix(6, 3, rng);
  const Matrix xt = random_matrix(5, 3, rng);
  const std::vector<int> none;
  DiscrepancyMethod m;
  m.tag = MethodTag::Mmd;

  MethodContext ctx;
  adaptation_loss(xs, none, xt, none, 2, m, &ctx);
  REQUIRE(ctx.filled);
  const std::vector<double> stored = ctx.bandwidths;
  const std::vector<double> fresh = resolve_bandwidths(xs, xt, m.bandwidth_scales);
  REQUIRE(stored.size() == fresh.size());
  for (std::size_t i = 0; i < stored.size(); ++i) CHECK(stored[i] == fresh[i]);

  Matrix xs2 = xs;
  xs2 *= 1.5;  // changes the median heuristic, but not the frozen bandwidths
  const LossWithGrad frozen = adaptation_loss(xs2, none, xt, none, 2, m, &ctx);
  CHECK(frozen.value == mmd_fixed(xs2, xt, stored).value);
}

TEST_CASE("a filled context freezes the low-rank state and reports the surrogate") {
  Rng rng = make_rng(43, "ctx");
  const Matrix xs = random_matrix(6, 4, rng);
  const Matrix xt = random_matrix(5, 4, rng);
  const std::vector<int> none;
  DiscrepancyMethod m;
  m.tag = MethodTag::LowRank;
  m.alm.max_iters = 25;

  MethodContext ctx;
  const LossWithGrad first = adaptation_loss(xs, none, xt, none, 2, m, &ctx);
  REQUIRE(ctx.filled);
  REQUIRE(ctx.alm.has_value());
  CHECK(first.value == doctest::Approx(ctx.alm->objective));

  Matrix xs2 = xs;
  xs2.values()[0] += 0.01;
  const LossWithGrad frozen = adaptation_loss(xs2, none, xt, none, 2, m, &ctx);
  const LossWithGrad direct = lowrank_surrogate(xs2, xt, *ctx.alm);
  CHECK(frozen.value == direct.value);
  CHECK(frobenius_norm(frozen.grad_source - direct.grad_source) == 0.0);
}

TEST_CASE("method validation rejects useless settings") {
  DiscrepancyMethod m;
  m.bandwidth_scales.clear();
  CHECK_THROWS_AS(validate(m), InvalidParameterError);
  m.bandwidth_scales = {1.0, -2.0};
  CHECK_THROWS_AS(validate(m), InvalidParameterError);
  DiscrepancyMethod lr;
  lr.tag = MethodTag::LowRank;
  lr.alm.lambda_e = 0.0;
  CHECK_THROWS_AS(validate(lr), InvalidParameterError);
}

TEST_CASE("method names round-trip") {
  for (MethodTag tag : {MethodTag::Mmd, MethodTag::Cmmd, MethodTag::LowRank, MethodTag::Coral})
    CHECK(parse_method_tag(method_name(tag)) == tag);
  CHECK_FALSE(parse_method_tag("kmeans").has_value());
}
