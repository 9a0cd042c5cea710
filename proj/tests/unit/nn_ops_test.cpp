#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "gradcheck.hpp"
#include "scopeqa/nn/ops.hpp"
#include "scopeqa/nn/optim.hpp"

namespace scopeqa::nn {
namespace {

using testing::grad_check;
using testing::random_projection;
using testing::random_tensor;
using testing::random_tensor_off_zero;

// Direct seven-loop cross-correlation, independent of im2col/gemm.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w,
                          std::size_t stride, std::size_t pad) {
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  const std::size_t ho = (h + 2 * pad - k) / stride + 1;
  const std::size_t wo = (wd + 2 * pad - k) / stride + 1;
  Tensor<double> out(Shape{n, cout, ho, wo});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          double acc = 0.0;
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = long(oy * stride + ky) - long(pad);
                const long ix = long(ox * stride + kx) - long(pad);
                if (iy < 0 || ix < 0 || iy >= long(h) || ix >= long(wd)) continue;
                acc += x[((b * cin + c) * h + std::size_t(iy)) * wd + std::size_t(ix)] *
                       w[((o * cin + c) * k + ky) * k + kx];
              }
          out[((b * cout + o) * ho + oy) * wo + ox] = acc;
        }
  return out;
}

TEST(Conv2d, IdentityKernelLeavesInputUnchanged) {
  Tape<double> tape;
  Tensor<double> x(Shape{1, 1, 3, 3}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  Var out = conv2d(tape, tape.constant(x), tape.constant(Tensor<double>(Shape{1, 1, 1, 1}, 1.0)), 1, 0);
  EXPECT_EQ(tape.value(out).storage(), x.storage());
}

TEST(Conv2d, OnesKernelSumsWindow) {
  Tape<double> tape;
  Var out = conv2d(tape, tape.constant(Tensor<double>(Shape{1, 1, 3, 3}, 1.0)),
                   tape.constant(Tensor<double>(Shape{1, 1, 3, 3}, 1.0)), 1, 0);
  ASSERT_EQ(tape.value(out).shape(), (Shape{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(tape.value(out)[0], 9.0);
}

TEST(Conv2d, MatchesNaiveLoopOracle) {
  std::mt19937_64 rng(11);
  for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 0}, {1, 1}, {2, 1}, {2, 0}}) {
    Tensor<double> x = random_tensor(rng, {1, 2, 5, 5});
    Tensor<double> w = random_tensor(rng, {3, 2, 3, 3});
    Tape<double> tape;
    Var out = conv2d(tape, tape.constant(x), tape.constant(w), stride, pad);
    Tensor<double> ref = naive_conv(x, w, stride, pad);
    ASSERT_EQ(tape.value(out).shape(), ref.shape());
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(tape.value(out)[i], ref[i], 1e-10);
  }
}

TEST(Conv2d, OutputShapeFollowsFloorRule) {
  Tape<float> tape;
  Var out = conv2d(tape, tape.constant(Tensor<float>(Shape{2, 3, 7, 6})),
                   tape.constant(Tensor<float>(Shape{4, 3, 3, 3})), 2, 1);
  EXPECT_EQ(tape.value(out).shape(), (Shape{2, 4, 4, 3}));
}

TEST(Conv2d, RejectsChannelMismatch) {
  Tape<float> tape;
  EXPECT_THROW(conv2d(tape, tape.constant(Tensor<float>(Shape{1, 3, 4, 4})),
                      tape.constant(Tensor<float>(Shape{4, 2, 3, 3})), 1, 1),
               Error);
}

TEST(Activations, SoftmaxOfZerosIsUniform) {
  Tape<double> tape;
  Var s = softmax(tape, tape.constant(Tensor<double>(Shape{1, 4}, 0.0)));
  for (double v : tape.value(s).values()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Activations, ReluDefinition) {
  Tape<double> tape;
  Var r = relu(tape, tape.constant(Tensor<double>(Shape{2}, std::vector<double>{-2.0, 3.0})));
  EXPECT_EQ(tape.value(r)[0], 0.0);
  EXPECT_EQ(tape.value(r)[1], 3.0);
}

TEST(Activations, LogSoftmaxPlusLogSumExpIsIdentity) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor<double> x = random_tensor(rng, {3, 7}, -30.0, 30.0);
    Tape<double> tape;
    Var ls = log_softmax(tape, tape.constant(x));
    Var sm = softmax(tape, tape.constant(x));
    for (std::size_t r = 0; r < 3; ++r) {
      double mx = -1e300;
      for (std::size_t j = 0; j < 7; ++j) mx = std::max(mx, x[r * 7 + j]);
      double s = 0.0;
      for (std::size_t j = 0; j < 7; ++j) s += std::exp(x[r * 7 + j] - mx);
      const double lse = mx + std::log(s);
      double row = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        EXPECT_NEAR(tape.value(ls)[r * 7 + j] + lse, x[r * 7 + j], 1e-9);
        EXPECT_LT(tape.value(ls)[r * 7 + j], std::numeric_limits<double>::infinity());
        row += tape.value(sm)[r * 7 + j];
      }
      EXPECT_NEAR(row, 1.0, 1e-9);
    }
  }
}

TEST(BatchNorm, StandardizedBatchIsFixedPoint) {
  // Two channels, each with population mean 0 and variance 1.
  Tensor<double> x(Shape{4, 2}, std::vector<double>{-1.5, 1.0, -0.5, -1.0, 0.5, 1.0, 1.5, -1.0});
  const double s = std::sqrt(1.25);
  for (std::size_t i = 0; i < 8; i += 2) x[i] /= s;
  Tape<double> tape;
  BatchNormStats<double> stats(2);
  Var y = batch_norm(tape, tape.constant(x), tape.constant(Tensor<double>(Shape{2}, 1.0)),
                     tape.constant(Tensor<double>(Shape{2}, 0.0)), stats, BatchNormMode::kTrain);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(tape.value(y)[i], x[i], 1e-6);
}

TEST(BatchNorm, ZeroGammaYieldsBeta) {
  std::mt19937_64 rng(5);
  Tape<double> tape;
  BatchNormStats<double> stats(3);
  Var y = batch_norm(tape, tape.constant(random_tensor(rng, {4, 3, 2, 2})),
                     tape.constant(Tensor<double>(Shape{3}, 0.0)),
                     tape.constant(Tensor<double>(Shape{3}, 5.0)), stats, BatchNormMode::kTrain);
  for (double v : tape.value(y).values()) EXPECT_DOUBLE_EQ(v, 5.0);
}

TEST(BatchNorm, TrainModeMomentsAreStandardized) {
  std::mt19937_64 rng(8);
  Tensor<double> x = random_tensor(rng, {6, 3, 4, 4}, -3.0, 7.0);
  Tape<double> tape;
  BatchNormStats<double> stats(3);
  Var y = batch_norm(tape, tape.constant(x), tape.constant(Tensor<double>(Shape{3}, 1.0)),
                     tape.constant(Tensor<double>(Shape{3}, 0.0)), stats, BatchNormMode::kTrain);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0.0, v = 0.0;
    for (std::size_t b = 0; b < 6; ++b)
      for (std::size_t j = 0; j < 16; ++j) m += tape.value(y)[(b * 3 + c) * 16 + j];
    m /= 96.0;
    for (std::size_t b = 0; b < 6; ++b)
      for (std::size_t j = 0; j < 16; ++j) {
        const double d = tape.value(y)[(b * 3 + c) * 16 + j] - m;
        v += d * d;
      }
    v /= 96.0;
    EXPECT_NEAR(m, 0.0, 1e-6);
    EXPECT_NEAR(v, 1.0, 1e-4);
  }
  // Running stats moved towards the batch statistics.
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NE(stats.running_mean[c], 0.0);
}

TEST(BatchNorm, EvalModeUsesRunningStats) {
  BatchNormStats<double> stats(1);
  stats.running_mean[0] = 2.0;
  stats.running_var[0] = 4.0;
  stats.eps = 0.0;
  Tape<double> tape;
  Var y = batch_norm(tape, tape.constant(Tensor<double>(Shape{1, 1}, 6.0)),
                     tape.constant(Tensor<double>(Shape{1}, 1.0)),
                     tape.constant(Tensor<double>(Shape{1}, 0.0)), stats, BatchNormMode::kEval);
  EXPECT_DOUBLE_EQ(tape.value(y)[0], 2.0);
}

TEST(BatchNorm, SingleSampleTrainBatchIsRejected) {
  BatchNormStats<double> stats(2);
  Tape<double> tape;
  EXPECT_THROW(batch_norm(tape, tape.constant(Tensor<double>(Shape{1, 2})),
                          tape.constant(Tensor<double>(Shape{2}, 1.0)),
                          tape.constant(Tensor<double>(Shape{2}, 0.0)), stats,
                          BatchNormMode::kTrain),
               Error);
}

TEST(CrossEntropy, UniformProbabilitiesGiveLogC) {
  Tape<double> tape;
  std::vector<std::int32_t> labels{3, 17, 0};
  Var loss = cross_entropy(tape, tape.constant(Tensor<double>(Shape{3, 20}, 1.0 / 20.0)), labels);
  EXPECT_NEAR(tape.value(loss)[0], std::log(20.0), 1e-12);
  EXPECT_NEAR(tape.value(loss)[0], 2.9957, 1e-4);
}

TEST(CrossEntropy, OneHotCorrectIsZero) {
  Tensor<double> p(Shape{2, 3}, std::vector<double>{0, 1, 0, 0, 0, 1});
  Tape<double> tape;
  std::vector<std::int32_t> labels{1, 2};
  EXPECT_EQ(tape.value(cross_entropy(tape, tape.constant(p), labels))[0], 0.0);
}

TEST(CrossEntropy, BatchMeanOfTwo) {
  Tensor<double> p(Shape{2, 2}, std::vector<double>{0.5, 0.5, 0.75, 0.25});
  Tape<double> tape;
  std::vector<std::int32_t> labels{0, 1};
  const double expected = (std::log(2.0) + std::log(4.0)) / 2.0;
  EXPECT_NEAR(tape.value(cross_entropy(tape, tape.constant(p), labels))[0], expected, 1e-12);
  EXPECT_NEAR(expected, 1.0397, 1e-4);
}

TEST(CrossEntropy, ZeroTrueProbabilityIsClampedNotInfinite) {
  Tensor<double> p(Shape{1, 2}, std::vector<double>{1.0, 0.0});
  Tape<double> tape;
  std::vector<std::int32_t> labels{1};
  EXPECT_NEAR(tape.value(cross_entropy(tape, tape.constant(p), labels))[0], -std::log(1e-12), 1e-9);
}

TEST(CrossEntropy, MatchesNllOfLogSoftmax) {
  std::mt19937_64 rng(2);
  Tensor<double> logits = random_tensor(rng, {5, 20}, -4, 4);
  std::vector<std::int32_t> labels{0, 19, 7, 7, 12};
  Tape<double> tape;
  Var x = tape.constant(logits);
  const double ce = tape.value(cross_entropy(tape, softmax(tape, x), labels))[0];
  const double nll = tape.value(nll_loss(tape, log_softmax(tape, x), labels))[0];
  EXPECT_NEAR(ce, nll, 1e-12);
}

double pearson_value(std::vector<double> pred, std::vector<double> target) {
  Tape<double> tape;
  const std::size_t n = pred.size();
  return tape.value(pearson_loss<double>(
      tape, tape.constant(Tensor<double>(Shape{n}, std::move(pred))), target))[0];
}

TEST(PearsonLoss, PerfectPositiveIsZero) {
  EXPECT_NEAR(pearson_value({1, 2, 3}, {2, 4, 6}), 0.0, 1e-9);
}

TEST(PearsonLoss, PerfectNegativeIsTwo) {
  EXPECT_NEAR(pearson_value({3, 2, 1}, {1, 2, 3}), 2.0, 1e-9);
}

TEST(PearsonLoss, DefinitionFormulaCase) {
  EXPECT_NEAR(pearson_value({1, 2, 3, 4}, {1, 3, 2, 4}), 0.2, 1e-9);
}

TEST(PearsonLoss, ConstantTargetIsFlaggedAndFinite) {
  Tape<double> tape;
  PearsonDiagnostics diag;
  std::vector<double> target{5, 5, 5};
  Var p = tape.leaf(Tensor<double>(Shape{3}, std::vector<double>{1, 2, 3}));
  Var loss = pearson_loss<double>(tape, p, target, &diag);
  tape.backward(loss);
  EXPECT_TRUE(diag.degenerate);
  EXPECT_TRUE(std::isfinite(tape.value(loss)[0]));
  for (double g : tape.grad(p).values()) EXPECT_TRUE(std::isfinite(g));
}

TEST(PearsonLoss, RequiresTwoValues) {
  Tape<double> tape;
  std::vector<double> target{1.0};
  EXPECT_THROW(pearson_loss<double>(tape, tape.constant(Tensor<double>(Shape{1}, 1.0)), target),
               Error);
}

TEST(Backward, SumGivesOnes) {
  std::mt19937_64 rng(1);
  Tape<double> tape;
  Var x = tape.leaf(random_tensor(rng, {2, 3, 4}));
  tape.backward(sum(tape, x));
  for (double g : tape.grad(x).values()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, HandChainRule) {
  Tape<double> tape;
  Var w = tape.leaf(Tensor<double>(Shape{1}, 1.0));
  Var x = tape.constant(Tensor<double>(Shape{1}, 2.0));
  Var y = tape.constant(Tensor<double>(Shape{1}, 1.0));
  Var loss = sum(tape, square(tape, sub(tape, mul(tape, x, w), y)));
  tape.backward(loss);
  EXPECT_DOUBLE_EQ(tape.grad(w)[0], 4.0);
}

TEST(Backward, ParameterOffPathGetsZero) {
  Parameter<double> used("used", Tensor<double>(Shape{2}, 1.0));
  Parameter<double> unused("unused", Tensor<double>(Shape{2}, 1.0));
  used.zero_grad();
  unused.zero_grad();
  Tape<double> tape;
  Var a = tape.parameter(used);
  tape.parameter(unused);
  tape.backward(sum(tape, a));
  EXPECT_EQ(used.grad[0], 1.0);
  EXPECT_EQ(unused.grad[0], 0.0);
  EXPECT_EQ(unused.grad[1], 0.0);
}

TEST(Backward, NonScalarLossIsRejected) {
  Tape<double> tape;
  Var x = tape.leaf(Tensor<double>(Shape{2}, 1.0));
  EXPECT_THROW(tape.backward(x), Error);
}

TEST(GradCheck, EveryLayerMatchesFiniteDifferences) {
  std::mt19937_64 rng(2024);
  auto check = [](const testing::GradCheckResult& r) { EXPECT_LE(r.max_rel_error, 1e-4); };
  check(grad_check({random_tensor(rng, {2, 2, 5, 5}), random_tensor(rng, {3, 2, 3, 3})},
                   [](Tape<double>& t, const std::vector<Var>& v) {
                     return random_projection(t, conv2d(t, v[0], v[1], 2, 1), 1);
                   }));
  check(grad_check({random_tensor(rng, {3, 4}), random_tensor(rng, {5, 4}), random_tensor(rng, {5})},
                   [](Tape<double>& t, const std::vector<Var>& v) {
                     return random_projection(t, fully_connected(t, v[0], v[1], v[2]), 2);
                   }));
  check(grad_check({random_tensor_off_zero(rng, {3, 5})},
                   [](Tape<double>& t, const std::vector<Var>& v) {
                     return random_projection(t, relu(t, v[0]), 3);
                   }));
  check(grad_check({random_tensor(rng, {3, 2, 3, 3}), random_tensor(rng, {2}), random_tensor(rng, {2})},
                   [](Tape<double>& t, const std::vector<Var>& v) {
                     BatchNormStats<double> stats(2);
                     return random_projection(
                         t, batch_norm(t, v[0], v[1], v[2], stats, BatchNormMode::kTrain), 4);
                   }));
  check(grad_check({random_tensor(rng, {2, 6})},
                   [](Tape<double>& t, const std::vector<Var>& v) {
                     return random_projection(t, log_softmax(t, v[0]), 5);
                   }));
  std::vector<double> target{3.0, 1.0, 4.0, 1.5, 5.0};
  check(grad_check({random_tensor(rng, {5})},
                   [&](Tape<double>& t, const std::vector<Var>& v) {
                     return pearson_loss<double>(t, v[0], target);
                   }));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Parameter<double> p("p", Tensor<double>(Shape{1}, 0.0));
  Adam<double> adam({&p}, AdamConfig{0.01});
  adam.zero_grad();
  p.grad[0] = 1.0;
  adam.step();
  EXPECT_NEAR(p.value[0], -0.01 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Parameter<double> p("p", Tensor<double>(Shape{3}, 0.7));
  Adam<double> adam({&p}, AdamConfig{0.01});
  adam.zero_grad();
  adam.step();
  for (double v : p.value.values()) EXPECT_EQ(v, 0.7);
}

TEST(Adam, SecondEqualStepIsNotLarger) {
  Parameter<double> p("p", Tensor<double>(Shape{1}, 0.0));
  Adam<double> adam({&p}, AdamConfig{0.01});
  adam.zero_grad();
  p.grad[0] = 1.0;
  adam.step();
  const double first = -p.value[0];
  adam.step();
  const double second = -p.value[0] - first;
  // With a constant gradient both bias-corrected moments equal g exactly, so
  // the steps coincide up to the eps term.
  EXPECT_LE(second, first + 1e-15);
  EXPECT_NEAR(second, first, 1e-9);
}

TEST(Adam, FirstStepOpposesGradientSign) {
  std::mt19937_64 rng(4);
  Parameter<double> p("p", random_tensor(rng, {50}));
  const Tensor<double> before = p.value;
  Adam<double> adam({&p}, AdamConfig{0.01});
  adam.zero_grad();
  p.grad = random_tensor(rng, {50});
  adam.step();
  for (std::size_t i = 0; i < 50; ++i) {
    const double delta = p.value[i] - before[i];
    EXPECT_LT(delta * p.grad[i], 0.0);
  }
}

TEST(Plateau, TwoStallsHalveLearningRate) {
  PlateauSchedule s;
  EXPECT_DOUBLE_EQ(plateau_update(s, 0.01, {1.0, 1.0}), 0.01);
  EXPECT_DOUBLE_EQ(plateau_update(s, 0.01, {1.0, 1.0, 1.0}), 0.005);
}

TEST(Plateau, DecreasingLossKeepsRate) {
  EXPECT_DOUBLE_EQ(plateau_update(PlateauSchedule{}, 0.01, {1.0, 0.9, 0.8, 0.7, 0.6}), 0.01);
}

TEST(Plateau, FloorAtMinimum) {
  PlateauSchedule s;
  s.min_lr = 1e-3;
  std::vector<double> stall(20, 1.0);
  EXPECT_DOUBLE_EQ(plateau_update(s, 1e-3, stall), 1e-3);
  EXPECT_DOUBLE_EQ(plateau_update(s, 0.01, stall), 1e-3);
}

TEST(Plateau, RateIsMonotoneNonIncreasing) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PlateauTracker tracker(PlateauSchedule{}, 0.01);
  double prev = tracker.lr();
  for (int i = 0; i < 200; ++i) {
    const double lr = tracker.update(u(rng));
    EXPECT_LE(lr, prev);
    EXPECT_GE(lr, PlateauSchedule{}.min_lr);
    prev = lr;
  }
}

}  // namespace
}  // namespace scopeqa::nn
