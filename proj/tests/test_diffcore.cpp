// Copyright 2026 The mtlevo Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mtlevo/autodiff.hpp"
#include "mtlevo/error.hpp"
#include "mtlevo/gradcheck.hpp"
#include "mtlevo/optim.hpp"

namespace mtlevo {
namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * standard_normal(rng);
  return t;
}

TEST(Tensor, RejectsMismatchedData) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<Real>{1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor({0}), DimensionError);
}

TEST(Layers, DenseIdentity) {
  Graph g;
  Var x = g.constant(Tensor::vector({1, 2}));
  Var w = g.constant(Tensor({2, 2}, {1, 0, 0, 1}));
  Var b = g.constant(Tensor::vector({0, 0}));
  EXPECT_EQ(dense(x, w, b).value().values(), (std::vector<Real>{1, 2}));
}

TEST(Layers, DenseShapeMismatch) {
  Graph g;
  Var x = g.constant(Tensor::vector({1, 2, 3}));
  Var w = g.constant(Tensor({2, 2}));
  Var b = g.constant(Tensor::vector({0, 0}));
  EXPECT_THROW(dense(x, w, b), DimensionError);
}

TEST(Layers, ConvCountsOverlap) {
  Graph g;
  Var x = g.constant(Tensor({3, 3, 1}, 1.0));
  Var k = g.constant(Tensor({3, 3, 1, 1}, 1.0));
  Var b = g.constant(Tensor({1}));
  const Tensor& y = conv2d(x, k, b).value();
  EXPECT_EQ(y.shape(), (Shape{3, 3, 1}));
  EXPECT_DOUBLE_EQ(y.at(1, 1, 0), 9.0);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0), 4.0);
  EXPECT_DOUBLE_EQ(y.at(2, 2, 0), 4.0);
  EXPECT_DOUBLE_EQ(y.at(0, 1, 0), 6.0);
}

TEST(Layers, ConvRejectsEvenKernel) {
  Graph g;
  Var x = g.constant(Tensor({3, 3, 1}, 1.0));
  Var k = g.constant(Tensor({2, 2, 1, 1}, 1.0));
  Var b = g.constant(Tensor({1}));
  EXPECT_THROW(conv2d(x, k, b), DimensionError);
}

TEST(Layers, MaxPoolBlock) {
  Graph g;
  Var x = g.constant(Tensor({2, 2, 1}, {1, 2, 3, 4}));
  const Tensor& y = maxpool2x2(x).value();
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1}));
  EXPECT_DOUBLE_EQ(y[0], 4.0);
}

TEST(Layers, MaxPoolTruncatesOddEdge) {
  Graph g;
  Tensor t({5, 3, 2});
  std::iota(t.data().begin(), t.data().end(), 0.0);
  const Tensor& y = maxpool2x2(g.constant(t)).value();
  EXPECT_EQ(y.shape(), (Shape{2, 1, 2}));
  // Block rows 2..3, cols 0..1, channel 0: max at (3,1) = (3*3+1)*2.
  EXPECT_DOUBLE_EQ(y.at(1, 0, 0), 20.0);
}

TEST(Layers, DropoutEvalIsIdentityAndTrainScales) {
  Tensor t({1000}, 1.0);
  {
    Graph g(Mode::kEval, 3);
    Var x = g.constant(t);
    EXPECT_EQ(dropout(x, 0.5).value(), t);
  }
  Graph g(Mode::kTrain, 3);
  const Tensor& y = dropout(g.constant(t), 0.25).value();
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0) {
      ++zeros;
    } else {
      EXPECT_DOUBLE_EQ(y[i], 1.0 / 0.75);
    }
  }
  EXPECT_NEAR(static_cast<double>(zeros) / 1000.0, 0.25, 0.05);
  EXPECT_THROW(dropout(g.constant(t), 1.0), ConfigError);
  EXPECT_THROW(dropout(g.constant(t), -0.1), ConfigError);
}

TEST(Softmerge, UniformIsMean) {
  Graph g;
  Var logits = g.constant(Tensor::vector({0, 0}));
  std::vector<Var> in{g.constant(Tensor::vector({1, 2})), g.constant(Tensor::vector({3, 4}))};
  EXPECT_EQ(softmerge(logits, in).value().values(), (std::vector<Real>{2, 3}));
}

TEST(Softmerge, SingletonPassesThrough) {
  Graph g;
  Var logits = g.constant(Tensor::vector({-7.3}));
  Tensor t = Tensor::vector({0.5, -1.5, 2.0});
  std::vector<Var> in{g.constant(t)};
  EXPECT_EQ(softmerge(logits, in).value(), t);
}

TEST(Softmerge, HandEvaluatedWeights) {
  // softmax(ln 3, 0) = (3/4, 1/4); 0.75 * 4 + 0.25 * 0 = 3.
  Graph g;
  Var logits = g.constant(Tensor::vector({std::log(3.0), 0.0}));
  std::vector<Var> in{g.constant(Tensor::vector({4})), g.constant(Tensor::vector({0}))};
  EXPECT_NEAR(softmerge(logits, in).value()[0], 3.0, 1e-12);
}

TEST(Softmerge, Errors) {
  Graph g;
  std::vector<Var> none;
  EXPECT_THROW(softmerge(g.constant(Tensor::vector({0})), none), ConfigError);
  std::vector<Var> in{g.constant(Tensor::vector({1, 2})), g.constant(Tensor::vector({3}))};
  EXPECT_THROW(softmerge(g.constant(Tensor::vector({0, 0})), in), DimensionError);
}

TEST(Loss, UniformLogits) {
  Graph g;
  Var l = softmax_cross_entropy(g.constant(Tensor({4}, 0.7)), 2);
  EXPECT_NEAR(l.value().item(), std::log(4.0), 1e-12);
}

TEST(Loss, ConfidentCorrect) {
  // -log(e^10 / (e^10 + e^-10)) = log(1 + e^-20).
  Graph g;
  Var l = softmax_cross_entropy(g.constant(Tensor::vector({10, -10})), 0);
  EXPECT_NEAR(l.value().item(), std::log1p(std::exp(-20.0)), 1e-20);
  EXPECT_NEAR(l.value().item(), 2.06e-9, 0.01e-9);
}

TEST(Loss, GradientIsSoftmaxMinusOnehot) {
  Graph g;
  Param p = make_param(Tensor::vector({0, 0}));
  g.backward(softmax_cross_entropy(g.param(p), 0));
  EXPECT_NEAR(p->grad[0], -0.5, 1e-15);
  EXPECT_NEAR(p->grad[1], 0.5, 1e-15);
}

TEST(Loss, LabelOutOfRange) {
  Graph g;
  EXPECT_THROW(softmax_cross_entropy(g.constant(Tensor::vector({1, 2})), 2), DataError);
}

TEST(Backward, DenseMatchesFiniteDifferences) {
  Rng rng(5);
  Param w = make_param(Tensor({2, 2}, {1, 0, 0, 1}), 0.0, "w");
  Param b = make_param(Tensor::vector({0, 0}), 0.0, "b");
  Tensor x = Tensor::vector({0.3, -1.2});
  auto report = grad_check(
      [&](Graph& g) { return softmax_cross_entropy(dense(g.constant(x), g.param(w), g.param(b)), 1); },
      1e-4);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(Backward, UnreachableParamKeepsZeroGrad) {
  Graph g;
  Param used = make_param(Tensor::vector({1, 2}), 0.5);
  Param unused = make_param(Tensor::vector({3, 4}), 0.5);
  Var side = activate(g.param(unused), Activation::kTanh);
  (void)side;
  Var loss = softmax_cross_entropy(g.param(used), 0);
  g.backward(loss);
  EXPECT_EQ(unused->grad, Tensor({2}));
  // L2 term is included for reachable params.
  const auto p = softmax(std::vector<Real>{1, 2});
  EXPECT_NEAR(used->grad[0], p[0] - 1 + 0.5 * 1, 1e-12);
}

TEST(Backward, StateErrors) {
  Graph empty;
  Graph other;
  Var foreign = other.constant(Tensor::scalar(1));
  EXPECT_THROW(empty.backward(foreign), StateError);
  Graph eval(Mode::kEval);
  Var l = softmax_cross_entropy(eval.constant(Tensor::vector({1, 2})), 0);
  EXPECT_THROW(eval.backward(l), StateError);
  Graph g;
  Param p = make_param(Tensor::vector({1, 2}));
  Var loss = softmax_cross_entropy(g.param(p), 0);
  EXPECT_THROW(g.backward(g.param(p)), DimensionError);
  g.backward(loss);
  EXPECT_THROW(g.backward(loss), StateError);
}

TEST(Backward, SoftmergeLogitsMatchFiniteDifferences) {
  Rng rng(11);
  Param logits = make_param(random_tensor({3}, rng), 0.0, "logits");
  Param in0 = make_param(random_tensor({4}, rng), 0.0, "in0");
  Param in1 = make_param(random_tensor({4}, rng), 0.0, "in1");
  Param in2 = make_param(random_tensor({4}, rng), 0.0, "in2");
  auto report = grad_check(
      [&](Graph& g) {
        std::vector<Var> in{g.param(in0), g.param(in1), g.param(in2)};
        return softmax_cross_entropy(softmerge(g.param(logits), in), 3);
      },
      1e-4);
  EXPECT_TRUE(report.passed) << report.max_rel_error << " at " << report.worst_param;
}

TEST(GradCheck, DenseReluNetwork) {
  Rng rng(21);
  Param w1 = make_param(random_tensor({6, 5}, rng, 0.5), 1e-3, "w1");
  Param b1 = make_param(random_tensor({6}, rng, 0.1), 0.0, "b1");
  Param w2 = make_param(random_tensor({3, 6}, rng, 0.5), 0.0, "w2");
  Param b2 = make_param(random_tensor({3}, rng, 0.1), 0.0, "b2");
  Tensor x = random_tensor({5}, rng);
  auto report = grad_check(
      [&](Graph& g) {
        Var h = activate(dense(g.constant(x), g.param(w1), g.param(b1)), Activation::kRelu);
        return softmax_cross_entropy(dense(h, g.param(w2), g.param(b2)), 2);
      },
      1e-4);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
  EXPECT_EQ(report.entries_checked, 30u + 6 + 18 + 3);
}

TEST(GradCheck, ConvPoolNetwork) {
  Rng rng(22);
  Param k = make_param(random_tensor({3, 3, 2, 3}, rng, 0.4), 0.0, "k");
  Param kb = make_param(random_tensor({3}, rng, 0.1), 0.0, "kb");
  Param w = make_param(random_tensor({4, 12}, rng, 0.4), 0.0, "w");
  Param b = make_param(random_tensor({4}, rng, 0.1), 0.0, "b");
  Tensor x = random_tensor({5, 4, 2}, rng);
  auto report = grad_check(
      [&](Graph& g) {
        Var h = maxpool2x2(conv2d(g.constant(x), g.param(k), g.param(kb)));
        return softmax_cross_entropy(dense(h, g.param(w), g.param(b)), 1);
      },
      1e-4);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

Var bad_square(Var x) {
  Tensor y = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= y[i];
  return x.graph()->record(std::move(y), {x}, [](BackwardContext& ctx) {
    Tensor* gx = ctx.input_grad(0);
    for (std::size_t i = 0; i < gx->size(); ++i) {
      (*gx)[i] -= 2 * ctx.input(0)[i] * ctx.grad_out()[i];  // sign flipped
    }
  });
}

TEST(GradCheck, DetectsCorruptedBackward) {
  Param p = make_param(Tensor::vector({0.3, -0.8, 1.1}), 0.0, "p");
  auto report = grad_check(
      [&](Graph& g) { return softmax_cross_entropy(bad_square(g.param(p)), 0); }, 1e-4);
  EXPECT_FALSE(report.passed);
}

TEST(GradCheck, RejectsNondeterministicBuilder) {
  Param p = make_param(Tensor::vector({0.3, -0.8}), 0.0, "p");
  int calls = 0;
  EXPECT_THROW(grad_check(
                   [&](Graph& g) {
                     Var noise = g.constant(Tensor::vector({0.01 * ++calls, 0}));
                     std::vector<Var> terms{g.param(p), noise};
                     return softmax_cross_entropy(sum(terms), 0);
                   },
                   1e-4),
               StateError);
}

TEST(GradCheck, DropoutWithFixedMask) {
  Rng rng(3);
  Param w = make_param(random_tensor({3, 8}, rng, 0.5), 0.0, "w");
  Param b = make_param(Tensor({3}), 0.0, "b");
  Tensor x = random_tensor({8}, rng);
  GradCheckOptions opts;
  opts.seed = 99;
  auto report = grad_check(
      [&](Graph& g) {
        Var h = dropout(activate(g.constant(x), Activation::kElu), 0.3);
        return softmax_cross_entropy(dense(h, g.param(w), g.param(b)), 0);
      },
      1e-4, opts);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(Adam, ZeroGradientLeavesValue) {
  Param p = make_param(Tensor::vector({1.5, -2}));
  std::vector<Param> ps{p};
  adam_step(ps, 0.1);
  EXPECT_EQ(p->value.values(), (std::vector<Real>{1.5, -2}));
  EXPECT_EQ(p->step_count, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // m = 0.2, v = 0.004; bias-corrected m = 2, v = 4; step = 0.1 * 2 / (2 + 1e-8).
  Param p = make_param(Tensor::scalar(1.0));
  p->grad[0] = 2.0;
  std::vector<Param> ps{p};
  adam_step(ps, 0.1);
  EXPECT_NEAR(p->value[0], 1.0 - 0.1 * 2.0 / (2.0 + 1e-8), 1e-15);
  EXPECT_NEAR(p->value[0], 0.9, 1e-8);
  EXPECT_EQ(p->grad[0], 0.0);
}

TEST(Adam, AliasedParamsStepOnce) {
  Param p = make_param(Tensor::scalar(1.0));
  Param alias = p;
  p->grad[0] = 2.0;
  std::vector<Param> ps{p, alias};
  adam_step(ps, 0.1);
  EXPECT_EQ(p->step_count, 1u);
  EXPECT_EQ(alias->value, p->value);
  EXPECT_EQ(alias->id, p->id);
}

TEST(Adam, NanGradientNamesParam) {
  Param p = make_param(Tensor::scalar(1.0), 0.0, "culprit");
  p->grad[0] = std::nan("");
  std::vector<Param> ps{p};
  try {
    adam_step(ps, 0.1);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("culprit"), std::string::npos);
  }
  EXPECT_EQ(p->value[0], 1.0);
}

TEST(Properties, SoftmaxSumsToOne) {
  Rng rng(1);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t m = 1 + uniform_index(rng, 10);
    std::vector<Real> logits(m);
    for (Real& l : logits) l = 30.0 * standard_normal(rng);
    const auto w = softmax(logits);
    EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-6);
  }
}

TEST(Properties, EvalForwardIsBitDeterministic) {
  Rng rng(2);
  Param k = make_param(random_tensor({3, 3, 1, 4}, rng), 0.0);
  Param kb = make_param(random_tensor({4}, rng), 0.0);
  Tensor x = random_tensor({6, 6, 1}, rng);
  auto run = [&] {
    Graph g(Mode::kEval, 17);
    return dropout(activate(conv2d(g.constant(x), g.param(k), g.param(kb)), Activation::kSigmoid), 0.5)
        .value();
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace mtlevo
