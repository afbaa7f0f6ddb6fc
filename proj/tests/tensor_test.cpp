// Copyright 2026 The REKI Authors.
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
#include <string>
#include <vector>

#include "reki/common.hpp"
#include "reki/tensor.hpp"
#include "test_support.hpp"

namespace reki::tensor {
namespace {

using reki::testing::TempDir;

Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Tensor t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

// Reduces any output to a scalar with fixed random weights so every output
// entry contributes a distinct gradient.
Var weighted_sum(Tape& tape, Var out, std::uint64_t seed) {
  Rng rng(seed);
  const Var w = tape.constant(random_tensor(out.rows(), out.cols(), rng));
  return sum(mul(out, w));
}

void expect_gradients(ParameterSet& params, const std::function<Var(Tape&, const std::vector<Var>&)>& fn,
                      double tolerance = 1e-6) {
  const LossClosure closure{params.size(), [&](Tape& tape, const std::vector<Var>& ps) {
                              return weighted_sum(tape, fn(tape, ps), 99);
                            }};
  const auto report = grad_check(closure, params.all(), 1e-6, 1, 200);
  EXPECT_LT(report.max_relative_error, tolerance)
      << report.worst_parameter << "[" << report.worst_index << "] analytic " << report.analytic << " numeric "
      << report.numeric;
  EXPECT_GT(report.coordinates, 0u);
}

class GradCheck : public ::testing::Test {
 protected:
  Rng rng{2026};
  ParameterSet params;
};

TEST_F(GradCheck, MatmulAddSubMul) {
  params.add("a", random_tensor(3, 4, rng));
  params.add("b", random_tensor(4, 2, rng));
  params.add("c", random_tensor(3, 2, rng));
  expect_gradients(params, [](Tape&, const std::vector<Var>& p) {
    const Var ab = matmul(p[0], p[1]);
    return mul(sub(add(ab, p[2]), scale(p[2], 0.3)), ab);
  });
}

TEST_F(GradCheck, BiasConcatSlices) {
  params.add("a", random_tensor(5, 3, rng));
  params.add("bias", random_tensor(1, 3, rng));
  params.add("c", random_tensor(5, 2, rng));
  expect_gradients(params, [](Tape&, const std::vector<Var>& p) {
    const Var joined = concat_cols({add_row_bias(p[0], p[1]), p[2], p[0]});
    const Var picked = repeat_rows(slice_rows(slice_cols(joined, 0, 4), 2, 1), 5);
    return concat_cols({slice_cols(joined, 1, 4), picked});
  });
}

TEST_F(GradCheck, SliceRowsOverlapAccumulates) {
  params.add("a", random_tensor(6, 2, rng));
  expect_gradients(params, [](Tape&, const std::vector<Var>& p) {
    return concat_cols({slice_rows(p[0], 0, 4), slice_rows(p[0], 2, 4), mul(slice_rows(p[0], 1, 4), slice_rows(p[0], 1, 4))});
  });
}

TEST_F(GradCheck, Nonlinearities) {
  params.add("a", random_tensor(4, 5, rng));
  expect_gradients(params, [](Tape&, const std::vector<Var>& p) {
    return concat_cols({sigmoid(p[0]), softmax_rowwise(p[0]), relu(p[0]), repeat_rows(mean_rows(p[0]), 4)});
  });
}

TEST_F(GradCheck, LookupScaleRowsSegments) {
  params.add("table", random_tensor(5, 3, rng));
  params.add("w", random_tensor(6, 1, rng));
  expect_gradients(params, [](Tape&, const std::vector<Var>& p) {
    const Var rows = embedding_lookup(p[0], {4, 1, 1, 0, 4, 2});
    const Var scaled = scale_rows(rows, p[1]);
    return concat_cols({segment_sum(scaled, 3), slice_rows(repeat_rows(mean_rows(scaled), 2), 0, 2)});
  });
}

TEST_F(GradCheck, Losses) {
  params.add("z", random_tensor(7, 1, rng, 2.0));
  const std::vector<double> labels{1, 0, 0, 1, 1, 0, 1};
  const LossClosure a{1, [&](Tape&, const std::vector<Var>& p) { return bce_with_logits(p[0], labels); }};
  const LossClosure b{1, [&](Tape&, const std::vector<Var>& p) { return binary_cross_entropy(sigmoid(p[0]), labels); }};
  EXPECT_LT(grad_check(a, params.all(), 1e-6, 0, 7).max_relative_error, 1e-6);
  EXPECT_LT(grad_check(b, params.all(), 1e-6, 0, 7).max_relative_error, 1e-6);
}

TEST(Ops, ValuesByHand) {
  Tape tape(false);
  const Var a = tape.constant(Tensor(2, 2, {1, 2, 3, 4}));
  const Var b = tape.constant(Tensor(2, 1, {5, 6}));
  EXPECT_EQ(matmul(a, b).value().values(), (std::vector<double>{17, 39}));
  EXPECT_EQ(mean_rows(a).value().values(), (std::vector<double>{2, 3}));
  EXPECT_EQ(segment_sum(a, 2).value().values(), (std::vector<double>{4, 6}));
  EXPECT_EQ(repeat_rows(b, 2).value().values(), (std::vector<double>{5, 5, 6, 6}));
  EXPECT_EQ(slice_rows(a, 1, 1).value().values(), (std::vector<double>{3, 4}));
  EXPECT_EQ(scale_rows(a, b).value().values(), (std::vector<double>{5, 10, 18, 24}));
  const auto s = softmax_rowwise(a).value();
  EXPECT_NEAR(s(0, 0) + s(0, 1), 1.0, 1e-15);
  EXPECT_NEAR(s(0, 1), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
}

TEST(Ops, ShapeMismatchesThrow) {
  Tape tape;
  const Var a = tape.constant(Tensor(2, 3));
  const Var b = tape.constant(Tensor(2, 2));
  EXPECT_THROW(matmul(a, b), Error);
  EXPECT_THROW(add(a, b), Error);
  EXPECT_THROW(slice_rows(a, 1, 2), Error);
  EXPECT_THROW(slice_cols(a, 2, 2), Error);
  EXPECT_THROW(segment_sum(a, 3), Error);
  EXPECT_THROW(embedding_lookup(a, {2}), Error);
}

TEST(Ops, NonFiniteResultThrows) {
  Tape tape;
  const Var a = tape.constant(Tensor(1, 1, {1e308}));
  EXPECT_THROW(scale(a, 10.0), Error);
}

TEST(Losses, BceWithLogitsValue) {
  Tape tape(false);
  const Var z = tape.constant(Tensor(2, 1, {0.0, 2.0}));
  const double expected = (std::log(2.0) + std::log1p(std::exp(-2.0))) / 2.0;
  EXPECT_NEAR(bce_with_logits(z, {1.0, 1.0}).value()[0], expected, 1e-15);
  EXPECT_NEAR(binary_cross_entropy(sigmoid(z), {1.0, 1.0}).value()[0], expected, 1e-12);
  // Large logits stay finite without clamping.
  const Var big = tape.constant(Tensor(1, 1, {800.0}));
  EXPECT_NEAR(bce_with_logits(big, {0.0}).value()[0], 800.0, 1e-9);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // After one bias-corrected step, m_hat = g and v_hat = g^2, so each
  // coordinate moves by lr * g / (|g| + eps).
  ParameterSet params;
  auto& p = params.add("w", Tensor(1, 3, {1.0, -2.0, 0.5}));
  p.grad = Tensor(1, 3, {0.5, -4.0, 0.0});
  Adam adam(params, AdamConfig{.lr = 0.1});
  adam.step();
  EXPECT_NEAR(p.value[0], 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(p.value[1], -2.0 + 0.1 * 4.0 / (4.0 + 1e-8), 1e-15);
  EXPECT_EQ(p.value[2], 0.5);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(Adam, SecondStepMatchesHandRecursion) {
  ParameterSet params;
  auto& p = params.add("w", Tensor(1, 1, {0.0}));
  Adam adam(params, AdamConfig{.lr = 0.01});
  const double g1 = 2.0, g2 = -1.0;
  p.grad[0] = g1;
  adam.step();
  p.grad[0] = g2;
  adam.step();
  const double m = 0.9 * (0.1 * g1) + 0.1 * g2;
  const double v = 0.999 * (0.001 * g1 * g1) + 0.001 * g2 * g2;
  const double m_hat = m / (1 - 0.81), v_hat = v / (1 - 0.999 * 0.999);
  const double first = -0.01 * g1 / (std::abs(g1) + 1e-8);
  EXPECT_NEAR(p.value[0], first - 0.01 * m_hat / (std::sqrt(v_hat) + 1e-8), 1e-14);
}

TEST(Adam, MinimisesAQuadratic) {
  ParameterSet params;
  auto& p = params.add("x", Tensor(1, 2, {3.0, -4.0}));
  Adam adam(params, AdamConfig{.lr = 0.05});
  for (int step = 0; step < 2000; ++step) {
    params.zero_grad();
    Tape tape;
    const Var x = tape.param(p);
    tape.backward(sum(mul(x, x)));
    adam.step();
  }
  EXPECT_LT(std::abs(p.value[0]) + std::abs(p.value[1]), 1e-3);
}

TEST(Tape, GradientsAccumulateAcrossUses) {
  ParameterSet params;
  auto& p = params.add("x", Tensor(1, 1, {3.0}));
  Tape tape;
  const Var x = tape.param(p);
  tape.backward(add(mul(x, x), scale(x, 2.0)));
  EXPECT_DOUBLE_EQ(p.grad[0], 8.0);
}

TEST(Checkpoint, RoundTripIsExact) {
  TempDir dir("ckpt");
  Rng rng(5);
  ParameterSet a;
  a.add("layer.w", random_tensor(3, 4, rng));
  a.add("layer.b", random_tensor(1, 4, rng));
  save_checkpoint(dir.path("m.bin"), a);
  ParameterSet b;
  b.add("layer.w", Tensor(3, 4));
  b.add("layer.b", Tensor(1, 4));
  load_checkpoint(dir.path("m.bin"), b);
  EXPECT_EQ(b.at("layer.w").value.values(), a.at("layer.w").value.values());
  EXPECT_EQ(b.at("layer.b").value.values(), a.at("layer.b").value.values());
  const auto raw = read_checkpoint(dir.path("m.bin"));
  ASSERT_EQ(raw.size(), 2u);
  EXPECT_EQ(raw[0].first, "layer.w");
  save_checkpoint(dir.path("m2.bin"), b);
  EXPECT_EQ(read_file(dir.path("m.bin")), read_file(dir.path("m2.bin")));
}

TEST(Checkpoint, MismatchAndCorruptionThrow) {
  TempDir dir("ckpt-bad");
  ParameterSet a;
  a.add("w", Tensor(2, 2, {1, 2, 3, 4}));
  save_checkpoint(dir.path("m.bin"), a);
  ParameterSet wrong_shape;
  wrong_shape.add("w", Tensor(1, 4));
  EXPECT_THROW(load_checkpoint(dir.path("m.bin"), wrong_shape), Error);
  ParameterSet wrong_name;
  wrong_name.add("v", Tensor(2, 2));
  EXPECT_THROW(load_checkpoint(dir.path("m.bin"), wrong_name), Error);
  const std::string good = read_file(dir.path("m.bin"));
  for (std::size_t i = 0; i < good.size(); ++i) {
    std::string bad = good;
    bad[i] = static_cast<char>(bad[i] ^ 0x01);
    write_file(dir.path("bad.bin"), bad);
    EXPECT_THROW(read_checkpoint(dir.path("bad.bin")), Error) << "byte " << i;
  }
}

}  // namespace
}  // namespace reki::tensor
