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
#include <vector>

#include "reki/common.hpp"
#include "reki/hein.hpp"
#include "reki/tensor.hpp"

namespace reki::hein {
namespace {

using tensor::Parameter;
using tensor::ParameterSet;
using tensor::Tape;
using tensor::Tensor;

HeinConfig small_config() {
  HeinConfig c;
  c.input_dim = 6;
  c.output_dim = 3;
  c.hidden = {5, 4};
  c.n_shared = 2;
  c.n_user = 1;
  c.n_item = 3;
  return c;
}

Tensor random_rows(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
  return t;
}

// Gives every bias a nonzero value so the oracle exercises them.
void perturb_biases(ParameterSet& params) {
  Rng rng(17);
  for (auto* p : params.all())
    if (p->value.rows() == 1)
      for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] = 0.3 * rng.normal();
}

// Plain loops over one input row: MLP forward per expert, softmax gate,
// weighted sum.
std::vector<double> dense(const std::vector<double>& x, const Parameter& w, const Parameter& b, bool relu) {
  std::vector<double> y(w.value.cols());
  for (std::size_t j = 0; j < y.size(); ++j) {
    double s = b.value[j];
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * w.value(i, j);
    y[j] = relu ? std::max(0.0, s) : s;
  }
  return y;
}

std::pair<std::vector<double>, std::vector<double>> scalar_forward(const Hein& h, Side side, std::vector<double> x) {
  const auto experts = h.experts(side);
  const auto gate = h.gate(side);
  std::vector<double> logits = dense(x, *gate[0], *gate[1], false);
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double& l : logits) z += (l = std::exp(l - mx));
  for (double& l : logits) l /= z;
  std::vector<double> out(h.config().output_dim, 0.0);
  for (std::size_t e = 0; e < experts.size(); ++e) {
    std::vector<double> v = x;
    const std::size_t layers = experts[e].size() / 2;
    for (std::size_t j = 0; j < layers; ++j) v = dense(v, *experts[e][2 * j], *experts[e][2 * j + 1], j + 1 < layers);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += logits[e] * v[k];
  }
  return {out, logits};
}

TEST(Hein, MatchesScalarOracle) {
  ParameterSet params;
  const Hein h(small_config(), params, 3);
  perturb_biases(params);
  const Tensor r = random_rows(7, 6, 4);
  for (Side side : {Side::kUser, Side::kItem}) {
    Tape tape(false);
    const auto out = h.forward_side(tape, side, tape.constant(r));
    ASSERT_EQ(out.output.rows(), 7u);
    ASSERT_EQ(out.output.cols(), 3u);
    ASSERT_EQ(out.alpha.cols(), h.config().gate_width(side));
    for (std::size_t b = 0; b < 7; ++b) {
      const auto [expected, alpha] = scalar_forward(h, side, std::vector<double>(r.row(b).begin(), r.row(b).end()));
      for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(out.output.value()(b, k), expected[k], 1e-12);
      for (std::size_t e = 0; e < alpha.size(); ++e) EXPECT_NEAR(out.alpha.value()(b, e), alpha[e], 1e-14);
    }
  }
}

TEST(Hein, GateRowsAreDistributions) {
  ParameterSet params;
  const Hein h(small_config(), params, 5);
  Tape tape(false);
  const auto [u, i] = h.forward(tape, tape.constant(random_rows(50, 6, 1)), tape.constant(random_rows(50, 6, 2)));
  for (const auto* a : {&u.alpha, &i.alpha})
    for (std::size_t b = 0; b < 50; ++b) {
      double s = 0.0;
      for (std::size_t e = 0; e < a->cols(); ++e) {
        EXPECT_GT(a->value()(b, e), 0.0);
        s += a->value()(b, e);
      }
      EXPECT_NEAR(s, 1.0, 1e-14);
    }
}

TEST(Hein, SharedExpertsAreTheSameParameters) {
  ParameterSet params;
  const Hein h(small_config(), params, 5);
  const auto u = h.experts(Side::kUser);
  const auto i = h.experts(Side::kItem);
  ASSERT_EQ(u.size(), 3u);
  ASSERT_EQ(i.size(), 5u);
  EXPECT_EQ(u[0], i[0]);
  EXPECT_EQ(u[1], i[1]);
  EXPECT_NE(u[2], i[2]);
}

TEST(Hein, ItemLossLeavesUserExpertsAlone) {
  ParameterSet params;
  const Hein h(small_config(), params, 8);
  params.zero_grad();
  Tape tape;
  const auto out = h.forward_side(tape, Side::kItem, tape.constant(random_rows(4, 6, 1)));
  tape.backward(tensor::sum(out.output));
  const auto user_experts = h.experts(Side::kUser);
  for (auto* p : user_experts[2]) EXPECT_EQ(p->grad.values(), std::vector<double>(p->grad.size(), 0.0));
  double shared_grad = 0.0;
  const auto item_experts = h.experts(Side::kItem);
  for (auto* p : item_experts[0])
    for (double g : p->grad.values()) shared_grad += std::abs(g);
  EXPECT_GT(shared_grad, 0.0);
}

TEST(Hein, GradientsMatchFiniteDifferences) {
  ParameterSet params;
  const Hein h(small_config(), params, 9);
  perturb_biases(params);
  const Tensor ru = random_rows(3, 6, 1), ri = random_rows(3, 6, 2);
  const auto all = params.all();
  const tensor::LossClosure closure{all.size(), [&](Tape& tape, const std::vector<tensor::Var>&) {
                                      const auto [u, i] = h.forward(tape, tape.constant(ru), tape.constant(ri));
                                      return tensor::sum(tensor::mul(u.output, i.output));
                                    }};
  const auto report = tensor::grad_check(closure, all, 1e-6, 3, 300);
  EXPECT_LT(report.max_relative_error, 1e-5) << report.worst_parameter;
}

TEST(Hein, SameSeedSameWeights) {
  ParameterSet a, b;
  Hein(small_config(), a, 42);
  Hein(small_config(), b, 42);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].name, b[k].name);
    EXPECT_EQ(a[k].value.values(), b[k].value.values());
  }
}

TEST(Hein, GlorotBounds) {
  Rng rng(1);
  const Tensor w = glorot_uniform(30, 10, rng);
  const double a = std::sqrt(6.0 / 40.0);
  double mx = 0.0;
  for (double v : w.values()) mx = std::max(mx, std::abs(v));
  EXPECT_LE(mx, a);
  EXPECT_GT(mx, 0.8 * a);
}

TEST(Variants, MlpAndMoeShapes) {
  const auto mlp = adaptor_config(AdaptorKind::kMlp, small_config());
  EXPECT_EQ(mlp.n_shared, 1u);
  EXPECT_EQ(mlp.n_user + mlp.n_item, 0u);
  ParameterSet p1;
  const Hein h1(mlp, p1, 1);
  Tape tape(false);
  const auto out = h1.forward_side(tape, Side::kUser, tape.constant(random_rows(2, 6, 3)));
  EXPECT_EQ(out.alpha.id, -1);
  EXPECT_TRUE(h1.gate(Side::kUser).empty());

  const auto moe = adaptor_config(AdaptorKind::kMoe, small_config());
  EXPECT_EQ(moe.gate_width(Side::kUser), 2u);
  EXPECT_EQ(moe.gate_width(Side::kItem), 2u);
  ParameterSet p2;
  const Hein h2(moe, p2, 1);
  EXPECT_EQ(h2.experts(Side::kUser), h2.experts(Side::kItem));
}

TEST(Config, Validation) {
  auto c = small_config();
  c.output_dim = 6;
  EXPECT_THROW(c.validate(), Error);
  c = small_config();
  c.hidden = {4, 0};
  EXPECT_THROW(c.validate(), Error);
  c = small_config();
  c.n_shared = 0;
  c.n_user = 0;
  EXPECT_THROW(c.validate(), Error);
  c = small_config();
  c.kind = AdaptorKind::kMoe;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_THROW(adaptor_kind_from_string("mixture"), Error);
  EXPECT_EQ(adaptor_kind_from_string(to_string(AdaptorKind::kMoe)), AdaptorKind::kMoe);
  ParameterSet p;
  const Hein h(small_config(), p, 0);
  Tape tape(false);
  EXPECT_THROW(h.forward_side(tape, Side::kUser, tape.constant(random_rows(1, 5, 0))), Error);
}

}  // namespace
}  // namespace reki::hein
