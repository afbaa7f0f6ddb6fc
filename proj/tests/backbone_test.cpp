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

#include "reki/backbone.hpp"
#include "reki/common.hpp"
#include "reki/tensor.hpp"

namespace reki::backbone {
namespace {

using corpus::Sample;
using corpus::SampleSchema;
using tensor::Parameter;
using tensor::ParameterSet;
using tensor::Tape;
using tensor::Tensor;
using tensor::Var;

using Row = std::vector<double>;

Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
  return t;
}

SampleSchema toy_schema(std::size_t history) {
  SampleSchema s;
  s.user_fields = {"user_id", "age"};
  s.user_vocab_sizes = {20, 5};
  s.context_fields = {"hour"};
  s.context_vocab_sizes = {4};
  s.item_vocab = 30;
  s.category_vocab = 6;
  s.max_history = history;
  return s;
}

std::vector<Sample> random_samples(const SampleSchema& schema, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Sample> out(n);
  for (auto& s : out) {
    s.user = 1 + static_cast<int>(rng.below(19));
    s.user_features = {s.user, static_cast<int>(rng.below(5))};
    s.context = {static_cast<int>(rng.below(4))};
    s.target_item = 1 + static_cast<int>(rng.below(29));
    s.target_category = 1 + static_cast<int>(rng.below(5));
    s.label = static_cast<int>(rng.below(2));
    const auto len = rng.below(schema.max_history + 1);
    for (std::uint64_t j = 0; j < len; ++j)
      s.history.push_back({1 + static_cast<int>(rng.below(29)), 1 + static_cast<int>(rng.below(5)),
                           static_cast<int>(rng.below(2)), 0});
  }
  return out;
}

std::vector<const Sample*> pointers(const std::vector<Sample>& samples) {
  std::vector<const Sample*> p;
  for (const auto& s : samples) p.push_back(&s);
  return p;
}

void randomize_biases(ParameterSet& params) {
  Rng rng(31);
  for (auto* p : params.all())
    if (p->value.rows() == 1 && p->name.find(".b") != std::string::npos)
      for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] = 0.2 * rng.normal();
}

Row row_of(const Tensor& t, std::size_t r) { return Row(t.row(r).begin(), t.row(r).end()); }

Row affine(const Row& x, const Tensor& w, const Tensor* b) {
  Row y(w.cols(), 0.0);
  for (std::size_t j = 0; j < y.size(); ++j) {
    double s = b ? (*b)[j] : 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * w(i, j);
    y[j] = s;
  }
  return y;
}

// Scores from the unfactored layer input [h, t, h - t, h * t].
double concat_score(const Row& h, const Row& t, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2) {
  Row in;
  in.insert(in.end(), h.begin(), h.end());
  in.insert(in.end(), t.begin(), t.end());
  for (std::size_t k = 0; k < h.size(); ++k) in.push_back(h[k] - t[k]);
  for (std::size_t k = 0; k < h.size(); ++k) in.push_back(h[k] * t[k]);
  Row hidden = affine(in, w1, &b1);
  for (double& v : hidden) v = std::max(0.0, v);
  return affine(hidden, w2, &b2)[0];
}

struct Attention {
  ParameterSet params;
  Parameter *w1, *b1, *w2, *b2;
  Attention(std::size_t d, std::size_t hidden, Rng& rng) {
    w1 = &params.add("w1", random_tensor(4 * d, hidden, rng));
    b1 = &params.add("b1", random_tensor(1, hidden, rng));
    w2 = &params.add("w2", random_tensor(hidden, 1, rng));
    b2 = &params.add("b2", random_tensor(1, 1, rng));
  }
};

TEST(DinScores, FactoredFormMatchesConcatForm) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 1 + rng.below(6), steps = 1 + rng.below(5), batch = 1 + rng.below(4);
    Attention att(d, 1 + rng.below(7), rng);
    const Tensor hist = random_tensor(batch * steps, d, rng), tgt = random_tensor(batch, d, rng);
    Tape tape(false);
    const Var s = din_scores(tape, tape.constant(hist), tape.constant(tgt), steps, *att.w1, *att.b1, *att.w2, *att.b2);
    ASSERT_EQ(s.rows(), batch * steps);
    for (std::size_t r = 0; r < batch * steps; ++r)
      EXPECT_NEAR(s.value()(r, 0),
                  concat_score(row_of(hist, r), row_of(tgt, r / steps), att.w1->value, att.b1->value, att.w2->value,
                               att.b2->value),
                  1e-12);
  }
}

TEST(DinAttention, WeightedSumOfMaskedSteps) {
  Rng rng(2);
  const std::size_t d = 4, steps = 3, batch = 2;
  Attention att(d, 5, rng);
  const Tensor hist = random_tensor(batch * steps, d, rng), tgt = random_tensor(batch, d, rng);
  const Tensor mask(batch * steps, 1, {1, 0, 1, 0, 0, 0});
  Tape tape(false);
  const Var out = din_attention(tape, tape.constant(hist), tape.constant(tgt), tape.constant(mask), steps, *att.w1,
                                *att.b1, *att.w2, *att.b2);
  for (std::size_t b = 0; b < batch; ++b) {
    Row expected(d, 0.0);
    for (std::size_t j = 0; j < steps; ++j) {
      const std::size_t r = b * steps + j;
      const double w = mask(r, 0) * concat_score(row_of(hist, r), row_of(tgt, b), att.w1->value, att.b1->value,
                                                 att.w2->value, att.b2->value);
      for (std::size_t k = 0; k < d; ++k) expected[k] += w * hist(r, k);
    }
    for (std::size_t k = 0; k < d; ++k) EXPECT_NEAR(out.value()(b, k), expected[k], 1e-12);
  }
  for (std::size_t k = 0; k < d; ++k) EXPECT_EQ(out.value()(1, k), 0.0);
}

TEST(DinScores, GradientsMatchFiniteDifferences) {
  Rng rng(3);
  Attention att(3, 4, rng);
  auto& hist = att.params.add("hist", random_tensor(6, 3, rng));
  auto& tgt = att.params.add("tgt", random_tensor(2, 3, rng));
  const tensor::LossClosure closure{6, [&](Tape& tape, const std::vector<Var>&) {
                                      const Var s = din_scores(tape, tape.param(hist), tape.param(tgt), 3, *att.w1,
                                                               *att.b1, *att.w2, *att.b2);
                                      return tensor::sum(tensor::mul(s, s));
                                    }};
  EXPECT_LT(tensor::grad_check(closure, att.params.all(), 1e-6, 0, 100).max_relative_error, 1e-5);
}

TEST(HistoryBatch, LayoutAndMasks) {
  Sample a, b;
  a.history = {{5, 2, 1, 0}, {7, 3, 0, 0}};
  b.history = {{9, 1, 0, 0}};
  const std::vector<const Sample*> batch{&a, &b};
  const auto h = make_history_batch(batch, 3);
  EXPECT_EQ(h.items, (std::vector<std::size_t>{5, 7, 0, 9, 0, 0}));
  EXPECT_EQ(h.categories, (std::vector<std::size_t>{2, 3, 0, 1, 0, 0}));
  EXPECT_EQ(h.liked, (std::vector<double>{1, 0, 0, 0, 0, 0}));
  EXPECT_EQ(h.disliked, (std::vector<double>{0, 1, 0, 1, 0, 0}));
  EXPECT_THROW(make_history_batch(batch, 1), Error);
}

// Whole-model oracle: gathers embeddings by name and runs the output MLP in
// plain loops, following the documented feature order.
double scalar_logit(const ParameterSet& p, const SampleSchema& schema, const BackboneConfig& config, const Sample& s,
                    const Row* aug) {
  const std::size_t e = config.embedding_dim;
  auto emb = [&](const std::string& name, int id) { return row_of(p.at(name).value, static_cast<std::size_t>(id)); };
  auto joined = [&](int item, int cat) {
    Row r = emb("backbone.emb.item", item);
    const Row c = emb("backbone.emb.category", cat);
    r.insert(r.end(), c.begin(), c.end());
    return r;
  };
  Row x;
  for (std::size_t f = 0; f < schema.user_fields.size(); ++f) {
    const Row r = emb("backbone.emb.user." + schema.user_fields[f], s.user_features[f]);
    x.insert(x.end(), r.begin(), r.end());
  }
  const Row t = joined(s.target_item, s.target_category);
  for (int want : {1, 0}) {
    Row pooled(2 * e, 0.0);
    std::size_t n = 0;
    for (const auto& step : s.history) n += step.label == want;
    for (const auto& step : s.history) {
      if (step.label != want) continue;
      const Row h = joined(step.item, step.category);
      const double w = config.kind == BackboneKind::kDin
                           ? concat_score(h, t, p.at("backbone.att.layer0.w").value, p.at("backbone.att.layer0.b").value,
                                          p.at("backbone.att.layer1.w").value, p.at("backbone.att.layer1.b").value)
                           : 1.0 / static_cast<double>(n);
      for (std::size_t k = 0; k < pooled.size(); ++k) pooled[k] += w * h[k];
    }
    x.insert(x.end(), pooled.begin(), pooled.end());
  }
  x.insert(x.end(), t.begin(), t.end());
  for (std::size_t f = 0; f < schema.context_fields.size(); ++f) {
    const Row r = emb("backbone.emb.context." + schema.context_fields[f], s.context[f]);
    x.insert(x.end(), r.begin(), r.end());
  }
  Row hidden = affine(x, p.at("backbone.mlp.layer0.w_base").value, &p.at("backbone.mlp.layer0.b").value);
  if (aug) {
    const Row extra = affine(*aug, p.at("backbone.mlp.layer0.w_aug").value, nullptr);
    for (std::size_t k = 0; k < hidden.size(); ++k) hidden[k] += extra[k];
  }
  for (std::size_t j = 1; j <= config.mlp_hidden.size(); ++j) {
    for (double& v : hidden) v = std::max(0.0, v);
    hidden = affine(hidden, p.at("backbone.mlp.layer" + std::to_string(j) + ".w").value,
                    &p.at("backbone.mlp.layer" + std::to_string(j) + ".b").value);
  }
  return hidden[0];
}

class BackboneOracle : public ::testing::TestWithParam<BackboneKind> {};

TEST_P(BackboneOracle, LogitsMatchScalarLoops) {
  const auto schema = toy_schema(4);
  for (std::size_t aug_width : {0u, 3u}) {
    BackboneConfig config{.kind = GetParam(), .embedding_dim = 3, .attention_hidden = 5, .mlp_hidden = {6, 4},
                          .aug_width = aug_width};
    ParameterSet params;
    const Backbone model(schema, config, params, 11);
    randomize_biases(params);
    const auto samples = random_samples(schema, 9, 12);
    const auto batch = pointers(samples);
    Rng rng(13);
    const Tensor aug = random_tensor(samples.size(), std::max<std::size_t>(aug_width, 1), rng);
    Tape tape(false);
    const Var z = model.logits(tape, batch, aug_width ? std::optional<Var>(tape.constant(aug)) : std::nullopt);
    ASSERT_EQ(z.rows(), samples.size());
    for (std::size_t b = 0; b < samples.size(); ++b) {
      const Row a = row_of(aug, b);
      EXPECT_NEAR(z.value()(b, 0), scalar_logit(params, schema, config, samples[b], aug_width ? &a : nullptr), 1e-11);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Kinds, BackboneOracle, ::testing::Values(BackboneKind::kDin, BackboneKind::kMlp));

TEST(Backbone, ZeroWeightsGiveHalf) {
  const auto schema = toy_schema(3);
  ParameterSet params;
  const Backbone model(schema, {}, params, 0);
  for (auto* p : params.all()) p->value.fill(0.0);
  const auto samples = random_samples(schema, 5, 1);
  Tape tape(false);
  const Var z = model.logits(tape, pointers(samples), std::nullopt);
  for (double p : sigmoid(std::span<const double>(z.value().data(), z.value().size()))) EXPECT_EQ(p, 0.5);
}

TEST(Backbone, AugmentationKeepsBaseInitialisation) {
  const auto schema = toy_schema(3);
  ParameterSet base, augmented;
  Backbone(schema, BackboneConfig{}, base, 7);
  Backbone(schema, BackboneConfig{.aug_width = 8}, augmented, 7);
  ASSERT_EQ(augmented.size(), base.size() + 1);
  for (std::size_t k = 0; k < base.size(); ++k) EXPECT_EQ(augmented.at(base[k].name).value.values(), base[k].value.values());
}

TEST(Backbone, GradientsMatchFiniteDifferences) {
  const auto schema = toy_schema(3);
  ParameterSet params;
  const Backbone model(schema, BackboneConfig{.embedding_dim = 2, .attention_hidden = 3, .mlp_hidden = {4},
                                              .aug_width = 2},
                       params, 5);
  randomize_biases(params);
  const auto samples = random_samples(schema, 6, 2);
  const auto batch = pointers(samples);
  Rng rng(4);
  const Tensor aug = random_tensor(samples.size(), 2, rng);
  std::vector<double> labels;
  for (const auto& s : samples) labels.push_back(s.label);
  const tensor::LossClosure closure{params.size(), [&](Tape& tape, const std::vector<Var>&) {
                                      return tensor::bce_with_logits(model.logits(tape, batch, tape.constant(aug)), labels);
                                    }};
  EXPECT_LT(tensor::grad_check(closure, params.all(), 1e-6, 1, 150).max_relative_error, 1e-5);
}

TEST(Backbone, InputErrors) {
  const auto schema = toy_schema(2);
  ParameterSet p1, p2;
  const Backbone base(schema, {}, p1, 0);
  const Backbone aug(schema, BackboneConfig{.aug_width = 2}, p2, 0);
  const auto samples = random_samples(schema, 2, 0);
  const auto batch = pointers(samples);
  Tape tape(false);
  EXPECT_THROW(base.logits(tape, batch, tape.constant(Tensor(2, 2))), Error);
  EXPECT_THROW(aug.logits(tape, batch, std::nullopt), Error);
  EXPECT_THROW(aug.logits(tape, batch, tape.constant(Tensor(2, 3))), Error);
  EXPECT_THROW(base.logits(tape, {}, std::nullopt), Error);
  EXPECT_THROW(Backbone(schema, BackboneConfig{.mlp_hidden = {}}, p1, 0), Error);
  EXPECT_THROW(backbone_kind_from_string("wide"), Error);
}

}  // namespace
}  // namespace reki::backbone
