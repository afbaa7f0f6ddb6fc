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

#include "reki/backbone.hpp"

#include <cmath>

#include <fmt/format.h>

#include "reki/common.hpp"
#include "reki/hein.hpp"

namespace reki::backbone {

using tensor::Parameter;
using tensor::Tape;
using tensor::Tensor;
using tensor::Var;

namespace {

constexpr double kEmbeddingScale = 0.05;

Tensor uniform_table(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-kEmbeddingScale, kEmbeddingScale);
  return t;
}

Tensor column(const std::vector<double>& v) { return Tensor(v.size(), 1, v); }

}  // namespace

std::string to_string(BackboneKind kind) { return kind == BackboneKind::kDin ? "din" : "mlp"; }

BackboneKind backbone_kind_from_string(const std::string& name) {
  if (name == "din") return BackboneKind::kDin;
  if (name == "mlp") return BackboneKind::kMlp;
  throw Error(fmt::format("unknown backbone '{}' (expected din or mlp)", name));
}

HistoryBatch make_history_batch(std::span<const corpus::Sample* const> batch, std::size_t max_history) {
  HistoryBatch h;
  h.batch = batch.size();
  h.steps = max_history;
  const std::size_t n = batch.size() * max_history;
  h.items.assign(n, 0);
  h.categories.assign(n, 0);
  h.liked.assign(n, 0.0);
  h.disliked.assign(n, 0.0);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& hist = batch[b]->history;
    if (hist.size() > max_history)
      throw Error(fmt::format("sample history has {} steps, schema allows {}", hist.size(), max_history));
    for (std::size_t j = 0; j < hist.size(); ++j) {
      const std::size_t row = b * max_history + j;
      h.items[row] = static_cast<std::size_t>(hist[j].item);
      h.categories[row] = static_cast<std::size_t>(hist[j].category);
      (hist[j].label == 1 ? h.liked : h.disliked)[row] = 1.0;
    }
  }
  return h;
}

Var din_scores(Tape& tape, Var history, Var target, std::size_t steps, Parameter& w1, Parameter& b1, Parameter& w2,
               Parameter& b2) {
  if (history.cols() != target.cols())
    throw Error(fmt::format("din_attention: history width {} vs target width {}", history.cols(), target.cols()));
  if (history.rows() != target.rows() * steps)
    throw Error(fmt::format("din_attention: {} history rows for {} targets x {} steps", history.rows(), target.rows(),
                            steps));
  // [h, t, h - t, h * t] W = h (W_h + W_d) + t (W_t - W_d) + (h * t) W_p, with
  // the target term computed once per sample instead of once per step.
  const std::size_t d = history.cols();
  const Var w = tape.param(w1);
  if (w.rows() != 4 * d) throw Error(fmt::format("din_attention: first layer has {} rows, expected {}", w.rows(), 4 * d));
  const Var w_d = tensor::slice_rows(w, 2 * d, d);
  const Var w_h = tensor::add(tensor::slice_rows(w, 0, d), w_d);
  const Var w_t = tensor::sub(tensor::slice_rows(w, d, d), w_d);
  const Var t = tensor::repeat_rows(target, steps);
  const Var pre = tensor::add(tensor::add(tensor::matmul(history, w_h), tensor::repeat_rows(tensor::matmul(target, w_t), steps)),
                              tensor::matmul(tensor::mul(history, t), tensor::slice_rows(w, 3 * d, d)));
  const Var hidden = tensor::relu(tensor::add_row_bias(pre, tape.param(b1)));
  return tensor::add_row_bias(tensor::matmul(hidden, tape.param(w2)), tape.param(b2));
}

Var din_attention(Tape& tape, Var history, Var target, Var mask, std::size_t steps, Parameter& w1, Parameter& b1,
                  Parameter& w2, Parameter& b2) {
  const Var score = din_scores(tape, history, target, steps, w1, b1, w2, b2);
  return tensor::segment_sum(tensor::scale_rows(history, tensor::mul(score, mask)), steps);
}

Backbone::Backbone(const corpus::SampleSchema& schema, BackboneConfig config, tensor::ParameterSet& params,
                   std::uint64_t seed)
    : schema_(schema), config_(std::move(config)) {
  if (config_.embedding_dim == 0) throw Error("embedding dimension must be positive");
  if (config_.mlp_hidden.empty()) throw Error("backbone needs at least one output-MLP layer");
  if (schema_.user_fields.size() != schema_.user_vocab_sizes.size() ||
      schema_.context_fields.size() != schema_.context_vocab_sizes.size())
    throw Error("schema field names and vocabulary sizes disagree");
  const std::size_t e = config_.embedding_dim;
  Rng rng(seed);
  for (std::size_t f = 0; f < schema_.user_fields.size(); ++f) {
    const auto vocab = static_cast<std::size_t>(std::max(1, schema_.user_vocab_sizes[f]));
    user_tables_.push_back(
        &params.add(fmt::format("backbone.emb.user.{}", schema_.user_fields[f]), uniform_table(vocab, e, rng)));
  }
  for (std::size_t f = 0; f < schema_.context_fields.size(); ++f) {
    const auto vocab = static_cast<std::size_t>(std::max(1, schema_.context_vocab_sizes[f]));
    context_tables_.push_back(
        &params.add(fmt::format("backbone.emb.context.{}", schema_.context_fields[f]), uniform_table(vocab, e, rng)));
  }
  item_table_ = &params.add("backbone.emb.item",
                            uniform_table(static_cast<std::size_t>(std::max(1, schema_.item_vocab)), e, rng));
  category_table_ = &params.add("backbone.emb.category",
                                uniform_table(static_cast<std::size_t>(std::max(1, schema_.category_vocab)), e, rng));

  const std::size_t d = 2 * e;  // item embedding joined with category embedding
  if (config_.kind == BackboneKind::kDin) {
    att_w1_ = &params.add("backbone.att.layer0.w", hein::glorot_uniform(4 * d, config_.attention_hidden, rng));
    att_b1_ = &params.add("backbone.att.layer0.b", Tensor(1, config_.attention_hidden));
    att_w2_ = &params.add("backbone.att.layer1.w", hein::glorot_uniform(config_.attention_hidden, 1, rng));
    att_b2_ = &params.add("backbone.att.layer1.b", Tensor(1, 1));
  }

  std::vector<std::size_t> dims = config_.mlp_hidden;
  dims.push_back(1);
  w_base_ = &params.add("backbone.mlp.layer0.w_base", hein::glorot_uniform(base_width(), dims[0], rng));
  mlp_b_.push_back(&params.add("backbone.mlp.layer0.b", Tensor(1, dims[0])));
  for (std::size_t j = 1; j < dims.size(); ++j) {
    mlp_w_.push_back(&params.add(fmt::format("backbone.mlp.layer{}.w", j), hein::glorot_uniform(dims[j - 1], dims[j], rng)));
    mlp_b_.push_back(&params.add(fmt::format("backbone.mlp.layer{}.b", j), Tensor(1, dims[j])));
  }
  if (config_.aug_width > 0) {
    // Own stream, so base parameters are identical with and without augmentation.
    Rng aug_rng(derive_seed(seed, "aug"));
    w_aug_ = &params.add("backbone.mlp.layer0.w_aug", hein::glorot_uniform(config_.aug_width, dims[0], aug_rng));
  }
}

std::size_t Backbone::base_width() const {
  const std::size_t e = config_.embedding_dim;
  // user fields, liked and disliked interest (2e each), target (2e), context fields
  return e * schema_.user_fields.size() + 4 * e + 2 * e + e * schema_.context_fields.size();
}

Var Backbone::logits(Tape& tape, std::span<const corpus::Sample* const> batch, std::optional<Var> aug) const {
  if (batch.empty()) throw Error("backbone: empty batch");
  const std::size_t bsz = batch.size();
  const std::size_t e = config_.embedding_dim;
  std::vector<Var> parts;

  for (std::size_t f = 0; f < user_tables_.size(); ++f) {
    std::vector<std::size_t> ids(bsz);
    for (std::size_t b = 0; b < bsz; ++b) {
      if (batch[b]->user_features.size() != user_tables_.size())
        throw Error(fmt::format("sample has {} user fields, schema has {}", batch[b]->user_features.size(),
                                user_tables_.size()));
      ids[b] = static_cast<std::size_t>(batch[b]->user_features[f]);
    }
    parts.push_back(tensor::embedding_lookup(tape.param(*user_tables_[f]), ids));
  }

  const Var items = tape.param(*item_table_);
  const Var cats = tape.param(*category_table_);
  std::vector<std::size_t> target_items(bsz);
  std::vector<std::size_t> target_cats(bsz);
  for (std::size_t b = 0; b < bsz; ++b) {
    target_items[b] = static_cast<std::size_t>(batch[b]->target_item);
    target_cats[b] = static_cast<std::size_t>(batch[b]->target_category);
  }
  const Var target =
      tensor::concat_cols({tensor::embedding_lookup(items, target_items), tensor::embedding_lookup(cats, target_cats)});

  const std::size_t steps = schema_.max_history;
  if (steps == 0) {
    parts.push_back(tape.constant(Tensor(bsz, 4 * e)));
  } else {
    const HistoryBatch hb = make_history_batch(batch, steps);
    const Var history =
        tensor::concat_cols({tensor::embedding_lookup(items, hb.items), tensor::embedding_lookup(cats, hb.categories)});
    // Both masks share one set of scores.
    std::optional<Var> scores;
    if (config_.kind == BackboneKind::kDin)
      scores = din_scores(tape, history, target, steps, *att_w1_, *att_b1_, *att_w2_, *att_b2_);
    for (const auto* mask_values : {&hb.liked, &hb.disliked}) {
      if (scores) {
        const Var weights = tensor::mul(*scores, tape.constant(column(*mask_values)));
        parts.push_back(tensor::segment_sum(tensor::scale_rows(history, weights), steps));
      } else {
        // Mean over the masked steps; an empty set pools to zero.
        std::vector<double> w = *mask_values;
        for (std::size_t b = 0; b < bsz; ++b) {
          double n = 0.0;
          for (std::size_t j = 0; j < steps; ++j) n += w[b * steps + j];
          if (n > 0.0)
            for (std::size_t j = 0; j < steps; ++j) w[b * steps + j] /= n;
        }
        parts.push_back(tensor::segment_sum(tensor::scale_rows(history, tape.constant(column(w))), steps));
      }
    }
  }
  parts.push_back(target);

  for (std::size_t f = 0; f < context_tables_.size(); ++f) {
    std::vector<std::size_t> ids(bsz);
    for (std::size_t b = 0; b < bsz; ++b) {
      if (batch[b]->context.size() != context_tables_.size())
        throw Error(fmt::format("sample has {} context fields, schema has {}", batch[b]->context.size(),
                                context_tables_.size()));
      ids[b] = static_cast<std::size_t>(batch[b]->context[f]);
    }
    parts.push_back(tensor::embedding_lookup(tape.param(*context_tables_[f]), ids));
  }

  Var x = tensor::matmul(tensor::concat_cols(parts), tape.param(*w_base_));
  if (config_.aug_width > 0) {
    if (!aug) throw Error("backbone: augmented model called without augmented input");
    if (aug->rows() != bsz || aug->cols() != config_.aug_width)
      throw Error(fmt::format("backbone: augmented input is {}x{}, expected {}x{}", aug->rows(), aug->cols(), bsz,
                              config_.aug_width));
    x = tensor::add(x, tensor::matmul(*aug, tape.param(*w_aug_)));
  } else if (aug) {
    throw Error("backbone: base model given augmented input");
  }
  x = tensor::add_row_bias(x, tape.param(*mlp_b_[0]));
  for (std::size_t j = 0; j < mlp_w_.size(); ++j) {
    x = tensor::relu(x);
    x = tensor::add_row_bias(tensor::matmul(x, tape.param(*mlp_w_[j])), tape.param(*mlp_b_[j + 1]));
  }
  return x;
}

std::vector<double> sigmoid(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    out[i] = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }
  return out;
}

}  // namespace reki::backbone
