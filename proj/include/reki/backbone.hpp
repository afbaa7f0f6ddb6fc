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

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reki/corpus.hpp"
#include "reki/tensor.hpp"

namespace reki::backbone {

enum class BackboneKind { kDin, kMlp };

std::string to_string(BackboneKind kind);
BackboneKind backbone_kind_from_string(const std::string& name);

struct BackboneConfig {
  BackboneKind kind = BackboneKind::kDin;
  std::size_t embedding_dim = 32;
  std::size_t attention_hidden = 36;
  std::vector<std::size_t> mlp_hidden{200, 80};
  /// Columns of augmented input appended after the original features; zero
  /// for the base model.
  std::size_t aug_width = 0;
};

/// Flattened history of a batch: B*H rows, step b*H + j is the j-th most
/// recent prior interaction of sample b (padding rows have id 0).
struct HistoryBatch {
  std::size_t batch = 0;
  std::size_t steps = 0;
  std::vector<std::size_t> items;
  std::vector<std::size_t> categories;
  std::vector<double> liked;     // 1 for a real step labelled positive
  std::vector<double> disliked;  // 1 for a real step labelled negative
};

HistoryBatch make_history_batch(std::span<const corpus::Sample* const> batch, std::size_t max_history);

/// DIN-style local activation: each history row h is scored by
/// MLP([h, t, h - t, h * t]) (ReLU hidden, scalar out, no softmax) against
/// the target row t of its sample; the interest is sum_j mask_j * score_j * h_j
/// per sample. `history` is (B*H) x d, `target` is B x d, `mask` (B*H) x 1.
tensor::Var din_attention(tensor::Tape& tape, tensor::Var history, tensor::Var target, tensor::Var mask,
                          std::size_t steps, tensor::Parameter& w1, tensor::Parameter& b1, tensor::Parameter& w2,
                          tensor::Parameter& b2);

/// The unmasked (B*H) x 1 scores din_attention weights history rows by.
tensor::Var din_scores(tensor::Tape& tape, tensor::Var history, tensor::Var target, std::size_t steps,
                       tensor::Parameter& w1, tensor::Parameter& b1, tensor::Parameter& w2, tensor::Parameter& b2);

/// CTR backbone over the original features plus an optional augmented block.
/// The first output layer is split into base and augmented weights so that a
/// base model and an augmented model share every base parameter shape.
/// History is encoded twice, once over liked and once over disliked steps.
class Backbone {
 public:
  Backbone(const corpus::SampleSchema& schema, BackboneConfig config, tensor::ParameterSet& params,
           std::uint64_t seed);

  /// Logits, B x 1. `aug` must be B x aug_width when aug_width > 0.
  tensor::Var logits(tensor::Tape& tape, std::span<const corpus::Sample* const> batch,
                     std::optional<tensor::Var> aug) const;

  const BackboneConfig& config() const { return config_; }
  const corpus::SampleSchema& schema() const { return schema_; }
  /// Width of the base part of the first output-layer input.
  std::size_t base_width() const;

 private:
  corpus::SampleSchema schema_;
  BackboneConfig config_;
  std::vector<tensor::Parameter*> user_tables_;
  std::vector<tensor::Parameter*> context_tables_;
  tensor::Parameter* item_table_ = nullptr;
  tensor::Parameter* category_table_ = nullptr;
  tensor::Parameter* att_w1_ = nullptr;
  tensor::Parameter* att_b1_ = nullptr;
  tensor::Parameter* att_w2_ = nullptr;
  tensor::Parameter* att_b2_ = nullptr;
  tensor::Parameter* w_base_ = nullptr;
  tensor::Parameter* w_aug_ = nullptr;
  std::vector<tensor::Parameter*> mlp_w_;  // layers after the first
  std::vector<tensor::Parameter*> mlp_b_;  // every layer
};

std::vector<double> sigmoid(std::span<const double> logits);

}  // namespace reki::backbone
