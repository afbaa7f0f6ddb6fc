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
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reki/backbone.hpp"
#include "reki/corpus.hpp"
#include "reki/hein.hpp"
#include "reki/keys.hpp"
#include "reki/knowledge.hpp"
#include "reki/tensor.hpp"

namespace reki::pipeline {

enum class ServingPath { kFullHein, kDetached, kBase };

std::string to_string(ServingPath path);
ServingPath serving_path_from_string(const std::string& name);

/// Augmented inputs, concatenated in this order: user, item, user_history,
/// item_desc. The first and third use the user side of the adaptor.
struct AugSlots {
  bool user = false;
  bool item = false;
  bool user_history = false;
  bool item_desc = false;

  std::size_t count() const { return user + item + user_history + item_desc; }
};

/// Store keys per slot, indexed by interned entity id (user ids for user
/// slots, item ids for item slots). An empty key means "no key".
struct SlotKeys {
  KeyKind kind = KeyKind::kUser;
  std::vector<std::string> keys;
};

struct EntityKeys {
  std::optional<SlotKeys> user;
  std::optional<SlotKeys> item;
  std::optional<SlotKeys> user_history;
  std::optional<SlotKeys> item_desc;
};

/// Dense per-entity rows for every active slot.
struct EntityTables {
  tensor::Tensor user;
  tensor::Tensor item;
  tensor::Tensor user_history;
  tensor::Tensor item_desc;
  /// Keys absent from the store, served by the kind's default vector.
  std::size_t missing = 0;
};

/// Gathers each entity's vector from `store`; absent keys take the store's
/// default for that kind (zeros when none was computed).
EntityTables resolve_tables(const knowledge::VectorStore& store, const EntityKeys& keys);

struct ModelSpec {
  backbone::BackboneConfig backbone;
  hein::HeinConfig hein;  // consulted only when slots.count() > 0
  AugSlots slots;
  std::uint64_t seed = 0;
};

/// Backbone plus, when any slot is active, an adaptor mapping each slot's
/// knowledge row to a q-vector. Base parameters are drawn from a stream
/// independent of the adaptor, so every knowledge arm shares the base
/// initialisation for a given seed.
class JointModel {
 public:
  JointModel(const corpus::SampleSchema& schema, ModelSpec spec);

  tensor::ParameterSet& params() { return *params_; }
  const tensor::ParameterSet& params() const { return *params_; }
  const ModelSpec& spec() const { return spec_; }
  bool augmented() const { return spec_.slots.count() > 0; }
  const hein::Hein* adaptor() const { return adaptor_.get(); }
  const backbone::Backbone& backbone() const { return *backbone_; }

  /// m-dim knowledge rows consumed by the full path.
  void set_knowledge(EntityTables tables);
  /// q-dim prestored rows consumed by the detached path.
  void set_augmented(EntityTables tables);

  tensor::Var logits(tensor::Tape& tape, std::span<const corpus::Sample* const> batch, ServingPath path) const;
  std::vector<double> predict(std::span<const corpus::Sample* const> samples, ServingPath path,
                              std::size_t batch_size) const;

  /// Runs the adaptor side for one m-dim row.
  std::vector<double> adapt(hein::Side side, std::span<const double> row) const;

  ServingPath default_path() const { return augmented() ? ServingPath::kFullHein : ServingPath::kBase; }

 private:
  std::unique_ptr<tensor::ParameterSet> params_;
  ModelSpec spec_;
  std::unique_ptr<backbone::Backbone> backbone_;
  std::unique_ptr<hein::Hein> adaptor_;
  EntityTables knowledge_;
  EntityTables augmented_;
};

struct TrainOptions {
  std::size_t batch_size = 256;
  std::size_t epochs = 10;
  std::size_t patience = 3;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double auc = 0.0;
  double logloss = 0.0;
};

struct TrainOutcome {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_auc = 0.0;
  double best_logloss = 0.0;
  std::size_t batches = 0;
  std::vector<double> batch_seconds;
};

struct Evaluation {
  double auc = 0.0;
  double logloss = 0.0;
};

Evaluation evaluate(const JointModel& model, const std::vector<corpus::Sample>& samples, ServingPath path,
                    std::size_t batch_size);

/// Mini-batch Adam on `train` with a seeded per-epoch shuffle; `test` is
/// evaluated after every epoch and training stops once its AUC has not
/// improved for `patience` epochs. The best epoch's parameters are restored.
TrainOutcome train_joint(JointModel& model, const std::vector<corpus::Sample>& train,
                         const std::vector<corpus::Sample>& test, const TrainOptions& options);

/// One JSON line per epoch: {"epoch", "split", "auc", "logloss"}.
std::string metrics_jsonl(const TrainOutcome& outcome);

/// Writes one q-vector per key of `representations` (the adaptor side follows
/// the key kind) plus per-kind defaults into a new store at `out_path`.
knowledge::VectorStore precompute_augmented(const JointModel& model, const knowledge::VectorStore& representations,
                                            const std::string& out_path);

hein::Side side_of(KeyKind kind);

}  // namespace reki::pipeline
