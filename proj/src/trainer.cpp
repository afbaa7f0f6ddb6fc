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

#include "reki/trainer.hpp"

#include <chrono>
#include <numeric>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "reki/common.hpp"
#include "reki/metrics.hpp"

namespace reki::pipeline {

using tensor::Tape;
using tensor::Tensor;
using tensor::Var;

std::string to_string(ServingPath path) {
  switch (path) {
    case ServingPath::kFullHein: return "full_hein";
    case ServingPath::kDetached: return "detached";
    case ServingPath::kBase: return "base";
  }
  return "base";
}

ServingPath serving_path_from_string(const std::string& name) {
  if (name == "full_hein") return ServingPath::kFullHein;
  if (name == "detached") return ServingPath::kDetached;
  if (name == "base") return ServingPath::kBase;
  throw Error(fmt::format("unknown serving path '{}' (expected full_hein, detached or base)", name));
}

hein::Side side_of(KeyKind kind) {
  switch (kind) {
    case KeyKind::kUser:
    case KeyKind::kUserCluster:
    case KeyKind::kUserHistory: return hein::Side::kUser;
    default: return hein::Side::kItem;
  }
}

namespace {

Tensor resolve_slot(const knowledge::VectorStore& store, const SlotKeys& slot, std::size_t& missing) {
  const std::size_t dim = store.dim();
  Tensor out(slot.keys.size(), dim);
  const auto fallback = store.default_vector(slot.kind);
  for (std::size_t id = 0; id < slot.keys.size(); ++id) {
    std::optional<std::vector<float>> v;
    if (!slot.keys[id].empty()) v = store.get(slot.kind, slot.keys[id]);
    if (!v && id != 0) ++missing;  // id 0 is padding, not a real entity
    const auto& row = v ? *v : fallback;
    for (std::size_t j = 0; j < dim; ++j) out(id, j) = row[j];
  }
  return out;
}

Tensor gather(const Tensor& table, const std::vector<std::size_t>& ids, const char* what) {
  if (table.empty()) throw Error(fmt::format("no {} vectors loaded", what));
  Tensor out(ids.size(), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= table.rows()) throw Error(fmt::format("{} id {} outside the loaded table", what, ids[i]));
    std::copy(table.row(ids[i]).begin(), table.row(ids[i]).end(), out.row(i).begin());
  }
  return out;
}

}  // namespace

EntityTables resolve_tables(const knowledge::VectorStore& store, const EntityKeys& keys) {
  EntityTables t;
  if (keys.user) t.user = resolve_slot(store, *keys.user, t.missing);
  if (keys.item) t.item = resolve_slot(store, *keys.item, t.missing);
  if (keys.user_history) t.user_history = resolve_slot(store, *keys.user_history, t.missing);
  if (keys.item_desc) t.item_desc = resolve_slot(store, *keys.item_desc, t.missing);
  return t;
}

JointModel::JointModel(const corpus::SampleSchema& schema, ModelSpec spec)
    : params_(std::make_unique<tensor::ParameterSet>()), spec_(std::move(spec)) {
  spec_.backbone.aug_width = spec_.slots.count() * spec_.hein.output_dim;
  backbone_ = std::make_unique<backbone::Backbone>(schema, spec_.backbone, *params_, derive_seed(spec_.seed, "backbone"));
  if (augmented()) adaptor_ = std::make_unique<hein::Hein>(spec_.hein, *params_, derive_seed(spec_.seed, "adaptor"));
}

void JointModel::set_knowledge(EntityTables tables) { knowledge_ = std::move(tables); }
void JointModel::set_augmented(EntityTables tables) { augmented_ = std::move(tables); }

Var JointModel::logits(Tape& tape, std::span<const corpus::Sample* const> batch, ServingPath path) const {
  if (!augmented()) {
    if (path != ServingPath::kBase) throw Error(fmt::format("base model cannot serve the {} path", to_string(path)));
    return backbone_->logits(tape, batch, std::nullopt);
  }
  if (path == ServingPath::kBase) throw Error("augmented model cannot serve the base path");

  std::vector<std::size_t> users(batch.size());
  std::vector<std::size_t> items(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    users[b] = static_cast<std::size_t>(batch[b]->user);
    items[b] = static_cast<std::size_t>(batch[b]->target_item);
  }
  const EntityTables& src = path == ServingPath::kFullHein ? knowledge_ : augmented_;
  struct Slot {
    bool on;
    const Tensor* table;
    const std::vector<std::size_t>* ids;
    hein::Side side;
    const char* name;
  };
  const Slot slots[] = {{spec_.slots.user, &src.user, &users, hein::Side::kUser, "user"},
                        {spec_.slots.item, &src.item, &items, hein::Side::kItem, "item"},
                        {spec_.slots.user_history, &src.user_history, &users, hein::Side::kUser, "user history"},
                        {spec_.slots.item_desc, &src.item_desc, &items, hein::Side::kItem, "item description"}};
  std::vector<Var> parts;
  for (const Slot& s : slots) {
    if (!s.on) continue;
    const Var rows = tape.constant(gather(*s.table, *s.ids, s.name));
    parts.push_back(path == ServingPath::kFullHein ? adaptor_->forward_side(tape, s.side, rows).output : rows);
  }
  const Var aug = parts.size() == 1 ? parts[0] : tensor::concat_cols(parts);
  return backbone_->logits(tape, batch, aug);
}

std::vector<double> JointModel::predict(std::span<const corpus::Sample* const> samples, ServingPath path,
                                        std::size_t batch_size) const {
  if (batch_size == 0) throw Error("batch size must be positive");
  std::vector<double> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const auto batch = samples.subspan(start, std::min(batch_size, samples.size() - start));
    Tape tape(false);
    const Tensor& z = logits(tape, batch, path).value();
    const auto p = backbone::sigmoid(std::span<const double>(z.data(), z.size()));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<double> JointModel::adapt(hein::Side side, std::span<const double> row) const {
  if (!adaptor_) throw Error("model has no adaptor");
  Tape tape(false);
  const Var r = tape.constant(Tensor(1, row.size(), std::vector<double>(row.begin(), row.end())));
  const Tensor& v = adaptor_->forward_side(tape, side, r).output.value();
  return v.values();
}

Evaluation evaluate(const JointModel& model, const std::vector<corpus::Sample>& samples, ServingPath path,
                    std::size_t batch_size) {
  if (samples.empty()) throw Error("cannot evaluate an empty split");
  std::vector<const corpus::Sample*> ptrs;
  std::vector<int> labels;
  for (const auto& s : samples) {
    ptrs.push_back(&s);
    labels.push_back(s.label);
  }
  const auto probs = model.predict(ptrs, path, batch_size);
  return {metrics::auc(probs, labels), metrics::logloss(probs, labels)};
}

TrainOutcome train_joint(JointModel& model, const std::vector<corpus::Sample>& train,
                         const std::vector<corpus::Sample>& test, const TrainOptions& options) {
  if (train.empty()) throw Error("cannot train on an empty split");
  if (options.batch_size == 0) throw Error("batch size must be positive");
  auto& params = model.params();
  tensor::Adam adam(params, tensor::AdamConfig{.lr = options.lr});
  Rng rng(derive_seed(options.seed, "shuffle"));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainOutcome outcome;
  std::vector<Tensor> best;
  std::size_t stale = 0;
  const ServingPath path = model.default_path();
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const auto t0 = std::chrono::steady_clock::now();
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      std::vector<const corpus::Sample*> batch;
      std::vector<double> labels;
      for (std::size_t k = start; k < end; ++k) {
        batch.push_back(&train[order[k]]);
        labels.push_back(static_cast<double>(train[order[k]].label));
      }
      params.zero_grad();
      Tape tape(true);
      const Var loss = tensor::bce_with_logits(model.logits(tape, batch, path), labels);
      tape.backward(loss);
      adam.step();
      loss_sum += loss.value()[0];
      ++batches;
      outcome.batch_seconds.push_back(
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    outcome.batches += batches;
    const Evaluation ev = evaluate(model, test, path, options.batch_size);
    outcome.epochs.push_back({epoch, loss_sum / static_cast<double>(batches), ev.auc, ev.logloss});
    if (best.empty() || ev.auc > outcome.best_auc) {
      outcome.best_auc = ev.auc;
      outcome.best_logloss = ev.logloss;
      outcome.best_epoch = epoch;
      best.clear();
      for (std::size_t k = 0; k < params.size(); ++k) best.push_back(params[k].value);
      stale = 0;
    } else if (++stale >= options.patience) {
      break;
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) params[k].value = best[k];
  return outcome;
}

std::string metrics_jsonl(const TrainOutcome& outcome) {
  std::string out;
  for (const auto& e : outcome.epochs) {
    nlohmann::json j{{"epoch", e.epoch}, {"split", "test"}, {"auc", e.auc}, {"logloss", e.logloss}};
    out += j.dump() + "\n";
  }
  return out;
}

knowledge::VectorStore precompute_augmented(const JointModel& model, const knowledge::VectorStore& representations,
                                            const std::string& out_path) {
  const auto* adaptor = model.adaptor();
  if (!adaptor) throw Error("precompute needs a model with an adaptor");
  if (representations.dim() != adaptor->config().input_dim)
    throw Error(fmt::format("representation store has {} dims, adaptor expects {}", representations.dim(),
                            adaptor->config().input_dim));
  auto out = knowledge::VectorStore::create(out_path, static_cast<std::uint32_t>(adaptor->config().output_dim));
  std::set<int> kinds;
  for (const auto& e : representations.entries()) {
    const std::vector<double> row(e.vector.begin(), e.vector.end());
    out.put(e.kind, e.key, std::span<const double>(model.adapt(side_of(e.kind), row)));
    kinds.insert(static_cast<int>(e.kind));
  }
  // The default q-vector is the adaptor applied to the default m-vector, so
  // a cold-start key scores identically on both serving paths.
  for (int k : kinds) {
    const auto kind = static_cast<KeyKind>(k);
    const auto d = representations.default_vector(kind);
    const std::vector<double> row(d.begin(), d.end());
    out.put(kind, std::string(knowledge::kDefaultKey), std::span<const double>(model.adapt(side_of(kind), row)));
  }
  return out;
}

}  // namespace reki::pipeline
