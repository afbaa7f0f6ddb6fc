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

#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reki/clustering.hpp"
#include "reki/config.hpp"
#include "reki/corpus.hpp"
#include "reki/llm_client.hpp"
#include "reki/prompting.hpp"
#include "reki/trainer.hpp"

namespace reki::pipeline {

/// The preprocessed corpus every stage reads.
struct Dataset {
  corpus::Tables tables;
  std::vector<corpus::InteractionRecord> records;  // binarised, filtered, chronological
  std::vector<std::vector<corpus::InteractionRecord>> by_user;
  std::vector<int> users;  // ids with at least one surviving interaction, ascending
  std::vector<int> items;
  corpus::SampleSchema schema;
  corpus::DatasetSplit split;  // targets inside the knowledge window removed
  std::size_t window_dropped = 0;
  std::string data_dir;
};

/// Expected LLM calls for a mode: reki_i one per user and per item minus
/// cache hits, reki_c one per cluster, base none.
std::size_t account_calls(Mode mode, std::size_t users, std::size_t items, std::size_t user_clusters,
                          std::size_t item_clusters, std::size_t cache_hits = 0);

struct KnowledgeStageResult {
  std::string dir;
  std::size_t requests = 0;
  std::size_t llm_calls = 0;
  std::size_t cache_hits = 0;
  std::size_t failures = 0;
};

struct ClusterStageResult {
  std::string dir;
  std::size_t user_clusters = 0;
  std::size_t item_clusters = 0;
};

struct TrainStageResult {
  std::string dir;
  std::string checkpoint;
  std::string report;
  nlohmann::json report_json;
};

struct PrecomputeResult {
  std::string dir;
  std::string store;
  std::string manifest;
  std::size_t entries = 0;
};

struct BenchResult {
  ServingPath path = ServingPath::kBase;
  std::size_t batches = 0;
  std::size_t batch_size = 0;
  double mean_seconds = 0.0;
  double p95_seconds = 0.0;
  nlohmann::json to_json() const;
};

/// Mean and p95 (nearest rank) of per-batch wall times after dropping warmup.
BenchResult summarize_timings(ServingPath path, std::vector<double> seconds, std::size_t warmup,
                              std::size_t batch_size);

/// Stages of one configured run. Artifacts live in `work_dir/<stage>-<hash>`
/// where the hash covers exactly the configuration a stage depends on, so
/// repeated stages reuse their outputs. Each stage requires its upstream
/// artifacts to exist; only the corpus is produced on demand.
class Pipeline {
 public:
  explicit Pipeline(RunConfig config, std::ostream* log = nullptr);

  const RunConfig& config() const { return config_; }
  /// Replaces the LLM the knowledge stages call (tests inject counters).
  void set_llm(std::shared_ptr<LlmClient> llm) { llm_ = std::move(llm); }

  std::string stage_dir(const std::string& stage) const;
  std::string stage_hash(const std::string& stage) const;
  /// Ordered (stage, artifact directory) list this configuration would run.
  std::vector<std::pair<std::string, std::string>> plan() const;

  std::string synth();
  const Dataset& dataset();
  prompting::FactorSet factors();
  ClusterStageResult cluster();
  KnowledgeStageResult knowledge();
  std::string encode();
  TrainStageResult train();
  /// Test-split metrics on `path` (the model's default path when unset).
  nlohmann::json eval(std::optional<ServingPath> path = std::nullopt);
  PrecomputeResult precompute();
  BenchResult bench(ServingPath path);
  /// Every stage the mode needs, in order; returns the training report.
  TrainStageResult run_all();

  /// The trained model for this configuration, loaded from its checkpoint.
  std::unique_ptr<JointModel> load_model();
  ModelSpec model_spec() const;
  EntityKeys entity_keys();

 private:
  void log(const std::string& message) const;
  std::string knowledge_store_path() const;
  LlmClient& llm();
  std::shared_ptr<const WorldKnowledge> world();
  std::unique_ptr<JointModel> serving_model(ServingPath path);

  RunConfig config_;
  std::ostream* log_;
  std::shared_ptr<LlmClient> llm_;
  std::optional<Dataset> dataset_;
};

/// Item description text shared by prompts and the item_desc encoding.
std::string item_description(const corpus::ItemInfo& item);

}  // namespace reki::pipeline
