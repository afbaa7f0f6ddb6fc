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
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reki/backbone.hpp"
#include "reki/hein.hpp"
#include "reki/synth.hpp"

namespace reki::pipeline {

enum class Mode { kBase, kRekiI, kRekiC };
enum class Ablation { kNone, kUser, kItem, kBoth };

std::string to_string(Mode mode);
std::string to_string(Ablation ablation);
Mode mode_from_string(const std::string& name);
Ablation ablation_from_string(const std::string& name);

struct DataConfig {
  std::string interactions;  // empty: use the synthetic corpus
  std::string items;
  std::string users;
  std::vector<std::string> user_columns;
  std::string scenario = "movie";
  int rating_threshold = 4;
  int min_interactions = 5;
  double train_fraction = 0.9;
  std::size_t max_history = 30;  // H fed to the backbone
  /// Earliest interactions per user used as knowledge evidence. Samples whose
  /// target falls inside this window are not trained or evaluated on.
  std::size_t knowledge_window = 20;
};

struct LlmConfig {
  std::string provider = "mock";  // mock | remote
  std::string endpoint;
  std::string model;
  std::string api_key_env = "REKI_LLM_API_KEY";
  std::uint64_t seed = 0;
  std::size_t parallelism = 4;
  int max_attempts = 3;
  std::string factor_source = "preset";  // preset | llm
  std::vector<std::string> factors_add;
  std::vector<std::string> factors_drop;
};

struct EncoderConfig {
  std::string provider = "mock";  // mock | remote
  std::string profile = "small";
  std::size_t dim = 0;            // 0: the profile's dimension
  std::string aggregation = "mean";
  std::uint64_t seed = 0;
  std::string endpoint;
  std::string model;
  std::size_t reduce_dim = 0;     // 0: no PCA
  bool standardize = true;        // per-dimension z-score over all entries, applied last
};

struct ClusterConfig {
  std::size_t item_leaf = 80;
  std::size_t user_leaf = 100;
  std::size_t arity = 2;
  std::size_t representation_items = 15;
  std::size_t pretrain_epochs = 1;
};

struct TrainConfig {
  std::size_t batch_size = 256;
  std::size_t epochs = 10;
  std::size_t patience = 3;
  std::vector<double> lr_grid{1e-3, 3e-4};
};

struct BenchConfig {
  std::size_t batches = 50;
  std::size_t warmup = 10;
  std::size_t batch_size = 256;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string work_dir = "reki-work";
  Mode mode = Mode::kRekiI;
  hein::AdaptorKind adaptor = hein::AdaptorKind::kHein;
  Ablation ablation = Ablation::kBoth;
  DataConfig data;
  synth::SynthSpec synth;
  std::uint64_t synth_seed = 1;
  LlmConfig llm;
  EncoderConfig encoder;
  ClusterConfig cluster;
  hein::HeinConfig hein;  // input_dim and kind are derived, not configured
  backbone::BackboneConfig model;  // aug_width is derived
  TrainConfig train;
  BenchConfig bench;

  /// Encoder output width after the optional PCA step.
  std::size_t representation_dim() const;
  bool uses_user_knowledge() const { return ablation == Ablation::kUser || ablation == Ablation::kBoth; }
  bool uses_item_knowledge() const { return ablation == Ablation::kItem || ablation == Ablation::kBoth; }
};

/// Every key with its default value; the schema overrides must address.
nlohmann::json default_config_json();

nlohmann::json to_json(const RunConfig& config);
/// Parses a full tree (as merged via default_config_json) and normalises the
/// mode/ablation pair: ablation none forces mode base and vice versa.
RunConfig from_json(const nlohmann::json& tree);

/// Overlays `file` onto the defaults; unknown keys are an error.
nlohmann::json merge_config(const nlohmann::json& defaults, const nlohmann::json& file);
/// Applies one `dotted.key=value` override in place. The value is parsed as
/// JSON when possible and taken as a string otherwise.
void apply_override(nlohmann::json& tree, const std::string& assignment);

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides);

/// 16 hex digits of FNV-1a over the canonical (sorted-key) dump.
std::string json_hash(const nlohmann::json& value);

}  // namespace reki::pipeline
