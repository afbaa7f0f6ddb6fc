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

#include "reki/config.hpp"

#include <fmt/format.h>

#include "reki/common.hpp"
#include "reki/knowledge.hpp"

namespace reki::pipeline {

using nlohmann::json;

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::kBase: return "base";
    case Mode::kRekiI: return "reki_i";
    case Mode::kRekiC: return "reki_c";
  }
  return "base";
}

std::string to_string(Ablation ablation) {
  switch (ablation) {
    case Ablation::kNone: return "none";
    case Ablation::kUser: return "user";
    case Ablation::kItem: return "item";
    case Ablation::kBoth: return "both";
  }
  return "none";
}

Mode mode_from_string(const std::string& name) {
  if (name == "base") return Mode::kBase;
  if (name == "reki_i") return Mode::kRekiI;
  if (name == "reki_c") return Mode::kRekiC;
  throw Error(fmt::format("unknown mode '{}' (expected base, reki_i or reki_c)", name));
}

Ablation ablation_from_string(const std::string& name) {
  if (name == "none") return Ablation::kNone;
  if (name == "user") return Ablation::kUser;
  if (name == "item") return Ablation::kItem;
  if (name == "both") return Ablation::kBoth;
  throw Error(fmt::format("unknown ablation '{}' (expected none, user, item or both)", name));
}

std::size_t RunConfig::representation_dim() const {
  if (encoder.reduce_dim > 0) return encoder.reduce_dim;
  return encoder.dim > 0 ? encoder.dim : knowledge::profile_dim(encoder.profile);
}

json to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["work_dir"] = c.work_dir;
  j["mode"] = to_string(c.mode);
  j["adaptor"] = hein::to_string(c.adaptor);
  j["ablation"] = to_string(c.ablation);
  j["data"] = {{"interactions", c.data.interactions},
               {"items", c.data.items},
               {"users", c.data.users},
               {"user_columns", c.data.user_columns},
               {"scenario", c.data.scenario},
               {"rating_threshold", c.data.rating_threshold},
               {"min_interactions", c.data.min_interactions},
               {"train_fraction", c.data.train_fraction},
               {"max_history", c.data.max_history},
               {"knowledge_window", c.data.knowledge_window}};
  j["synth"] = {{"users", c.synth.users},
                {"items", c.synth.items},
                {"genres", c.synth.genres},
                {"interactions", c.synth.interactions},
                {"noise", c.synth.noise},
                {"max_favourites", c.synth.max_favourites},
                {"primary_weight", c.synth.primary_weight},
                {"threshold", c.synth.threshold},
                {"seed", c.synth_seed}};
  j["llm"] = {{"provider", c.llm.provider},
              {"endpoint", c.llm.endpoint},
              {"model", c.llm.model},
              {"api_key_env", c.llm.api_key_env},
              {"seed", c.llm.seed},
              {"parallelism", c.llm.parallelism},
              {"max_attempts", c.llm.max_attempts},
              {"factor_source", c.llm.factor_source},
              {"factors_add", c.llm.factors_add},
              {"factors_drop", c.llm.factors_drop}};
  j["encoder"] = {{"provider", c.encoder.provider},
                  {"profile", c.encoder.profile},
                  {"dim", c.encoder.dim},
                  {"aggregation", c.encoder.aggregation},
                  {"seed", c.encoder.seed},
                  {"endpoint", c.encoder.endpoint},
                  {"model", c.encoder.model},
                  {"reduce_dim", c.encoder.reduce_dim},
                  {"standardize", c.encoder.standardize}};
  j["cluster"] = {{"item_leaf", c.cluster.item_leaf},
                  {"user_leaf", c.cluster.user_leaf},
                  {"arity", c.cluster.arity},
                  {"representation_items", c.cluster.representation_items},
                  {"pretrain_epochs", c.cluster.pretrain_epochs}};
  j["hein"] = {{"q", c.hein.output_dim},
               {"hidden", c.hein.hidden},
               {"n_shared", c.hein.n_shared},
               {"n_user", c.hein.n_user},
               {"n_item", c.hein.n_item}};
  j["model"] = {{"backbone", backbone::to_string(c.model.kind)},
                {"embedding_dim", c.model.embedding_dim},
                {"attention_hidden", c.model.attention_hidden},
                {"mlp", c.model.mlp_hidden}};
  j["train"] = {{"batch_size", c.train.batch_size},
                {"epochs", c.train.epochs},
                {"patience", c.train.patience},
                {"lr_grid", c.train.lr_grid}};
  j["bench"] = {{"batches", c.bench.batches}, {"warmup", c.bench.warmup}, {"batch_size", c.bench.batch_size}};
  return j;
}

json default_config_json() { return to_json(RunConfig{}); }

RunConfig from_json(const json& j) {
  RunConfig c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    c.work_dir = j.at("work_dir").get<std::string>();
    c.mode = mode_from_string(j.at("mode").get<std::string>());
    c.adaptor = hein::adaptor_kind_from_string(j.at("adaptor").get<std::string>());
    c.ablation = ablation_from_string(j.at("ablation").get<std::string>());

    const auto& d = j.at("data");
    c.data.interactions = d.at("interactions").get<std::string>();
    c.data.items = d.at("items").get<std::string>();
    c.data.users = d.at("users").get<std::string>();
    c.data.user_columns = d.at("user_columns").get<std::vector<std::string>>();
    c.data.scenario = d.at("scenario").get<std::string>();
    c.data.rating_threshold = d.at("rating_threshold").get<int>();
    c.data.min_interactions = d.at("min_interactions").get<int>();
    c.data.train_fraction = d.at("train_fraction").get<double>();
    c.data.max_history = d.at("max_history").get<std::size_t>();
    c.data.knowledge_window = d.at("knowledge_window").get<std::size_t>();

    const auto& s = j.at("synth");
    c.synth.users = s.at("users").get<std::size_t>();
    c.synth.items = s.at("items").get<std::size_t>();
    c.synth.genres = s.at("genres").get<std::size_t>();
    c.synth.interactions = s.at("interactions").get<std::size_t>();
    c.synth.noise = s.at("noise").get<double>();
    c.synth.max_favourites = s.at("max_favourites").get<std::size_t>();
    c.synth.primary_weight = s.at("primary_weight").get<double>();
    c.synth.threshold = s.at("threshold").get<double>();
    c.synth_seed = s.at("seed").get<std::uint64_t>();

    const auto& l = j.at("llm");
    c.llm.provider = l.at("provider").get<std::string>();
    c.llm.endpoint = l.at("endpoint").get<std::string>();
    c.llm.model = l.at("model").get<std::string>();
    c.llm.api_key_env = l.at("api_key_env").get<std::string>();
    c.llm.seed = l.at("seed").get<std::uint64_t>();
    c.llm.parallelism = l.at("parallelism").get<std::size_t>();
    c.llm.max_attempts = l.at("max_attempts").get<int>();
    c.llm.factor_source = l.at("factor_source").get<std::string>();
    c.llm.factors_add = l.at("factors_add").get<std::vector<std::string>>();
    c.llm.factors_drop = l.at("factors_drop").get<std::vector<std::string>>();

    const auto& e = j.at("encoder");
    c.encoder.provider = e.at("provider").get<std::string>();
    c.encoder.profile = e.at("profile").get<std::string>();
    c.encoder.dim = e.at("dim").get<std::size_t>();
    c.encoder.aggregation = e.at("aggregation").get<std::string>();
    c.encoder.seed = e.at("seed").get<std::uint64_t>();
    c.encoder.endpoint = e.at("endpoint").get<std::string>();
    c.encoder.model = e.at("model").get<std::string>();
    c.encoder.reduce_dim = e.at("reduce_dim").get<std::size_t>();
    c.encoder.standardize = e.at("standardize").get<bool>();

    const auto& k = j.at("cluster");
    c.cluster.item_leaf = k.at("item_leaf").get<std::size_t>();
    c.cluster.user_leaf = k.at("user_leaf").get<std::size_t>();
    c.cluster.arity = k.at("arity").get<std::size_t>();
    c.cluster.representation_items = k.at("representation_items").get<std::size_t>();
    c.cluster.pretrain_epochs = k.at("pretrain_epochs").get<std::size_t>();

    const auto& h = j.at("hein");
    c.hein.output_dim = h.at("q").get<std::size_t>();
    c.hein.hidden = h.at("hidden").get<std::vector<std::size_t>>();
    c.hein.n_shared = h.at("n_shared").get<std::size_t>();
    c.hein.n_user = h.at("n_user").get<std::size_t>();
    c.hein.n_item = h.at("n_item").get<std::size_t>();

    const auto& m = j.at("model");
    c.model.kind = backbone::backbone_kind_from_string(m.at("backbone").get<std::string>());
    c.model.embedding_dim = m.at("embedding_dim").get<std::size_t>();
    c.model.attention_hidden = m.at("attention_hidden").get<std::size_t>();
    c.model.mlp_hidden = m.at("mlp").get<std::vector<std::size_t>>();

    const auto& t = j.at("train");
    c.train.batch_size = t.at("batch_size").get<std::size_t>();
    c.train.epochs = t.at("epochs").get<std::size_t>();
    c.train.patience = t.at("patience").get<std::size_t>();
    c.train.lr_grid = t.at("lr_grid").get<std::vector<double>>();

    const auto& b = j.at("bench");
    c.bench.batches = b.at("batches").get<std::size_t>();
    c.bench.warmup = b.at("warmup").get<std::size_t>();
    c.bench.batch_size = b.at("batch_size").get<std::size_t>();
  } catch (const json::exception& ex) {
    throw Error(fmt::format("invalid config: {}", ex.what()));
  }

  if (c.ablation == Ablation::kNone) c.mode = Mode::kBase;
  if (c.mode == Mode::kBase) c.ablation = Ablation::kNone;
  if (c.train.batch_size == 0) throw Error("train.batch_size must be positive");
  if (c.train.lr_grid.empty()) throw Error("train.lr_grid must not be empty");
  if (c.data.train_fraction <= 0.0 || c.data.train_fraction >= 1.0)
    throw Error("data.train_fraction must be in (0, 1)");
  if (c.llm.provider != "mock" && c.llm.provider != "remote")
    throw Error(fmt::format("unknown llm.provider '{}'", c.llm.provider));
  if (c.encoder.provider != "mock" && c.encoder.provider != "remote")
    throw Error(fmt::format("unknown encoder.provider '{}'", c.encoder.provider));
  if (c.encoder.aggregation != "mean" && c.encoder.aggregation != "first_token")
    throw Error(fmt::format("unknown encoder.aggregation '{}'", c.encoder.aggregation));
  if (c.llm.factor_source != "preset" && c.llm.factor_source != "llm")
    throw Error(fmt::format("unknown llm.factor_source '{}'", c.llm.factor_source));
  return c;
}

json merge_config(const json& defaults, const json& file) {
  if (!file.is_object()) throw Error("config file must hold a JSON object");
  json out = defaults;
  for (const auto& [key, value] : file.items()) {
    if (!out.contains(key)) throw Error(fmt::format("unknown config key '{}'", key));
    if (out[key].is_object()) {
      if (!value.is_object()) throw Error(fmt::format("config key '{}' must be an object", key));
      for (const auto& [sub, v] : value.items()) {
        if (!out[key].contains(sub)) throw Error(fmt::format("unknown config key '{}.{}'", key, sub));
        out[key][sub] = v;
      }
    } else {
      out[key] = value;
    }
  }
  return out;
}

void apply_override(json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw Error(fmt::format("override '{}' is not key=value", assignment));
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json* node = &tree;
  for (const auto& part : split(key, '.')) {
    if (!node->is_object() || !node->contains(part))
      throw Error(fmt::format("override key '{}' does not name a config entry", key));
    node = &(*node)[part];
  }
  if (node->is_object()) throw Error(fmt::format("override key '{}' names a section, not a value", key));
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded() || (node->is_string() && !value.is_string())) value = raw;
  *node = std::move(value);
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json tree = default_config_json();
  if (!path.empty()) {
    json file = json::parse(read_file(path), nullptr, false);
    if (file.is_discarded()) throw Error(fmt::format("config '{}' is not valid JSON", path));
    tree = merge_config(tree, file);
  }
  for (const auto& o : overrides) apply_override(tree, o);
  return from_json(tree);
}

std::string json_hash(const json& value) { return hex64(fnv1a64(value.dump())); }

}  // namespace reki::pipeline
