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

#include "reki/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "reki/common.hpp"
#include "reki/knowledge.hpp"
#include "reki/knowledge_cache.hpp"
#include "reki/synth.hpp"
#include "reki/tensor.hpp"

namespace reki::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kFactorsFile = "factors.json";
constexpr const char* kClustersFile = "clusters.jsonl";
constexpr const char* kUserAssignments = "user_assignments.csv";
constexpr const char* kItemAssignments = "item_assignments.csv";
constexpr const char* kKnowledgeFile = "knowledge.jsonl";
constexpr const char* kCallsFile = "calls.json";
constexpr const char* kStoreFile = "representations.vec";
constexpr const char* kEncodeFile = "encode.json";
constexpr const char* kCheckpointFile = "checkpoint.par";
constexpr const char* kReportFile = "report.json";
constexpr const char* kMetricsFile = "metrics.jsonl";
constexpr const char* kTimingFile = "timing.json";
constexpr const char* kAugmentedFile = "augmented.vec";
constexpr const char* kManifestFile = "manifest.json";

std::string join_path(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(fmt::format("cannot create directory '{}': {}", dir, ec.message()));
}

std::string checkpoint_digest(const std::string& path) {
  const auto bytes = read_file(path);
  return hex64(crc64(bytes.data(), bytes.size()));
}

std::string env_key(const std::string& var) {
  const char* value = std::getenv(var.c_str());
  if (value == nullptr || *value == '\0') throw Error(fmt::format("environment variable {} is not set", var));
  return value;
}

knowledge::Aggregation aggregation_from_string(const std::string& name) {
  if (name == "mean") return knowledge::Aggregation::kMean;
  if (name == "first_token") return knowledge::Aggregation::kFirstToken;
  throw Error(fmt::format("unknown aggregation '{}' (expected mean or first_token)", name));
}

double percentile_nearest_rank(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(values.size())));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

json timing_summary(const std::vector<double>& seconds) {
  if (seconds.empty()) return {{"batches", 0}};
  const double mean = std::accumulate(seconds.begin(), seconds.end(), 0.0) / static_cast<double>(seconds.size());
  return {{"batches", seconds.size()},
          {"mean_seconds", mean},
          {"p95_seconds", percentile_nearest_rank(seconds, 0.95)},
          {"per_batch_seconds", seconds}};
}

std::vector<prompting::HistoryEntry> window_history(const Dataset& ds, int user, std::size_t window) {
  std::vector<prompting::HistoryEntry> out;
  const auto& timeline = ds.by_user[static_cast<std::size_t>(user)];
  for (std::size_t k = 0; k < timeline.size() && k < window; ++k)
    out.push_back({ds.tables.item(timeline[k].item).title, timeline[k].label == 1});
  return out;
}

std::string profile_text(const corpus::Tables& t, int user) {
  std::vector<std::string> parts;
  const auto& values = t.user_profile_text.at(static_cast<std::size_t>(user));
  for (std::size_t c = 0; c < t.profile_columns.size() && c < values.size(); ++c)
    if (!values[c].empty()) parts.push_back(fmt::format("{} {}", t.profile_columns[c], values[c]));
  if (parts.empty()) return "unknown";
  std::string out = parts[0];
  for (std::size_t k = 1; k < parts.size(); ++k) out += ", " + parts[k];
  return out;
}

}  // namespace

std::string item_description(const corpus::ItemInfo& item) {
  std::string out = item.title;
  if (!item.category.empty()) out += ", " + item.category;
  for (const auto& [k, v] : item.attrs) out += fmt::format(", {} {}", k, v);
  return out;
}

std::size_t account_calls(Mode mode, std::size_t users, std::size_t items, std::size_t user_clusters,
                          std::size_t item_clusters, std::size_t cache_hits) {
  std::size_t total = 0;
  switch (mode) {
    case Mode::kBase: return 0;
    case Mode::kRekiI: total = users + items; break;
    case Mode::kRekiC: total = user_clusters + item_clusters; break;
  }
  if (cache_hits > total) throw Error("cache hits exceed the number of requests");
  return total - cache_hits;
}

json BenchResult::to_json() const {
  return {{"path", pipeline::to_string(path)},
          {"batches", batches},
          {"batch_size", batch_size},
          {"mean_seconds", mean_seconds},
          {"p95_seconds", p95_seconds}};
}

BenchResult summarize_timings(ServingPath path, std::vector<double> seconds, std::size_t warmup,
                              std::size_t batch_size) {
  if (seconds.size() <= warmup) throw Error("bench needs at least one measured batch after warmup");
  seconds.erase(seconds.begin(), seconds.begin() + static_cast<std::ptrdiff_t>(warmup));
  BenchResult r;
  r.path = path;
  r.batches = seconds.size();
  r.batch_size = batch_size;
  r.mean_seconds = std::accumulate(seconds.begin(), seconds.end(), 0.0) / static_cast<double>(seconds.size());
  r.p95_seconds = percentile_nearest_rank(std::move(seconds), 0.95);
  return r;
}

Pipeline::Pipeline(RunConfig config, std::ostream* log) : config_(std::move(config)), log_(log) {}

void Pipeline::log(const std::string& message) const {
  if (log_ != nullptr) *log_ << "[reki] " << message << "\n" << std::flush;
}

std::string Pipeline::stage_hash(const std::string& stage) const {
  const json j = to_json(config_);
  json in;
  if (stage == "synth") {
    in = j.at("synth");
  } else if (stage == "data") {
    in["data"] = j.at("data");
    if (config_.data.interactions.empty()) in["synth"] = stage_hash("synth");
  } else if (stage == "factors") {
    const auto& l = j.at("llm");
    in = {{"scenario", config_.data.scenario}, {"source", l.at("factor_source")}, {"add", l.at("factors_add")},
          {"drop", l.at("factors_drop")}};
    if (config_.llm.factor_source == "llm")
      in["llm"] = {{"provider", l.at("provider")}, {"model", l.at("model")}, {"seed", l.at("seed")}};
  } else if (stage == "cluster") {
    in = {{"data", stage_hash("data")}, {"cluster", j.at("cluster")}, {"model", j.at("model")},
          {"seed", config_.seed},      {"batch_size", config_.train.batch_size},
          {"lr", config_.train.lr_grid.at(0)}};
  } else if (stage == "knowledge") {
    const auto& l = j.at("llm");
    in = {{"data", stage_hash("data")}, {"factors", stage_hash("factors")}, {"mode", j.at("mode")},
          {"llm", {{"provider", l.at("provider")}, {"model", l.at("model")}, {"seed", l.at("seed")}}}};
    if (config_.mode == Mode::kRekiC) in["cluster"] = stage_hash("cluster");
  } else if (stage == "encode") {
    in = {{"knowledge", stage_hash("knowledge")}, {"encoder", j.at("encoder")}};
  } else if (stage == "train") {
    in = {{"upstream", config_.mode == Mode::kBase ? stage_hash("data") : stage_hash("encode")},
          {"mode", j.at("mode")},
          {"ablation", j.at("ablation")},
          {"model", j.at("model")},
          {"train", j.at("train")},
          {"seed", config_.seed}};
    if (config_.mode != Mode::kBase) {
      in["adaptor"] = j.at("adaptor");
      in["hein"] = j.at("hein");
    }
  } else if (stage == "precompute" || stage == "bench") {
    in = {{"train", stage_hash("train")}};
    if (stage == "bench") in["bench"] = j.at("bench");
  } else {
    throw Error(fmt::format("unknown stage '{}'", stage));
  }
  return json_hash(in);
}

std::string Pipeline::stage_dir(const std::string& stage) const {
  return join_path(config_.work_dir, stage + "-" + stage_hash(stage));
}

std::vector<std::pair<std::string, std::string>> Pipeline::plan() const {
  std::vector<std::pair<std::string, std::string>> out;
  if (config_.data.interactions.empty()) out.emplace_back("synth", stage_dir("synth"));
  if (config_.mode != Mode::kBase) {
    out.emplace_back("factors", join_path(stage_dir("factors"), kFactorsFile));
    if (config_.mode == Mode::kRekiC) out.emplace_back("cluster", join_path(stage_dir("cluster"), kClustersFile));
    out.emplace_back("knowledge", join_path(stage_dir("knowledge"), kKnowledgeFile));
    out.emplace_back("encode", join_path(stage_dir("encode"), kStoreFile));
  }
  out.emplace_back("train", join_path(stage_dir("train"), kReportFile));
  if (config_.mode != Mode::kBase) out.emplace_back("precompute", join_path(stage_dir("precompute"), kManifestFile));
  return out;
}

std::string Pipeline::synth() {
  const std::string dir = stage_dir("synth");
  if (file_exists(join_path(dir, "synth.json"))) return dir;
  ensure_dir(dir);
  log(fmt::format("synth: {} users, {} items, {} interactions -> {}", config_.synth.users, config_.synth.items,
                  config_.synth.interactions, dir));
  const auto result = synth::generate(config_.synth, config_.synth_seed, dir);
  const json summary{{"interactions", result.interactions},
                     {"positives", result.positives},
                     {"expected_positive_rate", result.expected_positive_rate},
                     {"seed", config_.synth_seed}};
  write_file(join_path(dir, "synth.json"), summary.dump(2) + "\n");
  return dir;
}

const Dataset& Pipeline::dataset() {
  if (dataset_) return *dataset_;
  Dataset ds;
  corpus::TablePaths paths;
  corpus::TableSchema schema;
  schema.user_columns = config_.data.user_columns;
  if (config_.data.interactions.empty()) {
    ds.data_dir = synth();
    paths = {join_path(ds.data_dir, "interactions.csv"), join_path(ds.data_dir, "items.csv"),
             join_path(ds.data_dir, "users.csv")};
  } else {
    ds.data_dir = fs::path(config_.data.interactions).parent_path().string();
    paths = {config_.data.interactions, config_.data.items, config_.data.users};
    schema.has_users_table = !config_.data.users.empty();
  }
  ds.tables = corpus::load_tables(paths, schema);
  ds.records = ds.tables.interactions;
  corpus::binarize(ds.records, config_.data.rating_threshold);
  corpus::filter_min_interactions(ds.records, config_.data.min_interactions);
  corpus::sort_chronologically(ds.records);
  if (ds.records.empty()) throw Error("no interactions survive preprocessing");
  ds.by_user = corpus::group_by_user(ds.records, ds.tables.users.size());
  std::set<int> items;
  for (const auto& r : ds.records) items.insert(r.item);
  for (std::size_t u = 0; u < ds.by_user.size(); ++u)
    if (!ds.by_user[u].empty()) ds.users.push_back(static_cast<int>(u));
  ds.items.assign(items.begin(), items.end());
  ds.schema = corpus::make_schema(ds.tables, config_.data.max_history);

  auto samples = corpus::build_samples(ds.records, ds.tables, config_.data.max_history);
  const std::size_t before = samples.size();
  std::erase_if(samples, [&](const corpus::Sample& s) { return s.position < config_.data.knowledge_window; });
  ds.window_dropped = before - samples.size();
  if (samples.empty()) throw Error("no samples remain after the knowledge window");
  ds.split = corpus::split_by_user(samples, config_.data.train_fraction, config_.seed);
  log(fmt::format("data: {} users, {} items, {} train / {} test samples ({} inside the knowledge window)",
                  ds.users.size(), ds.items.size(), ds.split.train.size(), ds.split.test.size(),
                  ds.window_dropped));
  dataset_ = std::move(ds);
  return *dataset_;
}

std::shared_ptr<const WorldKnowledge> Pipeline::world() {
  const Dataset& ds = dataset();
  auto w = std::make_shared<WorldKnowledge>();
  for (int id : ds.items) {
    const auto& info = ds.tables.item(id);
    std::vector<std::string> facts;
    if (!info.category.empty()) facts.push_back(info.category);
    for (const auto& [k, v] : info.attrs) facts.push_back(v);
    (*w)[to_lower(info.title)] = std::move(facts);
  }
  return w;
}

LlmClient& Pipeline::llm() {
  if (llm_) return *llm_;
  if (config_.llm.provider == "mock") {
    llm_ = std::make_shared<MockLlm>(config_.llm.seed, world());
  } else if (config_.llm.provider == "remote") {
    RemoteLlmConfig rc;
    rc.endpoint = config_.llm.endpoint;
    rc.model = config_.llm.model;
    rc.api_key = env_key(config_.llm.api_key_env);
    llm_ = std::make_shared<RemoteLlm>(std::move(rc));
  } else {
    throw Error(fmt::format("unknown llm provider '{}' (expected mock or remote)", config_.llm.provider));
  }
  return *llm_;
}

prompting::FactorSet Pipeline::factors() {
  const std::string dir = stage_dir("factors");
  const std::string path = join_path(dir, kFactorsFile);
  if (file_exists(path)) return prompting::factor_set_from_json(read_file(path));
  prompting::ExpertOverrides overrides;
  overrides.add = config_.llm.factors_add;
  overrides.drop = config_.llm.factors_drop;
  LlmClient* client = nullptr;
  if (config_.llm.factor_source == "preset") {
    auto preset = prompting::preset_factors(config_.data.scenario);
    if (!preset)
      throw Error(fmt::format("no preset factors for scenario '{}'; set llm.factor_source=llm",
                              config_.data.scenario));
    overrides.replace = *preset;
  } else if (config_.llm.factor_source == "llm") {
    client = &llm();
  } else {
    throw Error(fmt::format("unknown factor source '{}' (expected preset or llm)", config_.llm.factor_source));
  }
  const auto set = prompting::elicit_factors(config_.data.scenario, client, overrides);
  ensure_dir(dir);
  write_file(path, prompting::factor_set_to_json(set));
  log(fmt::format("factors: {} for '{}'", set.factors.size(), set.scenario));
  return set;
}

ClusterStageResult Pipeline::cluster() {
  ClusterStageResult result;
  result.dir = stage_dir("cluster");
  const std::string done = join_path(result.dir, kClustersFile);
  if (file_exists(done)) {
    for (const auto& c : clustering::read_cluster_file(done))
      (c.kind == clustering::ClusterKind::kUser ? result.user_clusters : result.item_clusters)++;
    return result;
  }
  const Dataset& ds = dataset();

  // Cluster coordinates are the embeddings of a briefly trained base model.
  ModelSpec spec;
  spec.backbone = config_.model;
  spec.seed = derive_seed(config_.seed, "pretrain");
  JointModel base(ds.schema, spec);
  TrainOptions opts;
  opts.batch_size = config_.train.batch_size;
  opts.epochs = config_.cluster.pretrain_epochs;
  opts.patience = opts.epochs + 1;
  opts.lr = config_.train.lr_grid.at(0);
  opts.seed = config_.seed;
  if (opts.epochs > 0) train_joint(base, ds.split.train, ds.split.test, opts);
  const auto& item_emb = base.params().at("backbone.emb.item").value;
  const auto& cat_emb = base.params().at("backbone.emb.category").value;

  std::vector<std::vector<double>> item_points;
  std::vector<std::size_t> item_row(static_cast<std::size_t>(ds.tables.items.size()), 0);
  for (std::size_t k = 0; k < ds.items.size(); ++k) {
    const int id = ds.items[k];
    item_row[static_cast<std::size_t>(id)] = k;
    std::vector<double> p(item_emb.row(static_cast<std::size_t>(id)).begin(),
                          item_emb.row(static_cast<std::size_t>(id)).end());
    const auto c = cat_emb.row(static_cast<std::size_t>(ds.tables.item(id).category_id));
    p.insert(p.end(), c.begin(), c.end());
    item_points.push_back(std::move(p));
  }

  // Profile part: every user field except the id, or the id alone when the
  // corpus has no profile columns.
  std::vector<std::string> fields;
  for (std::size_t f = 1; f < ds.schema.user_fields.size(); ++f) fields.push_back(ds.schema.user_fields[f]);
  const bool id_only = fields.empty();
  if (id_only) fields.push_back(ds.schema.user_fields.at(0));
  std::vector<std::vector<std::size_t>> histories;
  std::vector<std::vector<double>> profiles;
  std::vector<std::vector<std::string>> liked_keys;
  std::vector<std::vector<std::string>> window_keys;
  for (int u : ds.users) {
    const auto& timeline = ds.by_user[static_cast<std::size_t>(u)];
    std::vector<std::size_t> liked;
    std::vector<std::string> lk, wk;
    for (std::size_t k = 0; k < timeline.size() && k < config_.data.knowledge_window; ++k) {
      wk.push_back(ds.tables.item_key(timeline[k].item));
      if (timeline[k].label == 1) {
        liked.push_back(item_row[static_cast<std::size_t>(timeline[k].item)]);
        lk.push_back(wk.back());
      }
    }
    std::vector<double> prof;
    const auto& ids = ds.tables.user_profiles.at(static_cast<std::size_t>(u));
    for (std::size_t f = 0; f < fields.size(); ++f) {
      const auto& table = base.params().at("backbone.emb.user." + fields[f]).value;
      const std::size_t row = id_only ? static_cast<std::size_t>(u) : static_cast<std::size_t>(ids.at(f));
      prof.insert(prof.end(), table.row(row).begin(), table.row(row).end());
    }
    histories.push_back(std::move(liked));
    profiles.push_back(std::move(prof));
    liked_keys.push_back(std::move(lk));
    window_keys.push_back(std::move(wk));
  }
  const auto user_points = clustering::embed_users(histories, item_points, profiles);

  auto build = [&](const std::vector<std::vector<double>>& points, const std::vector<int>& ids, bool users,
                   std::size_t leaf) {
    clustering::TreeOptions to;
    to.leaf_capacity = leaf;
    to.arity = config_.cluster.arity;
    to.seed = derive_seed(config_.seed, users ? "user-tree" : "item-tree");
    to.gamma = clustering::estimate_gamma(points, to.seed);
    clustering::ClusterTree tree(points.front().size(), to);
    for (std::size_t k = 0; k < points.size(); ++k)
      tree.insert(points[k], users ? ds.tables.user_key(ids[k]) : ds.tables.item_key(ids[k]));
    return clustering::extract_clusters(tree, leaf,
                                        users ? clustering::ClusterKind::kUser : clustering::ClusterKind::kItem);
  };
  auto item_clusters = build(item_points, ds.items, false, config_.cluster.item_leaf);
  auto user_clusters = build(user_points, ds.users, true, config_.cluster.user_leaf);

  std::map<std::string, std::size_t> user_index;
  for (std::size_t k = 0; k < ds.users.size(); ++k) user_index[ds.tables.user_key(ds.users[k])] = k;
  for (auto& c : user_clusters) {
    std::vector<std::vector<std::string>> liked, windows;
    for (const auto& m : c.member_ids) {
      liked.push_back(liked_keys[user_index.at(m)]);
      windows.push_back(window_keys[user_index.at(m)]);
    }
    c.representation_items = clustering::represent_user_cluster(liked, config_.cluster.representation_items);
    // Thin liked evidence falls back to everything the members saw.
    if (c.representation_items.size() < 2)
      c.representation_items = clustering::represent_user_cluster(windows, config_.cluster.representation_items);
  }

  ensure_dir(result.dir);
  clustering::write_assignments(join_path(result.dir, kItemAssignments), item_clusters);
  clustering::write_assignments(join_path(result.dir, kUserAssignments), user_clusters);
  std::vector<clustering::Cluster> all = item_clusters;
  all.insert(all.end(), user_clusters.begin(), user_clusters.end());
  clustering::write_cluster_file(done, all);
  result.user_clusters = user_clusters.size();
  result.item_clusters = item_clusters.size();
  log(fmt::format("cluster: {} user clusters, {} item clusters", result.user_clusters, result.item_clusters));
  return result;
}

KnowledgeStageResult Pipeline::knowledge() {
  if (config_.mode == Mode::kBase) throw Error("base mode generates no knowledge");
  KnowledgeStageResult result;
  result.dir = stage_dir("knowledge");
  const std::string calls_path = join_path(result.dir, kCallsFile);
  if (file_exists(calls_path)) {
    const auto j = json::parse(read_file(calls_path));
    result.requests = j.at("requests").get<std::size_t>();
    result.llm_calls = j.at("llm_calls").get<std::size_t>();
    result.cache_hits = j.at("cache_hits").get<std::size_t>();
    result.failures = j.at("failures").get<std::size_t>();
    return result;
  }
  const Dataset& ds = dataset();
  const auto factor_set = factors();
  prompting::PromptLimits limits;
  limits.user_history = config_.data.knowledge_window;
  limits.set_size = std::max(config_.cluster.item_leaf, config_.cluster.representation_items);

  std::vector<KnowledgeRequest> requests;
  auto item_prompt = [&](KeyKind kind, const std::string& key, int item) {
    requests.push_back({kind, key, prompting::build_item_prompt(key, item_description(ds.tables.item(item)), factor_set)});
  };
  auto user_prompt = [&](KeyKind kind, const std::string& key, int user) {
    requests.push_back({kind, key,
                        prompting::build_user_prompt(key, profile_text(ds.tables, user),
                                                     window_history(ds, user, config_.data.knowledge_window),
                                                     factor_set, limits)});
  };
  if (config_.mode == Mode::kRekiI) {
    for (int u : ds.users) user_prompt(KeyKind::kUser, ds.tables.user_key(u), u);
    for (int i : ds.items) item_prompt(KeyKind::kItem, ds.tables.item_key(i), i);
  } else {
    const std::string clusters_path = join_path(stage_dir("cluster"), kClustersFile);
    if (!file_exists(clusters_path))
      throw Error(fmt::format("cluster artifacts missing: run `reki cluster` first (expected {})", clusters_path));
    auto title_of = [&](const std::string& item_key) { return ds.tables.item(ds.tables.items.find(item_key)).title; };
    for (const auto& c : clustering::read_cluster_file(clusters_path)) {
      if (c.kind == clustering::ClusterKind::kItem) {
        if (c.member_ids.size() == 1) {
          item_prompt(KeyKind::kItemCluster, c.cluster_id, ds.tables.items.find(c.member_ids[0]));
          continue;
        }
        std::vector<std::string> titles;
        for (const auto& m : c.member_ids) titles.push_back(title_of(m));
        requests.push_back({KeyKind::kItemCluster, c.cluster_id,
                            prompting::build_set_prompt(c.cluster_id, titles, factor_set, limits)});
      } else {
        // A set prompt needs two titles; thinner clusters use a member's own prompt.
        if (c.member_ids.size() == 1 || c.representation_items.size() < 2) {
          user_prompt(KeyKind::kUserCluster, c.cluster_id, ds.tables.users.find(c.member_ids[0]));
          continue;
        }
        std::vector<std::string> titles;
        for (const auto& m : c.representation_items) titles.push_back(title_of(m));
        requests.push_back({KeyKind::kUserCluster, c.cluster_id,
                            prompting::build_set_prompt(c.cluster_id, titles, factor_set, limits)});
      }
    }
  }

  ensure_dir(config_.work_dir);
  KnowledgeCache cache(join_path(config_.work_dir, "knowledge_cache.jsonl"));
  GenerationOptions go;
  go.parallelism = config_.llm.parallelism;
  go.max_attempts = config_.llm.max_attempts;
  log(fmt::format("knowledge: {} requests to {}", requests.size(), llm().model_id()));
  const auto gen = generate_knowledge(requests, llm(), cache, go);

  ensure_dir(result.dir);
  std::string lines;
  for (const auto& t : gen.texts) lines += to_json_line(t) + "\n";
  write_file(join_path(result.dir, kKnowledgeFile), lines);
  json failures = json::array();
  for (const auto& f : gen.failures)
    failures.push_back({{"kind", std::string(to_string(f.kind))}, {"key", f.key}, {"reason", f.reason}});
  result.requests = requests.size();
  result.llm_calls = gen.call_count;
  result.cache_hits = gen.hits;
  result.failures = gen.failures.size();
  const json calls{{"requests", result.requests},
                   {"llm_calls", result.llm_calls},
                   {"cache_hits", result.cache_hits},
                   {"attempts", gen.attempts},
                   {"failures", result.failures},
                   {"failed", failures}};
  write_file(calls_path, calls.dump(2) + "\n");
  if (result.failures > 0) log(fmt::format("knowledge: {} requests failed; they fall back to defaults", result.failures));
  return result;
}

std::string Pipeline::knowledge_store_path() const { return join_path(stage_dir("encode"), kStoreFile); }

std::string Pipeline::encode() {
  if (config_.mode == Mode::kBase) throw Error("base mode encodes no knowledge");
  const std::string dir = stage_dir("encode");
  const std::string out = knowledge_store_path();
  if (file_exists(join_path(dir, kEncodeFile))) return out;
  const std::string texts_path = join_path(stage_dir("knowledge"), kKnowledgeFile);
  if (!file_exists(join_path(stage_dir("knowledge"), kCallsFile)))
    throw Error(fmt::format("knowledge texts missing: run `reki knowledge` first (expected {})", texts_path));
  const Dataset& ds = dataset();

  std::unique_ptr<knowledge::TextEncoder> encoder;
  const std::size_t dim = config_.encoder.dim > 0 ? config_.encoder.dim : knowledge::profile_dim(config_.encoder.profile);
  if (config_.encoder.provider == "mock") {
    encoder = std::make_unique<knowledge::MockEncoder>(dim, config_.encoder.seed);
  } else if (config_.encoder.provider == "remote") {
    knowledge::RemoteEncoderConfig rc;
    rc.endpoint = config_.encoder.endpoint;
    rc.model = config_.encoder.model;
    rc.api_key = env_key(config_.llm.api_key_env);
    rc.dim = dim;
    encoder = std::make_unique<knowledge::RemoteEncoder>(std::move(rc));
  } else {
    throw Error(fmt::format("unknown encoder provider '{}' (expected mock or remote)", config_.encoder.provider));
  }
  const auto agg = aggregation_from_string(config_.encoder.aggregation);

  ensure_dir(dir);
  const bool reduce = config_.encoder.reduce_dim > 0;
  const bool standardize = config_.encoder.standardize;
  const std::string raw_path = reduce || standardize ? join_path(dir, "representations.raw.vec") : out;
  const std::string pca_path = standardize ? join_path(dir, "representations.pca.vec") : out;
  std::error_code ec;
  for (const auto& p : {raw_path, pca_path, out}) fs::remove(p, ec);
  auto store = knowledge::VectorStore::create(raw_path, static_cast<std::uint32_t>(dim));
  auto put = [&](KeyKind kind, const std::string& key, const std::string& text) {
    const auto rep = knowledge::encode_knowledge(kind, key, text, *encoder, agg);
    store.put(kind, key, std::span<const double>(rep.vector));
  };
  std::size_t texts = 0;
  {
    std::ifstream in(texts_path);
    std::string line;
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      const auto k = knowledge_from_json_line(line);
      put(k.key_kind, k.key, k.text);
      ++texts;
    }
  }
  if (config_.mode == Mode::kRekiC) {
    // Raw-text extras, encoded without the LLM.
    for (int u : ds.users) {
      std::string text;
      for (const auto& h : window_history(ds, u, config_.data.knowledge_window))
        text += (text.empty() ? "" : "; ") + h.title;
      put(KeyKind::kUserHistory, ds.tables.user_key(u), text);
    }
    for (int i : ds.items) put(KeyKind::kItemDesc, ds.tables.item_key(i), item_description(ds.tables.item(i)));
  }
  store.compute_defaults();
  std::optional<knowledge::VectorStore> reduced;
  json pca = nullptr;
  if (reduce) {
    knowledge::PcaResult fitted;
    reduced = knowledge::reduce_dim(store, config_.encoder.reduce_dim, pca_path, &fitted);
    pca = {{"retained_variance", fitted.retained_variance}, {"rank", fitted.rank}};
  }
  std::optional<knowledge::VectorStore> scaled;
  if (standardize) scaled = knowledge::standardize(reduced ? *reduced : store, out);
  const knowledge::VectorStore& last = scaled ? *scaled : reduced ? *reduced : store;
  const std::uint64_t crc = last.body_crc();
  const std::size_t out_dim = last.dim();
  const json summary{{"encoder", encoder->id()}, {"dim", out_dim},   {"texts", texts},
                     {"entries", store.size()},  {"crc", hex64(crc)}, {"pca", pca},
                     {"standardized", standardize}};
  write_file(join_path(dir, kEncodeFile), summary.dump(2) + "\n");
  log(fmt::format("encode: {} vectors of dim {} -> {}", store.size(), out_dim, out));
  return out;
}

ModelSpec Pipeline::model_spec() const {
  ModelSpec spec;
  spec.backbone = config_.model;
  spec.seed = config_.seed;
  if (config_.mode == Mode::kBase) return spec;
  spec.slots.user = config_.uses_user_knowledge();
  spec.slots.item = config_.uses_item_knowledge();
  if (config_.mode == Mode::kRekiC) {
    spec.slots.user_history = spec.slots.user;
    spec.slots.item_desc = spec.slots.item;
  }
  hein::HeinConfig h = config_.hein;
  h.input_dim = config_.representation_dim();
  spec.hein = hein::adaptor_config(config_.adaptor, h);
  return spec;
}

EntityKeys Pipeline::entity_keys() {
  const Dataset& ds = dataset();
  const auto users = static_cast<std::size_t>(ds.tables.users.size());
  const auto items = static_cast<std::size_t>(ds.tables.items.size());
  auto by_id = [](KeyKind kind, std::size_t n, auto&& key_of) {
    SlotKeys s;
    s.kind = kind;
    s.keys.resize(n);
    for (std::size_t id = 1; id < n; ++id) s.keys[id] = key_of(static_cast<int>(id));
    return s;
  };
  auto user_key = [&](int id) { return ds.tables.user_key(id); };
  auto item_key = [&](int id) { return ds.tables.item_key(id); };
  const ModelSpec spec = model_spec();
  EntityKeys keys;
  if (config_.mode == Mode::kRekiI) {
    if (spec.slots.user) keys.user = by_id(KeyKind::kUser, users, user_key);
    if (spec.slots.item) keys.item = by_id(KeyKind::kItem, items, item_key);
  } else if (config_.mode == Mode::kRekiC) {
    const std::string dir = stage_dir("cluster");
    const auto ua = clustering::read_assignments(join_path(dir, kUserAssignments));
    const auto ia = clustering::read_assignments(join_path(dir, kItemAssignments));
    auto lookup = [](const std::unordered_map<std::string, std::string>& m, const std::string& k) {
      const auto it = m.find(k);
      return it == m.end() ? std::string() : it->second;
    };
    if (spec.slots.user) {
      keys.user = by_id(KeyKind::kUserCluster, users, [&](int id) { return lookup(ua, user_key(id)); });
      keys.user_history = by_id(KeyKind::kUserHistory, users, user_key);
    }
    if (spec.slots.item) {
      keys.item = by_id(KeyKind::kItemCluster, items, [&](int id) { return lookup(ia, item_key(id)); });
      keys.item_desc = by_id(KeyKind::kItemDesc, items, item_key);
    }
  }
  return keys;
}

TrainStageResult Pipeline::train() {
  TrainStageResult result;
  result.dir = stage_dir("train");
  result.checkpoint = join_path(result.dir, kCheckpointFile);
  result.report = join_path(result.dir, kReportFile);
  if (file_exists(result.report)) {
    result.report_json = json::parse(read_file(result.report));
    return result;
  }
  std::optional<knowledge::VectorStore> store;
  std::size_t llm_calls = 0;
  if (config_.mode != Mode::kBase) {
    const std::string path = knowledge_store_path();
    if (!file_exists(join_path(stage_dir("encode"), kEncodeFile)) || !file_exists(path))
      throw Error(fmt::format("representation store missing: run `reki encode` first (expected {})", path));
    store = knowledge::VectorStore::open(path);
    if (store->dim() != config_.representation_dim())
      throw Error(fmt::format("representation store has {} dims, config expects {}", store->dim(),
                              config_.representation_dim()));
    llm_calls = json::parse(read_file(join_path(stage_dir("knowledge"), kCallsFile))).at("llm_calls").get<std::size_t>();
  }
  const Dataset& ds = dataset();
  const ModelSpec spec = model_spec();
  EntityTables tables;
  if (store) tables = resolve_tables(*store, entity_keys());

  json grid = json::array();
  json timing = json::array();
  std::optional<std::size_t> best;
  std::vector<TrainOutcome> outcomes;
  std::vector<std::unique_ptr<JointModel>> models;
  for (std::size_t g = 0; g < config_.train.lr_grid.size(); ++g) {
    const double lr = config_.train.lr_grid[g];
    auto model = std::make_unique<JointModel>(ds.schema, spec);
    if (store) model->set_knowledge(tables);
    TrainOptions opts;
    opts.batch_size = config_.train.batch_size;
    opts.epochs = config_.train.epochs;
    opts.patience = config_.train.patience;
    opts.lr = lr;
    opts.seed = config_.seed;
    auto outcome = train_joint(*model, ds.split.train, ds.split.test, opts);
    log(fmt::format("train: lr {} best AUC {:.5f} at epoch {}", lr, outcome.best_auc, outcome.best_epoch));
    json epochs = json::array();
    for (const auto& e : outcome.epochs)
      epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"auc", e.auc}, {"logloss", e.logloss}});
    grid.push_back({{"lr", lr},
                    {"best_epoch", outcome.best_epoch},
                    {"best_auc", outcome.best_auc},
                    {"best_logloss", outcome.best_logloss},
                    {"batches", outcome.batches},
                    {"epochs", epochs}});
    json t = timing_summary(outcome.batch_seconds);
    t["lr"] = lr;
    timing.push_back(std::move(t));
    if (!best || outcome.best_auc > outcomes[*best].best_auc) best = g;
    outcomes.push_back(std::move(outcome));
    models.push_back(std::move(model));
  }
  if (!best) throw Error("train.lr_grid is empty");
  const TrainOutcome& chosen = outcomes[*best];

  ensure_dir(result.dir);
  tensor::save_checkpoint(result.checkpoint, models[*best]->params());
  write_file(join_path(result.dir, kMetricsFile), metrics_jsonl(chosen));
  write_file(join_path(result.dir, kTimingFile), json{{"train", timing}}.dump(2) + "\n");
  json r;
  r["mode"] = to_string(config_.mode);
  r["adaptor"] = config_.mode == Mode::kBase ? "none" : hein::to_string(config_.adaptor);
  r["ablation"] = to_string(config_.ablation);
  r["backbone"] = backbone::to_string(config_.model.kind);
  r["seed"] = config_.seed;
  r["config_hash"] = stage_hash("train");
  r["users"] = ds.users.size();
  r["items"] = ds.items.size();
  r["train_samples"] = ds.split.train.size();
  r["test_samples"] = ds.split.test.size();
  r["window_dropped"] = ds.window_dropped;
  r["llm_call_count"] = llm_calls;
  r["missing_keys"] = tables.missing;
  r["parameters"] = models[*best]->params().element_count();
  r["lr_grid"] = grid;
  r["selected_lr"] = config_.train.lr_grid[*best];
  r["best_epoch"] = chosen.best_epoch;
  r["final"] = {{"auc", chosen.best_auc}, {"logloss", chosen.best_logloss}};
  r["checkpoint"] = kCheckpointFile;
  r["checkpoint_crc"] = checkpoint_digest(result.checkpoint);
  r["timing"] = kTimingFile;
  write_file(result.report, r.dump(2) + "\n");
  result.report_json = std::move(r);
  return result;
}

std::unique_ptr<JointModel> Pipeline::load_model() {
  const std::string checkpoint = join_path(stage_dir("train"), kCheckpointFile);
  if (!file_exists(join_path(stage_dir("train"), kReportFile)))
    throw Error(fmt::format("checkpoint missing: run `reki train` first (expected {})", checkpoint));
  const Dataset& ds = dataset();
  auto model = std::make_unique<JointModel>(ds.schema, model_spec());
  tensor::load_checkpoint(checkpoint, model->params());
  if (model->augmented()) {
    const auto path = knowledge_store_path();
    if (!file_exists(path)) throw Error(fmt::format("representation store missing (expected {})", path));
    model->set_knowledge(resolve_tables(knowledge::VectorStore::open(path), entity_keys()));
  }
  return model;
}

PrecomputeResult Pipeline::precompute() {
  if (config_.mode == Mode::kBase) throw Error("base mode has no adaptor to precompute");
  PrecomputeResult result;
  result.dir = stage_dir("precompute");
  result.store = join_path(result.dir, kAugmentedFile);
  result.manifest = join_path(result.dir, kManifestFile);
  if (file_exists(result.manifest)) {
    result.entries = json::parse(read_file(result.manifest)).at("entries").get<std::size_t>();
    return result;
  }
  const auto model = load_model();
  const auto reps = knowledge::VectorStore::open(knowledge_store_path());
  ensure_dir(result.dir);
  std::error_code ec;
  fs::remove(result.store, ec);
  const auto out = precompute_augmented(*model, reps, result.store);
  result.entries = out.entries().size();
  const json manifest{{"checkpoint", join_path("train-" + stage_hash("train"), kCheckpointFile)},
                      {"checkpoint_crc", checkpoint_digest(join_path(stage_dir("train"), kCheckpointFile))},
                      {"representation_crc", hex64(reps.body_crc())},
                      {"store", kAugmentedFile},
                      {"store_crc", hex64(out.body_crc())},
                      {"dim", out.dim()},
                      {"entries", result.entries}};
  write_file(result.manifest, manifest.dump(2) + "\n");
  log(fmt::format("precompute: {} augmented vectors -> {}", result.entries, result.store));
  return result;
}

std::unique_ptr<JointModel> Pipeline::serving_model(ServingPath path) {
  if (path == ServingPath::kBase && config_.mode != Mode::kBase) {
    // Latency depends on shapes only, so an untrained base backbone suffices.
    ModelSpec spec;
    spec.backbone = config_.model;
    spec.seed = config_.seed;
    return std::make_unique<JointModel>(dataset().schema, spec);
  }
  if (path != ServingPath::kBase && config_.mode == Mode::kBase)
    throw Error(fmt::format("base mode cannot serve the {} path", to_string(path)));
  auto model = load_model();
  if (path == ServingPath::kDetached) {
    const std::string manifest_path = join_path(stage_dir("precompute"), kManifestFile);
    if (!file_exists(manifest_path))
      throw Error(fmt::format("augmented store missing: run `reki precompute` first (expected {})", manifest_path));
    const auto manifest = json::parse(read_file(manifest_path));
    if (manifest.at("checkpoint_crc").get<std::string>() !=
        checkpoint_digest(join_path(stage_dir("train"), kCheckpointFile)))
      throw Error("augmented store was computed from a different checkpoint");
    model->set_augmented(resolve_tables(
        knowledge::VectorStore::open(join_path(stage_dir("precompute"), kAugmentedFile)), entity_keys()));
  }
  return model;
}

json Pipeline::eval(std::optional<ServingPath> path) {
  if (!path) path = config_.mode == Mode::kBase ? ServingPath::kBase : ServingPath::kFullHein;
  if (*path == ServingPath::kBase && config_.mode != Mode::kBase)
    throw Error("eval on the base path needs a base-mode configuration");
  const auto model = serving_model(*path);
  const Dataset& ds = dataset();
  const auto ev = evaluate(*model, ds.split.test, *path, config_.train.batch_size);
  const json out{{"path", to_string(*path)}, {"auc", ev.auc}, {"logloss", ev.logloss}, {"samples", ds.split.test.size()}};
  write_file(join_path(stage_dir("train"), fmt::format("eval_{}.json", to_string(*path))), out.dump(2) + "\n");
  return out;
}

BenchResult Pipeline::bench(ServingPath path) {
  if (config_.bench.batches == 0) throw Error("bench needs at least one measured batch");
  const std::size_t total = config_.bench.warmup + config_.bench.batches;
  const auto model = serving_model(path);
  const Dataset& ds = dataset();
  const auto& pool = ds.split.test.empty() ? ds.split.train : ds.split.test;
  const std::size_t b = config_.bench.batch_size;
  std::vector<double> seconds;
  for (std::size_t k = 0; k < total; ++k) {
    std::vector<const corpus::Sample*> batch;
    for (std::size_t j = 0; j < b; ++j) batch.push_back(&pool[(k * b + j) % pool.size()]);
    const auto t0 = std::chrono::steady_clock::now();
    const auto probs = model->predict(batch, path, b);
    seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    if (probs.size() != b) throw Error("bench batch returned the wrong number of predictions");
  }
  auto result = summarize_timings(path, std::move(seconds), config_.bench.warmup, b);
  const std::string dir = stage_dir("bench");
  ensure_dir(dir);
  write_file(join_path(dir, fmt::format("bench_{}.json", to_string(path))), result.to_json().dump(2) + "\n");
  return result;
}

TrainStageResult Pipeline::run_all() {
  if (config_.mode != Mode::kBase) {
    factors();
    if (config_.mode == Mode::kRekiC) cluster();
    knowledge();
    encode();
  }
  auto result = train();
  if (config_.mode != Mode::kBase) precompute();
  return result;
}

}  // namespace reki::pipeline
