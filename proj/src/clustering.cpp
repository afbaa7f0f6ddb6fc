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

#include "reki/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <nlohmann/json.hpp>

#include "reki/common.hpp"
#include "reki/corpus.hpp"

namespace reki::clustering {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    d += t * t;
  }
  return d;
}

}  // namespace

double point_set_kernel(std::span<const double> x, std::span<const std::span<const double>> members, double gamma) {
  if (members.empty()) throw Error("point_set_kernel on an empty set");
  double total = 0.0;
  for (const auto& s : members) {
    if (s.size() != x.size()) throw Error("point_set_kernel: dimension mismatch");
    total += std::exp(-gamma * squared_distance(x, s));
  }
  return total / static_cast<double>(members.size());
}

double estimate_gamma(std::span<const std::vector<double>> points, std::uint64_t seed, std::size_t sample) {
  std::vector<std::size_t> idx(points.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(derive_seed(seed, "estimate_gamma"));
  rng.shuffle(idx);
  if (idx.size() > sample) idx.resize(sample);
  std::vector<double> dists;
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = i + 1; j < idx.size(); ++j)
      dists.push_back(std::sqrt(squared_distance(points[idx[i]], points[idx[j]])));
  if (dists.empty()) return 1.0;
  const auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  const double median = *mid;
  if (!(median > 0.0) || !std::isfinite(median)) return 1.0;
  return 1.0 / (median * median);
}

ClusterTree::ClusterTree(std::size_t dim, TreeOptions options) : dim_(dim), options_(options) {
  if (dim_ == 0) throw Error("cluster tree dimension must be positive");
  if (options_.leaf_capacity < 1) throw Error("leaf capacity must be at least 1");
  if (options_.arity < 2) throw Error("tree arity must be at least 2");
}

std::span<const double> ClusterTree::point(std::size_t index) const {
  return {coords_.data() + index * dim_, dim_};
}

double ClusterTree::kernel(std::span<const double> x, int node_id) const {
  const auto& n = node(node_id);
  if (n.members.empty()) throw Error("kernel on an empty node");
  double total = 0.0;
  for (const auto m : n.members) total += std::exp(-options_.gamma * squared_distance(x, point(m)));
  return total / static_cast<double>(n.members.size());
}

int ClusterTree::height() const {
  int h = 0;
  for (const auto& n : nodes_) h = std::max(h, n.depth);
  return nodes_.empty() ? 0 : h + 1;
}

std::size_t ClusterTree::insert(std::span<const double> point_in, std::string id) {
  if (point_in.size() != dim_)
    throw Error(fmt::format("cluster tree insert: dimension {} != tree dimension {}", point_in.size(), dim_));
  for (double v : point_in)
    if (!std::isfinite(v)) throw Error("cluster tree insert: non-finite coordinate");

  const std::size_t index = ids_.size();
  coords_.insert(coords_.end(), point_in.begin(), point_in.end());
  ids_.push_back(std::move(id));
  const auto x = point(index);

  std::size_t touched = 1;
  if (nodes_.empty()) {
    TreeNode root;
    root.sum.assign(dim_, 0.0);
    nodes_.push_back(std::move(root));
  }
  int cur = 0;
  while (true) {
    auto& n = nodes_[static_cast<std::size_t>(cur)];
    n.members.push_back(index);
    for (std::size_t i = 0; i < dim_; ++i) n.sum[i] += x[i];
    if (n.is_leaf()) break;
    int best = -1;
    double best_k = -1.0;
    // Copy: kernel() reads nodes_, and `n` must not be used after we move on.
    const std::vector<int> children = n.children;
    for (int c : children) {
      ++touched;
      const double k = kernel(x, c);
      if (k > best_k) {
        best_k = k;
        best = c;
      }
    }
    cur = best;
  }
  if (nodes_[static_cast<std::size_t>(cur)].members.size() > options_.leaf_capacity) {
    split_leaf(cur);
    touched += options_.arity;
  }
  return touched;
}

void ClusterTree::split_leaf(int leaf) {
  const std::vector<std::size_t> members = nodes_[static_cast<std::size_t>(leaf)].members;
  const std::size_t k = options_.arity;
  Rng rng(mix64(options_.seed ^ mix64(static_cast<std::uint64_t>(leaf) * 0x9e37ULL + ids_.size())));

  std::vector<std::size_t> order(members.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::vector<double>> centers;
  for (std::size_t i = 0; i < order.size() && centers.size() < k; ++i) {
    const auto p = point(members[order[i]]);
    bool dup = false;
    for (const auto& c : centers) dup = dup || squared_distance(p, c) == 0.0;
    if (!dup) centers.emplace_back(p.begin(), p.end());
  }

  std::vector<std::size_t> assign(members.size(), 0);
  bool ok = centers.size() == k;
  for (int it = 0; ok && it < options_.kmeans_iterations; ++it) {
    for (std::size_t i = 0; i < members.size(); ++i) {
      const auto p = point(members[i]);
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_distance(p, centers[c]);
        if (d < best) {
          best = d;
          assign[i] = c;
        }
      }
    }
    std::vector<std::vector<double>> next(k, std::vector<double>(dim_, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < members.size(); ++i) {
      const auto p = point(members[i]);
      for (std::size_t d = 0; d < dim_; ++d) next[assign[i]][d] += p[d];
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        ok = false;
        break;
      }
      for (std::size_t d = 0; d < dim_; ++d) next[c][d] /= static_cast<double>(counts[c]);
    }
    centers = std::move(next);
  }
  if (ok) {
    std::vector<std::size_t> counts(k, 0);
    for (auto a : assign) ++counts[a];
    ok = std::all_of(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; });
  }
  if (!ok) {
    // Duplicates or a collapsed centre: split in insertion order instead.
    for (std::size_t i = 0; i < members.size(); ++i) assign[i] = i * k / members.size();
  }

  const int depth = nodes_[static_cast<std::size_t>(leaf)].depth + 1;
  for (std::size_t c = 0; c < k; ++c) {
    TreeNode child;
    child.parent = leaf;
    child.depth = depth;
    child.sum.assign(dim_, 0.0);
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (assign[i] != c) continue;
      child.members.push_back(members[i]);
      const auto p = point(members[i]);
      for (std::size_t d = 0; d < dim_; ++d) child.sum[d] += p[d];
    }
    nodes_.push_back(std::move(child));
    nodes_[static_cast<std::size_t>(leaf)].children.push_back(static_cast<int>(nodes_.size() - 1));
  }
}

std::string ClusterTree::serialize() const {
  std::ostringstream out;
  out << fmt::format("tree dim={} gamma={:a} leaf={} arity={} points={}\n", dim_, options_.gamma,
                     options_.leaf_capacity, options_.arity, ids_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    out << fmt::format("node {} parent={} depth={} children=[{}] members=[{}]\n", i, n.parent, n.depth,
                       fmt::join(n.children, ","), fmt::join(n.members, ","));
  }
  return out.str();
}

std::vector<Cluster> extract_clusters(const ClusterTree& tree, std::size_t max_cluster_size, ClusterKind kind) {
  if (max_cluster_size < 1) throw Error("max_cluster_size must be at least 1");
  if (tree.size() == 0) throw Error("extract_clusters on an empty tree");
  std::vector<Cluster> out;
  const char* prefix = kind == ClusterKind::kItem ? "ic" : "uc";
  auto emit = [&](const std::vector<std::size_t>& members) {
    Cluster c;
    c.cluster_id = fmt::format("{}{}", prefix, out.size());
    c.kind = kind;
    for (auto m : members) c.member_ids.push_back(tree.id(m));
    out.push_back(std::move(c));
  };
  std::vector<int> stack{tree.root()};
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    const auto& n = tree.node(id);
    if (n.members.size() <= max_cluster_size) {
      emit(n.members);
    } else if (n.is_leaf()) {
      for (std::size_t b = 0; b < n.members.size(); b += max_cluster_size) {
        const auto e = std::min(n.members.size(), b + max_cluster_size);
        emit({n.members.begin() + static_cast<std::ptrdiff_t>(b), n.members.begin() + static_cast<std::ptrdiff_t>(e)});
      }
    } else {
      for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) stack.push_back(*it);
    }
  }
  return out;
}

std::vector<std::vector<double>> embed_users(const std::vector<std::vector<std::size_t>>& histories,
                                             const std::vector<std::vector<double>>& item_embeddings,
                                             const std::vector<std::vector<double>>& profile_embeddings) {
  const std::size_t item_dim = item_embeddings.empty() ? 0 : item_embeddings[0].size();
  const std::size_t profile_dim = profile_embeddings.empty() ? 0 : profile_embeddings[0].size();
  if (!profile_embeddings.empty() && profile_embeddings.size() != histories.size())
    throw Error("embed_users: profile rows must match users");
  std::vector<std::vector<double>> out;
  out.reserve(histories.size());
  for (std::size_t u = 0; u < histories.size(); ++u) {
    const bool has_profile = !profile_embeddings.empty() && !profile_embeddings[u].empty();
    if (histories[u].empty() && !has_profile)
      throw Error(fmt::format("embed_users: user {} has neither history nor profile", u));
    std::vector<double> v(item_dim + profile_dim, 0.0);
    for (auto item : histories[u]) {
      const auto& e = item_embeddings.at(item);
      for (std::size_t d = 0; d < item_dim; ++d) v[d] += e[d];
    }
    if (!histories[u].empty())
      for (std::size_t d = 0; d < item_dim; ++d) v[d] /= static_cast<double>(histories[u].size());
    if (has_profile) {
      if (profile_embeddings[u].size() != profile_dim) throw Error("embed_users: ragged profile rows");
      std::copy(profile_embeddings[u].begin(), profile_embeddings[u].end(), v.begin() + static_cast<std::ptrdiff_t>(item_dim));
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<std::string> represent_user_cluster(const std::vector<std::vector<std::string>>& member_histories,
                                                std::size_t d) {
  if (d < 1) throw Error("represent_user_cluster: d must be at least 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& h : member_histories) {
    const std::set<std::string> distinct(h.begin(), h.end());
    for (const auto& item : distinct) ++counts[item];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ranked.size() && i < d; ++i) out.push_back(ranked[i].first);
  return out;
}

void write_assignments(const std::string& path, const std::vector<Cluster>& clusters) {
  std::string text = "entity_id,cluster_id\n";
  for (const auto& c : clusters)
    for (const auto& m : c.member_ids) text += corpus::csv_field(m) + "," + corpus::csv_field(c.cluster_id) + "\n";
  write_file(path, text);
}

std::unordered_map<std::string, std::string> read_assignments(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("missing cluster assignment file '{}'", path));
  std::unordered_map<std::string, std::string> out;
  std::string line;
  std::getline(in, line);
  if (trim(line) != "entity_id,cluster_id") throw Error(fmt::format("bad header in '{}'", path));
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = corpus::split_csv_line(line);
    if (f.size() != 2) throw Error(fmt::format("bad row in '{}': {}", path, line));
    out[f[0]] = f[1];
  }
  return out;
}

void write_cluster_file(const std::string& path, const std::vector<Cluster>& clusters) {
  std::string text;
  for (const auto& c : clusters) {
    const nlohmann::json j{{"cluster_id", c.cluster_id},
                           {"kind", c.kind == ClusterKind::kItem ? "item" : "user"},
                           {"members", c.member_ids},
                           {"representation_items", c.representation_items}};
    text += j.dump() + "\n";
  }
  write_file(path, text);
}

std::vector<Cluster> read_cluster_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("missing cluster file '{}'", path));
  std::vector<Cluster> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Cluster c;
      c.cluster_id = j.at("cluster_id").get<std::string>();
      c.kind = j.at("kind").get<std::string>() == "item" ? ClusterKind::kItem : ClusterKind::kUser;
      c.member_ids = j.at("members").get<std::vector<std::string>>();
      c.representation_items = j.at("representation_items").get<std::vector<std::string>>();
      out.push_back(std::move(c));
    } catch (const nlohmann::json::exception& e) {
      throw Error(fmt::format("bad cluster line in '{}': {}", path, e.what()));
    }
  }
  return out;
}

}  // namespace reki::clustering
