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
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace reki::clustering {

/// Mean RBF similarity between a point and a point set:
/// K(x, S) = (1/|S|) * sum_s exp(-gamma * ||x - s||^2).
double point_set_kernel(std::span<const double> x, std::span<const std::span<const double>> members, double gamma);

/// gamma = 1 / median^2 of pairwise distances over a seeded sample of at
/// most `sample` points (1.0 when the sample is degenerate).
double estimate_gamma(std::span<const std::vector<double>> points, std::uint64_t seed, std::size_t sample = 256);

struct TreeOptions {
  std::size_t leaf_capacity = 80;
  std::size_t arity = 2;  // children created when a leaf splits
  double gamma = 1.0;
  std::uint64_t seed = 0;
  int kmeans_iterations = 10;
};

struct TreeNode {
  int parent = -1;
  int depth = 0;
  std::vector<int> children;
  std::vector<std::size_t> members;  // point indices, insertion order
  std::vector<double> sum;           // running coordinate sum of members

  bool is_leaf() const { return children.empty(); }
};

/// Streaming top-down hierarchical clustering. Each insert walks from the
/// root to a leaf, at every internal node following the child with the
/// highest point-set kernel value, and splits an overflowing leaf with a
/// seeded k-means (k = arity). Only nodes on the insertion path change.
class ClusterTree {
 public:
  ClusterTree(std::size_t dim, TreeOptions options);

  /// Returns the number of nodes touched (visited, scored or created).
  std::size_t insert(std::span<const double> point, std::string id);

  double kernel(std::span<const double> x, int node) const;

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  std::size_t insertion_count() const { return ids_.size(); }
  int root() const { return nodes_.empty() ? -1 : 0; }
  int height() const;
  const TreeNode& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t node_count() const { return nodes_.size(); }
  const std::string& id(std::size_t point) const { return ids_.at(point); }
  std::span<const double> point(std::size_t index) const;
  const TreeOptions& options() const { return options_; }

  /// Canonical text dump; two trees are identical iff their dumps are.
  std::string serialize() const;

 private:
  void split_leaf(int leaf);

  std::size_t dim_;
  TreeOptions options_;
  std::vector<TreeNode> nodes_;
  std::vector<double> coords_;
  std::vector<std::string> ids_;
};

enum class ClusterKind { kItem, kUser };

struct Cluster {
  std::string cluster_id;
  ClusterKind kind = ClusterKind::kItem;
  std::vector<std::string> member_ids;
  std::vector<std::string> representation_items;  // user clusters only
};

/// Top-down cut: a node becomes a cluster iff it holds at most
/// `max_cluster_size` points and its parent holds more (or it is the root).
/// A leaf that is still too large is chunked in insertion order.
std::vector<Cluster> extract_clusters(const ClusterTree& tree, std::size_t max_cluster_size, ClusterKind kind);

/// History part (mean of history item embeddings) concatenated with the
/// profile part. Either part may be absent and is then zero-filled.
/// `histories[u]` lists item rows of `item_embeddings`; `profile_embeddings`
/// is empty or has one row per user.
std::vector<std::vector<double>> embed_users(const std::vector<std::vector<std::size_t>>& histories,
                                             const std::vector<std::vector<double>>& item_embeddings,
                                             const std::vector<std::vector<double>>& profile_embeddings);

/// Items ranked by how many member histories contain them (membership, not
/// multiplicity); ties by lexicographic item id; at most d returned.
std::vector<std::string> represent_user_cluster(const std::vector<std::vector<std::string>>& member_histories,
                                                std::size_t d);

void write_assignments(const std::string& path, const std::vector<Cluster>& clusters);
std::unordered_map<std::string, std::string> read_assignments(const std::string& path);
void write_cluster_file(const std::string& path, const std::vector<Cluster>& clusters);
std::vector<Cluster> read_cluster_file(const std::string& path);

}  // namespace reki::clustering
