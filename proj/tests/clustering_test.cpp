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


#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "reki/clustering.hpp"
#include "reki/common.hpp"
#include "test_support.hpp"

namespace reki::clustering {
namespace {

using reki::testing::TempDir;

std::vector<std::vector<double>> gaussian_points(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> out(n, std::vector<double>(dim));
  for (auto& p : out)
    for (auto& v : p) v = rng.normal();
  return out;
}

// Blobs around `centers` random centres so clustering has structure to find.
std::vector<std::vector<double>> blob_points(std::size_t n, std::size_t dim, std::size_t centers, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> c(centers, std::vector<double>(dim));
  for (auto& p : c)
    for (auto& v : p) v = 6.0 * rng.normal();
  std::vector<std::vector<double>> out(n, std::vector<double>(dim));
  for (auto& p : out) {
    const auto& base = c[rng.below(centers)];
    for (std::size_t d = 0; d < dim; ++d) p[d] = base[d] + rng.normal();
  }
  return out;
}

ClusterTree build(const std::vector<std::vector<double>>& points, TreeOptions options) {
  ClusterTree tree(points.at(0).size(), options);
  for (std::size_t i = 0; i < points.size(); ++i) tree.insert(points[i], fmt::format("p{}", i));
  return tree;
}

// Walks the tree and checks leaves partition the points and every internal
// node's members are exactly the union of its children's.
void expect_tree_invariants(const ClusterTree& tree) {
  std::vector<int> leaf_of(tree.size(), -1);
  for (std::size_t id = 0; id < tree.node_count(); ++id) {
    const auto& n = tree.node(static_cast<int>(id));
    if (n.is_leaf()) {
      for (auto m : n.members) {
        ASSERT_LT(m, tree.size());
        EXPECT_EQ(leaf_of[m], -1) << "point " << m << " in two leaves";
        leaf_of[m] = static_cast<int>(id);
      }
      continue;
    }
    std::multiset<std::size_t> from_children;
    for (int c : n.children) {
      EXPECT_EQ(tree.node(c).parent, static_cast<int>(id));
      EXPECT_EQ(tree.node(c).depth, n.depth + 1);
      from_children.insert(tree.node(c).members.begin(), tree.node(c).members.end());
    }
    EXPECT_EQ(from_children, std::multiset<std::size_t>(n.members.begin(), n.members.end()));
  }
  for (std::size_t p = 0; p < tree.size(); ++p) EXPECT_NE(leaf_of[p], -1) << "point " << p << " in no leaf";
  EXPECT_LE(static_cast<std::size_t>(tree.height()), tree.size());
}

void expect_partition(const std::vector<Cluster>& clusters, std::size_t n, std::size_t cap) {
  std::set<std::string> seen;
  std::size_t total = 0;
  for (const auto& c : clusters) {
    EXPECT_GE(c.member_ids.size(), 1u);
    EXPECT_LE(c.member_ids.size(), cap);
    total += c.member_ids.size();
    for (const auto& m : c.member_ids) EXPECT_TRUE(seen.insert(m).second) << m << " in two clusters";
  }
  EXPECT_EQ(total, n);
  EXPECT_EQ(seen.size(), n);
}

TEST(Kernel, SelfSimilarityIsOne) {
  const std::vector<double> x{0.5, -1.0, 2.0};
  const std::vector<std::span<const double>> s{x};
  EXPECT_DOUBLE_EQ(point_set_kernel(x, s, 0.7), 1.0);
}

TEST(Kernel, FarPointVanishes) {
  const std::vector<double> x{1e200, 0.0};
  const std::vector<double> m{0.0, 0.0};
  const std::vector<std::span<const double>> s{m};
  EXPECT_EQ(point_set_kernel(x, s, 1.0), 0.0);
}

TEST(Kernel, MatchesDirectSum) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto pts = gaussian_points(6, 4, rng.next());
    const double gamma = rng.uniform(0.05, 2.0);
    std::vector<std::span<const double>> members(pts.begin() + 1, pts.end());
    double expected = 0.0;
    for (std::size_t k = 1; k < pts.size(); ++k) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < 4; ++j) d2 += (pts[0][j] - pts[k][j]) * (pts[0][j] - pts[k][j]);
      expected += std::exp(-gamma * d2) / 5.0;
    }
    EXPECT_NEAR(point_set_kernel(pts[0], members, gamma), expected, 1e-15);
  }
}

TEST(Kernel, DecreasesWhenDistancesGrow) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    auto pts = gaussian_points(5, 3, rng.next());
    const double before = point_set_kernel(pts[0], std::vector<std::span<const double>>(pts.begin() + 1, pts.end()), 0.5);
    for (auto& p : pts)
      for (auto& v : p) v *= 1.5;
    const double after = point_set_kernel(pts[0], std::vector<std::span<const double>>(pts.begin() + 1, pts.end()), 0.5);
    EXPECT_LT(after, before);
  }
}

TEST(Kernel, EmptySetThrows) {
  const std::vector<double> x{1.0};
  EXPECT_THROW(point_set_kernel(x, {}, 1.0), Error);
}

TEST(Gamma, InverseSquaredMedianDistance) {
  // Pairwise distances 1, 2, 3: median 2.
  const std::vector<std::vector<double>> pts{{0.0}, {1.0}, {3.0}};
  EXPECT_DOUBLE_EQ(estimate_gamma(pts, 0), 0.25);
  const std::vector<std::vector<double>> same{{1.0}, {1.0}};
  EXPECT_DOUBLE_EQ(estimate_gamma(same, 0), 1.0);
  EXPECT_DOUBLE_EQ(estimate_gamma(std::vector<std::vector<double>>{{2.0}}, 0), 1.0);
}

TEST(Tree, FirstPointIsASingleLeaf) {
  ClusterTree tree(2, {});
  const std::vector<double> p{1.0, 2.0};
  EXPECT_EQ(tree.insert(p, "a"), 1u);
  EXPECT_EQ(tree.node_count(), 1u);
  EXPECT_EQ(tree.height(), 1);
  EXPECT_EQ(tree.node(0).members, (std::vector<std::size_t>{0}));
}

TEST(Tree, DuplicatesShareALeaf) {
  const auto pts = blob_points(200, 3, 4, 8);
  ClusterTree tree = build(pts, TreeOptions{.leaf_capacity = 10, .gamma = 0.5});
  const std::vector<double> dup = pts[17];
  tree.insert(dup, "dup");
  for (std::size_t id = 0; id < tree.node_count(); ++id) {
    const auto& n = tree.node(static_cast<int>(id));
    if (!n.is_leaf()) continue;
    const bool has_orig = std::find(n.members.begin(), n.members.end(), 17) != n.members.end();
    const bool has_dup = std::find(n.members.begin(), n.members.end(), 200) != n.members.end();
    EXPECT_EQ(has_orig, has_dup);
  }
}

TEST(Tree, DimensionMismatchThrows) {
  ClusterTree tree(3, {});
  const std::vector<double> p{1.0, 2.0};
  EXPECT_THROW(tree.insert(p, "a"), Error);
  EXPECT_THROW(ClusterTree(0, {}), Error);
  EXPECT_THROW(ClusterTree(2, TreeOptions{.arity = 1}), Error);
}

TEST(Tree, InvariantsAfterThousandInserts) {
  for (std::size_t arity : {2u, 3u}) {
    const auto pts = blob_points(1000, 5, 6, 10 + arity);
    const auto tree = build(pts, TreeOptions{.leaf_capacity = 25, .arity = arity, .gamma = 0.1, .seed = 2});
    expect_tree_invariants(tree);
    for (std::size_t id = 0; id < tree.node_count(); ++id) {
      const auto& n = tree.node(static_cast<int>(id));
      if (n.is_leaf()) {
        EXPECT_LE(n.members.size(), 25u);
      } else {
        EXPECT_EQ(n.children.size(), arity);
      }
    }
  }
}

TEST(Tree, InsertTouchesOnlyOnePath) {
  const auto pts = blob_points(3000, 4, 8, 12);
  ClusterTree tree(4, TreeOptions{.leaf_capacity = 40, .gamma = 0.1});
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto touched = tree.insert(pts[i], fmt::format("p{}", i));
    EXPECT_LE(touched, static_cast<std::size_t>(tree.height()) * tree.options().arity + 1);
  }
}

TEST(Tree, SameSeedSameTree) {
  const auto pts = blob_points(600, 4, 5, 13);
  const TreeOptions opts{.leaf_capacity = 30, .gamma = 0.2, .seed = 9};
  EXPECT_EQ(build(pts, opts).serialize(), build(pts, opts).serialize());
}

TEST(Extract, WholeTreeFits) {
  const auto tree = build(gaussian_points(5, 2, 1), {});
  const auto clusters = extract_clusters(tree, 80, ClusterKind::kItem);
  ASSERT_EQ(clusters.size(), 1u);
  EXPECT_EQ(clusters[0].member_ids.size(), 5u);
  EXPECT_EQ(clusters[0].cluster_id, "ic0");
}

TEST(Extract, CapOneGivesSingletons) {
  const auto tree = build(gaussian_points(40, 2, 2), TreeOptions{.leaf_capacity = 8});
  const auto clusters = extract_clusters(tree, 1, ClusterKind::kUser);
  EXPECT_EQ(clusters.size(), 40u);
  expect_partition(clusters, 40, 1);
  EXPECT_EQ(clusters[0].cluster_id.substr(0, 2), "uc");
}

TEST(Extract, PartitionOfFiveHundred) {
  const auto tree = build(blob_points(500, 3, 7, 3), TreeOptions{.leaf_capacity = 80, .gamma = 0.3});
  expect_partition(extract_clusters(tree, 80, ClusterKind::kItem), 500, 80);
  expect_partition(extract_clusters(tree, 33, ClusterKind::kItem), 500, 33);
}

TEST(Extract, ClustersAreMaximalUnderTheCap) {
  const auto tree = build(blob_points(800, 3, 5, 6), TreeOptions{.leaf_capacity = 20, .gamma = 0.3});
  const auto clusters = extract_clusters(tree, 50, ClusterKind::kItem);
  // Each cluster is a whole node whose parent exceeds the cap.
  std::map<std::string, std::size_t> index;
  for (std::size_t p = 0; p < tree.size(); ++p) index[tree.id(p)] = p;
  for (const auto& c : clusters) {
    std::set<std::size_t> members;
    for (const auto& m : c.member_ids) members.insert(index.at(m));
    bool found = false;
    for (std::size_t id = 0; id < tree.node_count() && !found; ++id) {
      const auto& n = tree.node(static_cast<int>(id));
      if (std::set<std::size_t>(n.members.begin(), n.members.end()) != members) continue;
      found = true;
      if (n.parent >= 0) {
        EXPECT_GT(tree.node(n.parent).members.size(), 50u);
      }
    }
    EXPECT_TRUE(found) << c.cluster_id;
  }
}

TEST(Extract, InvalidArguments) {
  const auto tree = build(gaussian_points(3, 2, 1), {});
  EXPECT_THROW(extract_clusters(tree, 0, ClusterKind::kItem), Error);
  EXPECT_THROW(extract_clusters(ClusterTree(2, {}), 5, ClusterKind::kItem), Error);
}

TEST(EmbedUsers, SingletonHistoryIsTheItem) {
  const std::vector<std::vector<double>> items{{1.0, 2.0}, {3.0, 5.0}};
  const auto v = embed_users({{1}}, items, {});
  EXPECT_EQ(v[0], (std::vector<double>{3.0, 5.0}));
}

TEST(EmbedUsers, MeanOfThreeAndProfile) {
  const std::vector<std::vector<double>> items{{1.0, 0.0}, {2.0, 3.0}, {6.0, -3.0}};
  const auto v = embed_users({{0, 1, 2}, {}}, items, {{7.0}, {8.0}});
  EXPECT_DOUBLE_EQ(v[0][0], (1.0 + 2.0 + 6.0) / 3.0);
  EXPECT_DOUBLE_EQ(v[0][1], (0.0 + 3.0 - 3.0) / 3.0);
  EXPECT_DOUBLE_EQ(v[0][2], 7.0);
  EXPECT_EQ(v[1], (std::vector<double>{0.0, 0.0, 8.0}));
}

TEST(EmbedUsers, NoProfileTableMeansNoProfilePart) {
  const std::vector<std::vector<double>> items{{1.0, 2.0}};
  EXPECT_EQ(embed_users({{0}}, items, {})[0].size(), 2u);
  EXPECT_EQ(embed_users({{0}}, items, {{}})[0], (std::vector<double>{1.0, 2.0}));
}

TEST(EmbedUsers, NeitherHistoryNorProfileThrows) {
  const std::vector<std::vector<double>> items{{1.0}};
  EXPECT_THROW(embed_users({{}}, items, {}), Error);
}

TEST(Represent, DirectCount) {
  EXPECT_EQ(represent_user_cluster({{"a", "b", "c"}, {"b", "c"}, {"c"}}, 2), (std::vector<std::string>{"c", "b"}));
}

TEST(Represent, MembershipNotMultiplicity) {
  EXPECT_EQ(represent_user_cluster({{"x", "x", "x"}, {"y"}, {"y"}}, 1), (std::vector<std::string>{"y"}));
}

TEST(Represent, SaturatesAndBreaksTiesLexicographically) {
  EXPECT_EQ(represent_user_cluster({{"d", "b"}, {"a", "c"}}, 10), (std::vector<std::string>{"a", "b", "c", "d"}));
  EXPECT_THROW(represent_user_cluster({{"a"}}, 0), Error);
}

// Exhaustive oracle: count members per distinct item by scanning, then a
// full sort on (count desc, id asc).
std::vector<std::string> count_and_sort(const std::vector<std::vector<std::string>>& histories, std::size_t d) {
  std::vector<std::string> items;
  for (const auto& h : histories) items.insert(items.end(), h.begin(), h.end());
  std::sort(items.begin(), items.end());
  items.erase(std::unique(items.begin(), items.end()), items.end());
  std::vector<std::pair<std::size_t, std::string>> scored;
  for (const auto& it : items) {
    std::size_t n = 0;
    for (const auto& h : histories) n += std::find(h.begin(), h.end(), it) != h.end() ? 1 : 0;
    scored.emplace_back(n, it);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < scored.size() && i < d; ++i) out.push_back(scored[i].second);
  return out;
}

TEST(Represent, MatchesExhaustiveOracle) {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t users = 1 + static_cast<std::size_t>(rng.below(50));
    const std::size_t universe = 1 + static_cast<std::size_t>(rng.below(100));
    std::vector<std::vector<std::string>> histories(users);
    for (auto& h : histories) {
      const auto len = 1 + rng.below(20);
      for (std::uint64_t k = 0; k < len; ++k) h.push_back(fmt::format("a{:03}", rng.below(universe)));
    }
    for (std::size_t d : {1u, 2u, 15u}) EXPECT_EQ(represent_user_cluster(histories, d), count_and_sort(histories, d));
  }
}

TEST(Files, AssignmentsAndClustersRoundTrip) {
  TempDir dir("cluster");
  std::vector<Cluster> clusters{{"uc0", ClusterKind::kUser, {"u1", "u,2"}, {"i3", "i1"}},
                                {"ic0", ClusterKind::kItem, {"i9"}, {}}};
  write_assignments(dir.path("a.csv"), clusters);
  const auto a = read_assignments(dir.path("a.csv"));
  EXPECT_EQ(a.size(), 3u);
  EXPECT_EQ(a.at("u,2"), "uc0");
  EXPECT_EQ(a.at("i9"), "ic0");
  write_cluster_file(dir.path("c.jsonl"), clusters);
  const auto back = read_cluster_file(dir.path("c.jsonl"));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].member_ids, clusters[0].member_ids);
  EXPECT_EQ(back[0].representation_items, clusters[0].representation_items);
  EXPECT_EQ(back[1].kind, ClusterKind::kItem);
  EXPECT_THROW(read_assignments(dir.path("missing.csv")), Error);
  dir.file("bad.csv", "id,cluster\nx,y\n");
  EXPECT_THROW(read_assignments(dir.path("bad.csv")), Error);
}

}  // namespace
}  // namespace reki::clustering
