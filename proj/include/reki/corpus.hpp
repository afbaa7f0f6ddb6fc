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
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace reki::corpus {

/// Interns opaque string keys to dense ids. Id 0 is reserved for
/// unknown/padding, so the first interned key gets id 1.
class Vocabulary {
 public:
  Vocabulary();

  int intern(std::string_view key);
  /// Returns 0 when the key has never been interned.
  int find(std::string_view key) const;
  const std::string& key(int id) const;
  /// Number of ids including the reserved id 0.
  int size() const { return static_cast<int>(keys_.size()); }

 private:
  std::unordered_map<std::string, int> ids_;
  std::vector<std::string> keys_;
};

using Attributes = std::vector<std::pair<std::string, std::string>>;

struct InteractionRecord {
  int user = 0;  // interned user id
  int item = 0;  // interned item id
  int rating = 0;
  std::int64_t timestamp = 0;
  std::size_t row = 0;  // 1-based data row in the source file; ties break on it
  int label = 0;        // set by binarize()
};

struct ItemInfo {
  std::string title;
  std::string category;
  int category_id = 0;
  Attributes attrs;
};

struct TableSchema {
  /// Profile columns expected after `user_id` in the users table. Empty
  /// means "take whatever the header lists".
  std::vector<std::string> user_columns;
  /// Amazon-style corpora ship without a users table.
  bool has_users_table = true;
};

struct Tables {
  Vocabulary users;
  Vocabulary items;
  Vocabulary categories;
  std::vector<InteractionRecord> interactions;
  std::vector<ItemInfo> items_info;  // indexed by item id; entry 0 unused
  std::vector<std::string> profile_columns;
  std::vector<Vocabulary> profile_vocabs;  // one per profile column
  /// Per user id: one value id per profile column (empty when absent).
  std::vector<std::vector<int>> user_profiles;
  std::vector<std::vector<std::string>> user_profile_text;
  std::size_t malformed_rows = 0;
  std::vector<std::string> warnings;

  const std::string& user_key(int id) const { return users.key(id); }
  const std::string& item_key(int id) const { return items.key(id); }
  const ItemInfo& item(int id) const;
};

struct TablePaths {
  std::string interactions;
  std::string items;
  std::string users;  // may be empty when the schema has no users table
};

Tables load_tables(const TablePaths& paths, const TableSchema& schema);

/// Parses one interaction data row. Exposed for tests and tooling.
InteractionRecord parse_interaction_row(std::string_view line, std::size_t row, Vocabulary& users,
                                        Vocabulary& items);

/// Parses `k1=v1|k2=v2`.
Attributes parse_attributes(std::string_view text);

/// Splits one CSV line with double-quote escaping.
std::vector<std::string> split_csv_line(std::string_view line);
/// Quotes a CSV field when it contains a separator or a quote.
std::string csv_field(std::string_view field);

void binarize(std::vector<InteractionRecord>& records, int positive_threshold);

/// Drops users and items with fewer than `min_count` interactions, repeated
/// until stable. Returns the number of records removed.
std::size_t filter_min_interactions(std::vector<InteractionRecord>& records, int min_count);

/// Stable sort by (user, timestamp, source row).
void sort_chronologically(std::vector<InteractionRecord>& records);

struct HistoryStep {
  int item = 0;
  int category = 0;
  int label = 0;
  std::int64_t timestamp = 0;
};

struct Sample {
  int user = 0;
  std::vector<int> user_features;  // one id per field in SampleSchema::user_fields
  std::vector<HistoryStep> history;
  std::vector<int> context;  // one id per field in SampleSchema::context_fields
  int target_item = 0;
  int target_category = 0;
  int label = 0;
  std::int64_t timestamp = 0;
  /// 0-based position of the target interaction within its user's timeline.
  std::size_t position = 0;
};

struct SampleSchema {
  std::vector<std::string> user_fields;  // "user_id" first, then profile columns
  std::vector<int> user_vocab_sizes;
  std::vector<std::string> context_fields;
  std::vector<int> context_vocab_sizes;
  int item_vocab = 1;
  int category_vocab = 1;
  std::size_t max_history = 30;
};

SampleSchema make_schema(const Tables& tables, std::size_t max_history);

/// One sample per interaction, with up to `max_history` most recent prior
/// interactions of the same user. Records must be sorted chronologically.
std::vector<Sample> build_samples(const std::vector<InteractionRecord>& records, const Tables& tables,
                                  std::size_t max_history);

enum class Partition { kTrain, kTest };

struct DatasetSplit {
  std::vector<Sample> train;
  std::vector<Sample> test;
  std::unordered_map<int, Partition> user_partition;
};

/// Seeded user shuffle, then the first round(fraction * n) users go to train.
std::unordered_map<int, Partition> partition_users(std::vector<int> users, double train_fraction,
                                                   std::uint64_t seed);

DatasetSplit split_by_user(const std::vector<Sample>& samples, double train_fraction, std::uint64_t seed);

/// Per-user chronological interaction lists, indexed by user id.
std::vector<std::vector<InteractionRecord>> group_by_user(const std::vector<InteractionRecord>& sorted,
                                                          int user_count);

}  // namespace reki::corpus
