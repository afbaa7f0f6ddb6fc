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

#include "reki/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <tuple>

#include <boost/tokenizer.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "reki/common.hpp"

namespace reki::corpus {

Vocabulary::Vocabulary() { keys_.emplace_back(); }

int Vocabulary::intern(std::string_view key) {
  auto it = ids_.find(std::string(key));
  if (it != ids_.end()) return it->second;
  const int id = static_cast<int>(keys_.size());
  keys_.emplace_back(key);
  ids_.emplace(std::string(key), id);
  return id;
}

int Vocabulary::find(std::string_view key) const {
  auto it = ids_.find(std::string(key));
  return it == ids_.end() ? 0 : it->second;
}

const std::string& Vocabulary::key(int id) const {
  if (id < 0 || id >= size()) throw Error(fmt::format("vocabulary id {} out of range", id));
  return keys_[static_cast<std::size_t>(id)];
}

const ItemInfo& Tables::item(int id) const {
  if (id <= 0 || static_cast<std::size_t>(id) >= items_info.size())
    throw Error(fmt::format("unknown item id {}", id));
  return items_info[static_cast<std::size_t>(id)];
}

std::vector<std::string> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  using Separator = boost::escaped_list_separator<char>;
  // Backslash is not an escape in our files; use a character that never occurs.
  Separator sep('\x01', ',', '"');
  std::string owned(line);
  boost::tokenizer<Separator> tok(owned, sep);
  return {tok.begin(), tok.end()};
}

std::string csv_field(std::string_view field) {
  if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') throw Error(fmt::format("field contains a double quote: {}", field));
    out += c;
  }
  out += '"';
  return out;
}

Attributes parse_attributes(std::string_view text) {
  Attributes out;
  if (trim(text).empty()) return out;
  for (const auto& part : split(text, '|')) {
    const auto eq = part.find('=');
    if (eq == std::string::npos) {
      out.emplace_back(trim(part), "");
    } else {
      out.emplace_back(trim(part.substr(0, eq)), trim(part.substr(eq + 1)));
    }
  }
  return out;
}

namespace {

bool parse_int64(std::string_view text, std::int64_t& out) {
  const auto t = trim(text);
  if (t.empty()) return false;
  const auto* end = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(t.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("missing file '{}'", path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

void expect_header(const std::vector<std::string>& got, const std::vector<std::string>& want,
                   const std::string& path) {
  if (got.size() < want.size() || !std::equal(want.begin(), want.end(), got.begin())) {
    throw Error(fmt::format("header of '{}' does not match schema (expected {})", path,
                            fmt::join(want, ",")));
  }
}

}  // namespace

InteractionRecord parse_interaction_row(std::string_view line, std::size_t row, Vocabulary& users,
                                        Vocabulary& items) {
  const auto fields = split_csv_line(line);
  if (fields.size() != 4) throw Error(fmt::format("row {}: expected 4 fields, got {}", row, fields.size()));
  std::int64_t rating = 0, ts = 0;
  if (!parse_int64(fields[2], rating)) throw Error(fmt::format("row {}: non-integer rating '{}'", row, fields[2]));
  if (rating < 1 || rating > 5) throw Error(fmt::format("row {}: rating out of range ({})", row, rating));
  if (!parse_int64(fields[3], ts)) throw Error(fmt::format("row {}: non-integer timestamp '{}'", row, fields[3]));
  InteractionRecord r;
  r.user = users.intern(trim(fields[0]));
  r.item = items.intern(trim(fields[1]));
  r.rating = static_cast<int>(rating);
  r.timestamp = ts;
  r.row = row;
  return r;
}

Tables load_tables(const TablePaths& paths, const TableSchema& schema) {
  Tables t;
  t.items_info.emplace_back();

  // Items first so item ids follow the catalog order.
  {
    const auto lines = read_lines(paths.items);
    if (lines.empty()) throw Error(fmt::format("'{}' is empty", paths.items));
    expect_header(split_csv_line(lines[0]), {"item_id", "title", "category", "attrs"}, paths.items);
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (trim(lines[i]).empty()) continue;
      const auto f = split_csv_line(lines[i]);
      if (f.size() != 4) {
        ++t.malformed_rows;
        t.warnings.push_back(fmt::format("{}: row {} has {} fields", paths.items, i, f.size()));
        continue;
      }
      const int id = t.items.intern(trim(f[0]));
      if (static_cast<std::size_t>(id) < t.items_info.size())
        throw Error(fmt::format("{}: duplicate item '{}' at row {}", paths.items, f[0], i));
      ItemInfo info;
      info.title = trim(f[1]);
      info.category = trim(f[2]);
      info.category_id = info.category.empty() ? 0 : t.categories.intern(info.category);
      info.attrs = parse_attributes(f[3]);
      t.items_info.push_back(std::move(info));
    }
  }

  t.user_profiles.emplace_back();
  t.user_profile_text.emplace_back();
  if (schema.has_users_table) {
    const auto lines = read_lines(paths.users);
    if (lines.empty()) throw Error(fmt::format("'{}' is empty", paths.users));
    const auto header = split_csv_line(lines[0]);
    std::vector<std::string> want{"user_id"};
    want.insert(want.end(), schema.user_columns.begin(), schema.user_columns.end());
    expect_header(header, want, paths.users);
    t.profile_columns.assign(header.begin() + 1, header.end());
    t.profile_vocabs.resize(t.profile_columns.size());
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (trim(lines[i]).empty()) continue;
      const auto f = split_csv_line(lines[i]);
      if (f.size() != header.size()) {
        ++t.malformed_rows;
        t.warnings.push_back(fmt::format("{}: row {} has {} fields", paths.users, i, f.size()));
        continue;
      }
      const int id = t.users.intern(trim(f[0]));
      if (static_cast<std::size_t>(id) < t.user_profiles.size())
        throw Error(fmt::format("{}: duplicate user '{}' at row {}", paths.users, f[0], i));
      std::vector<int> ids;
      std::vector<std::string> text;
      for (std::size_t c = 1; c < f.size(); ++c) {
        const auto v = trim(f[c]);
        ids.push_back(v.empty() ? 0 : t.profile_vocabs[c - 1].intern(v));
        text.push_back(v);
      }
      t.user_profiles.push_back(std::move(ids));
      t.user_profile_text.push_back(std::move(text));
    }
  }

  {
    const auto lines = read_lines(paths.interactions);
    if (lines.empty()) throw Error(fmt::format("'{}' is empty", paths.interactions));
    expect_header(split_csv_line(lines[0]), {"user_id", "item_id", "rating", "timestamp"}, paths.interactions);
    std::set<std::tuple<int, int, std::int64_t>> seen;
    t.interactions.reserve(lines.size());
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (trim(lines[i]).empty()) continue;
      if (split_csv_line(lines[i]).size() != 4) {
        ++t.malformed_rows;
        t.warnings.push_back(fmt::format("{}: row {} is malformed", paths.interactions, i));
        continue;
      }
      auto r = parse_interaction_row(lines[i], i, t.users, t.items);
      if (!seen.emplace(r.user, r.item, r.timestamp).second)
        throw Error(fmt::format("row {}: duplicate (user, item, timestamp)", i));
      t.interactions.push_back(r);
    }
  }

  // Ids first seen in the interaction table get placeholder metadata.
  while (t.items_info.size() < static_cast<std::size_t>(t.items.size())) {
    ItemInfo info;
    info.title = t.items.key(static_cast<int>(t.items_info.size()));
    t.items_info.push_back(std::move(info));
  }
  const std::size_t columns = t.profile_columns.size();
  while (t.user_profiles.size() < static_cast<std::size_t>(t.users.size())) {
    t.user_profiles.emplace_back(columns, 0);
    t.user_profile_text.emplace_back(columns, "");
  }
  return t;
}

void binarize(std::vector<InteractionRecord>& records, int positive_threshold) {
  if (positive_threshold < 1 || positive_threshold > 5)
    throw Error(fmt::format("positive threshold {} outside [1,5]", positive_threshold));
  for (auto& r : records) r.label = r.rating >= positive_threshold ? 1 : 0;
}

std::size_t filter_min_interactions(std::vector<InteractionRecord>& records, int min_count) {
  if (min_count <= 1) return 0;
  const std::size_t before = records.size();
  while (true) {
    std::unordered_map<int, int> users, items;
    for (const auto& r : records) {
      ++users[r.user];
      ++items[r.item];
    }
    const auto keep_end = std::stable_partition(records.begin(), records.end(), [&](const InteractionRecord& r) {
      return users[r.user] >= min_count && items[r.item] >= min_count;
    });
    if (keep_end == records.end()) break;
    records.erase(keep_end, records.end());
  }
  return before - records.size();
}

void sort_chronologically(std::vector<InteractionRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const InteractionRecord& a, const InteractionRecord& b) {
    return std::tie(a.user, a.timestamp, a.row) < std::tie(b.user, b.timestamp, b.row);
  });
}

SampleSchema make_schema(const Tables& tables, std::size_t max_history) {
  SampleSchema s;
  s.user_fields.push_back("user_id");
  s.user_vocab_sizes.push_back(tables.users.size());
  for (std::size_t c = 0; c < tables.profile_columns.size(); ++c) {
    s.user_fields.push_back(tables.profile_columns[c]);
    s.user_vocab_sizes.push_back(tables.profile_vocabs[c].size());
  }
  s.item_vocab = tables.items.size();
  s.category_vocab = tables.categories.size();
  s.max_history = max_history;
  return s;
}

std::vector<std::vector<InteractionRecord>> group_by_user(const std::vector<InteractionRecord>& sorted,
                                                          int user_count) {
  std::vector<std::vector<InteractionRecord>> out(static_cast<std::size_t>(std::max(user_count, 1)));
  for (const auto& r : sorted) {
    if (r.user <= 0 || r.user >= user_count) throw Error(fmt::format("user id {} out of range", r.user));
    out[static_cast<std::size_t>(r.user)].push_back(r);
  }
  return out;
}

std::vector<Sample> build_samples(const std::vector<InteractionRecord>& records, const Tables& tables,
                                  std::size_t max_history) {
  std::vector<Sample> out;
  out.reserve(records.size());
  std::size_t begin = 0;
  while (begin < records.size()) {
    std::size_t end = begin;
    while (end < records.size() && records[end].user == records[begin].user) ++end;
    const int user = records[begin].user;
    std::vector<int> features{user};
    if (static_cast<std::size_t>(user) < tables.user_profiles.size()) {
      const auto& p = tables.user_profiles[static_cast<std::size_t>(user)];
      features.insert(features.end(), p.begin(), p.end());
    }
    for (std::size_t i = begin; i < end; ++i) {
      const auto& r = records[i];
      Sample s;
      s.user = user;
      s.user_features = features;
      s.target_item = r.item;
      s.target_category = tables.item(r.item).category_id;
      s.label = r.label;
      s.timestamp = r.timestamp;
      s.position = i - begin;
      // Strictly earlier interactions only; equal timestamps are not history.
      std::size_t first = begin;
      std::size_t last = i;
      while (last > begin && records[last - 1].timestamp >= r.timestamp) --last;
      if (last - first > max_history) first = last - max_history;
      for (std::size_t j = first; j < last; ++j) {
        const auto& h = records[j];
        s.history.push_back({h.item, tables.item(h.item).category_id, h.label, h.timestamp});
      }
      out.push_back(std::move(s));
    }
    begin = end;
  }
  return out;
}

std::unordered_map<int, Partition> partition_users(std::vector<int> users, double train_fraction,
                                                   std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw Error(fmt::format("train fraction {} outside (0,1)", train_fraction));
  std::sort(users.begin(), users.end());
  users.erase(std::unique(users.begin(), users.end()), users.end());
  if (users.size() < 2) throw Error("split_by_user needs at least 2 users");
  Rng rng(derive_seed(seed, "split_by_user"));
  rng.shuffle(users);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(users.size())));
  std::unordered_map<int, Partition> out;
  for (std::size_t i = 0; i < users.size(); ++i)
    out.emplace(users[i], i < n_train ? Partition::kTrain : Partition::kTest);
  return out;
}

DatasetSplit split_by_user(const std::vector<Sample>& samples, double train_fraction, std::uint64_t seed) {
  std::vector<int> users;
  users.reserve(samples.size());
  for (const auto& s : samples) users.push_back(s.user);
  DatasetSplit split;
  split.user_partition = partition_users(std::move(users), train_fraction, seed);
  for (const auto& s : samples) {
    if (split.user_partition.at(s.user) == Partition::kTrain) split.train.push_back(s);
    else split.test.push_back(s);
  }
  return split;
}

}  // namespace reki::corpus
