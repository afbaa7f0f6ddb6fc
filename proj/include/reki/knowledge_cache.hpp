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

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "reki/keys.hpp"
#include "reki/prompting.hpp"

namespace reki {

class LlmClient;

struct KnowledgeText {
  KeyKind key_kind = KeyKind::kItem;
  std::string key;
  std::string text;
  std::uint64_t prompt_hash = 0;
  std::string model_id;
  std::int64_t created_at = 0;
};

std::string to_json_line(const KnowledgeText& k);
KnowledgeText knowledge_from_json_line(const std::string& line);

/// Append-only JSON-lines store of generated knowledge with an adjacent
/// `<path>.idx` file mapping (key_kind, key, prompt_hash) to byte offsets.
/// A missing or stale index is rebuilt from the data file on open.
class KnowledgeCache {
 public:
  explicit KnowledgeCache(std::string path);

  std::optional<KnowledgeText> find(KeyKind kind, const std::string& key, std::uint64_t prompt_hash) const;
  /// Appends and flushes both files. A (kind, key, hash) triple that is
  /// already present is left untouched.
  void put(const KnowledgeText& entry);
  std::size_t size() const;
  const std::string& path() const { return path_; }

  /// Every entry, in file order.
  std::vector<KnowledgeText> entries() const;

 private:
  using IndexKey = std::tuple<int, std::string, std::uint64_t>;
  void rebuild_index();

  std::string path_;
  std::string index_path_;
  std::map<IndexKey, std::uint64_t> index_;
  mutable std::mutex mutex_;
};

struct KnowledgeRequest {
  KeyKind kind = KeyKind::kItem;
  std::string key;
  prompting::PromptText prompt;
};

struct GenerationOptions {
  std::size_t parallelism = 4;  // max requests in flight
  int max_attempts = 3;
  std::chrono::milliseconds backoff{200};  // doubled after every failed attempt
  std::function<std::int64_t()> clock;     // seconds; defaults to system clock
};

struct GenerationFailure {
  KeyKind kind = KeyKind::kItem;
  std::string key;
  std::string reason;
};

struct GenerationResult {
  /// Successful texts in request order (failed requests are skipped).
  std::vector<KnowledgeText> texts;
  std::size_t call_count = 0;  // requests answered by the client (cache misses)
  std::size_t hits = 0;
  std::size_t attempts = 0;  // raw client invocations, retries included
  std::vector<GenerationFailure> failures;
};

GenerationResult generate_knowledge(const std::vector<KnowledgeRequest>& requests, LlmClient& client,
                                    KnowledgeCache& cache, const GenerationOptions& options = {});

}  // namespace reki
