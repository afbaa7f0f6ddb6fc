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

#include "reki/knowledge_cache.hpp"

#include <filesystem>
#include <fstream>
#include <future>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "reki/common.hpp"
#include "reki/llm_client.hpp"

namespace reki {

std::string to_json_line(const KnowledgeText& k) {
  const nlohmann::json j{
      {"key_kind", std::string(to_string(k.key_kind))},
      {"key", k.key},
      {"text", k.text},
      {"prompt_hash", hex64(k.prompt_hash)},
      {"model_id", k.model_id},
      {"created_at", k.created_at},
  };
  return j.dump();
}

KnowledgeText knowledge_from_json_line(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    KnowledgeText k;
    k.key_kind = key_kind_from_string(j.at("key_kind").get<std::string>());
    k.key = j.at("key").get<std::string>();
    k.text = j.at("text").get<std::string>();
    k.prompt_hash = parse_hex64(j.at("prompt_hash").get<std::string>());
    k.model_id = j.at("model_id").get<std::string>();
    k.created_at = j.at("created_at").get<std::int64_t>();
    return k;
  } catch (const nlohmann::json::exception& e) {
    throw Error(fmt::format("bad knowledge cache line: {}", e.what()));
  }
}

namespace {

std::optional<std::string> read_line_at(const std::string& path, std::uint64_t offset) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  in.seekg(static_cast<std::streamoff>(offset));
  std::string line;
  if (!std::getline(in, line)) return std::nullopt;
  return line;
}

std::string index_line(std::uint64_t offset, const KnowledgeText& k) {
  return fmt::format("{} {} {} {}\n", offset, hex64(k.prompt_hash), static_cast<int>(k.key_kind), k.key);
}

}  // namespace

KnowledgeCache::KnowledgeCache(std::string path) : path_(std::move(path)), index_path_(path_ + ".idx") {
  const auto parent = std::filesystem::path(path_).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  if (!std::filesystem::exists(path_)) {
    std::ofstream(path_, std::ios::binary);
    std::ofstream(index_path_, std::ios::binary | std::ios::trunc);
    return;
  }
  const auto data_size = std::filesystem::file_size(path_);
  bool ok = std::filesystem::exists(index_path_);
  std::uint64_t last_end = 0;
  std::uint64_t max_offset = 0;
  if (ok) {
    std::ifstream in(index_path_);
    std::string line;
    while (ok && std::getline(in, line)) {
      std::istringstream ls(line);
      std::uint64_t offset = 0;
      std::string hash;
      int kind = 0;
      ls >> offset >> hash >> kind;
      std::string key;
      std::getline(ls, key);
      if (!key.empty() && key[0] == ' ') key.erase(0, 1);
      if (ls.fail() || key.empty()) {
        ok = false;
        break;
      }
      try {
        index_[{kind, key, parse_hex64(hash)}] = offset;
      } catch (const Error&) {
        ok = false;
        break;
      }
      max_offset = std::max(max_offset, offset);
    }
    if (ok && !index_.empty()) {
      const auto data = read_line_at(path_, max_offset);
      if (data) last_end = max_offset + data->size() + 1;
      else ok = false;
    }
  }
  // The newest indexed record must end exactly where the data file ends.
  if (!ok || last_end != data_size) rebuild_index();
}

void KnowledgeCache::rebuild_index() {
  index_.clear();
  std::ifstream in(path_, std::ios::binary);
  std::ofstream idx(index_path_, std::ios::binary | std::ios::trunc);
  std::string line;
  std::uint64_t offset = 0;
  std::uint64_t good_end = 0;
  while (std::getline(in, line)) {
    const bool complete = !in.eof();
    try {
      if (!complete) throw Error("truncated");
      const auto k = knowledge_from_json_line(line);
      index_.emplace(IndexKey{static_cast<int>(k.key_kind), k.key, k.prompt_hash}, offset);
      idx << index_line(offset, k);
      good_end = offset + line.size() + 1;
    } catch (const Error&) {
      break;  // torn tail from an interrupted append; truncated below
    }
    offset += line.size() + 1;
  }
  in.close();
  if (std::filesystem::file_size(path_) != good_end) std::filesystem::resize_file(path_, good_end);
}

std::optional<KnowledgeText> KnowledgeCache::find(KeyKind kind, const std::string& key,
                                                  std::uint64_t prompt_hash) const {
  std::lock_guard lock(mutex_);
  const auto it = index_.find({static_cast<int>(kind), key, prompt_hash});
  if (it == index_.end()) return std::nullopt;
  const auto line = read_line_at(path_, it->second);
  if (!line) return std::nullopt;
  auto k = knowledge_from_json_line(*line);
  if (k.key_kind != kind || k.key != key || k.prompt_hash != prompt_hash) return std::nullopt;
  return k;
}

void KnowledgeCache::put(const KnowledgeText& entry) {
  if (entry.text.empty()) throw Error("refusing to cache empty knowledge text");
  std::lock_guard lock(mutex_);
  const IndexKey key{static_cast<int>(entry.key_kind), entry.key, entry.prompt_hash};
  if (index_.count(key)) return;
  const auto offset = std::filesystem::file_size(path_);
  {
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    out << to_json_line(entry) << '\n';
    out.flush();
    if (!out) throw Error(fmt::format("write to '{}' failed", path_));
  }
  {
    std::ofstream idx(index_path_, std::ios::binary | std::ios::app);
    idx << index_line(offset, entry);
    idx.flush();
  }
  index_.emplace(key, offset);
}

std::size_t KnowledgeCache::size() const {
  std::lock_guard lock(mutex_);
  return index_.size();
}

std::vector<KnowledgeText> KnowledgeCache::entries() const {
  std::lock_guard lock(mutex_);
  std::vector<KnowledgeText> out;
  std::ifstream in(path_, std::ios::binary);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(knowledge_from_json_line(line));
  return out;
}

namespace {

struct Attempt {
  std::optional<std::string> text;
  std::string error;
  std::size_t attempts = 0;
};

Attempt call_with_retry(LlmClient& client, const std::string& prompt, const GenerationOptions& options) {
  Attempt a;
  auto delay = options.backoff;
  const int max_attempts = std::max(1, options.max_attempts);
  for (int i = 0; i < max_attempts; ++i) {
    ++a.attempts;
    try {
      auto text = client.complete(prompt);
      if (!trim(text).empty()) {
        a.text = std::move(text);
        return a;
      }
      a.error = "empty response";
    } catch (const std::exception& e) {
      a.error = e.what();
    }
    if (i + 1 < max_attempts && delay.count() > 0) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
  }
  return a;
}

}  // namespace

GenerationResult generate_knowledge(const std::vector<KnowledgeRequest>& requests, LlmClient& client,
                                    KnowledgeCache& cache, const GenerationOptions& options) {
  GenerationResult result;
  const auto clock = options.clock ? options.clock : [] {
    return static_cast<std::int64_t>(
        std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
            .count());
  };
  const std::size_t width = std::max<std::size_t>(1, options.parallelism);

  std::size_t begin = 0;
  while (begin < requests.size()) {
    const std::size_t end = std::min(requests.size(), begin + width);
    struct Slot {
      std::size_t index;
      std::future<Attempt> future;
    };
    std::vector<Slot> slots;
    std::vector<std::optional<KnowledgeText>> chunk(end - begin);
    std::set<std::tuple<int, std::string, std::uint64_t>> pending;
    std::vector<std::size_t> duplicates;

    for (std::size_t i = begin; i < end; ++i) {
      const auto& r = requests[i];
      const auto digest = r.prompt.cache_digest();
      if (auto hit = cache.find(r.kind, r.key, digest)) {
        chunk[i - begin] = std::move(hit);
        ++result.hits;
        continue;
      }
      if (!pending.emplace(static_cast<int>(r.kind), r.key, digest).second) {
        duplicates.push_back(i);
        continue;
      }
      const std::string* prompt = &r.prompt.rendered;
      if (width == 1) {
        std::promise<Attempt> p;
        p.set_value(call_with_retry(client, *prompt, options));
        slots.push_back({i, p.get_future()});
      } else {
        slots.push_back({i, std::async(std::launch::async,
                                       [&client, prompt, &options] { return call_with_retry(client, *prompt, options); })});
      }
    }

    // Single writer: results are appended in request order.
    for (auto& slot : slots) {
      const auto& r = requests[slot.index];
      auto attempt = slot.future.get();
      result.attempts += attempt.attempts;
      if (!attempt.text) {
        result.failures.push_back({r.kind, r.key, attempt.error});
        continue;
      }
      KnowledgeText k;
      k.key_kind = r.kind;
      k.key = r.key;
      k.text = std::move(*attempt.text);
      k.prompt_hash = r.prompt.cache_digest();
      k.model_id = client.model_id();
      k.created_at = clock();
      cache.put(k);
      ++result.call_count;
      chunk[slot.index - begin] = std::move(k);
    }
    for (const auto i : duplicates) {
      const auto& r = requests[i];
      if (auto hit = cache.find(r.kind, r.key, r.prompt.cache_digest())) {
        chunk[i - begin] = std::move(hit);
        ++result.hits;
      } else {
        result.failures.push_back({r.kind, r.key, "duplicate of a failed request"});
      }
    }
    for (auto& c : chunk)
      if (c) result.texts.push_back(std::move(*c));
    begin = end;
  }
  return result;
}

}  // namespace reki
