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

#include "reki/llm_client.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <sstream>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "reki/common.hpp"

namespace reki {

namespace {

constexpr std::array<std::string_view, 48> kFiller = {
    "the",     "and",      "with",    "overall", "often",    "which",   "also",       "a",
    "of",      "this",     "that",    "tends",   "to",       "be",      "quite",      "generally",
    "in",      "terms",    "notable", "clear",   "sense",    "strong",  "across",     "several",
    "aspects", "it",       "is",      "likely",  "somewhat", "more",    "than",       "typical",
    "for",     "audience", "overall", "such",    "as",       "while",   "especially", "rather",
    "fairly",  "distinct", "broad",   "appeal",  "may",      "well",    "consistent", "various"};

constexpr std::size_t kTargetTokens = 550;
constexpr std::size_t kLengthJitter = 60;

enum class Shape { kUser, kItem, kSet, kFactors, kUnknown };

struct ParsedPrompt {
  Shape shape = Shape::kUnknown;
  std::vector<std::string> factors;
  std::vector<std::string> subjects;  // titles or the description
  std::string profile;
};

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

// `12. "Title" (liked)` -> {"Title", "liked"}; `3. "Title"` -> {"Title", ""}.
bool parse_enumerated(const std::string& line, std::string& title, std::string& marker) {
  std::size_t i = 0;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i == 0 || line.compare(i, 3, ". \"") != 0) return false;
  const auto open = i + 2;
  const auto close = line.rfind('"');
  if (close == std::string::npos || close <= open) return false;
  title = line.substr(open + 1, close - open - 1);
  marker.clear();
  const auto paren = line.find('(', close);
  if (paren != std::string::npos) {
    const auto end = line.find(')', paren);
    marker = line.substr(paren + 1, end == std::string::npos ? std::string::npos : end - paren - 1);
  }
  return true;
}

ParsedPrompt parse_prompt(const std::string& prompt) {
  ParsedPrompt p;
  if (prompt.find("comma-separated list") != std::string::npos) {
    p.shape = Shape::kFactors;
    return p;
  }
  for (const auto& line : lines_of(prompt)) {
    if (line.rfind("Factors: ", 0) == 0) {
      auto body = line.substr(9);
      while (!body.empty() && body.back() == '.') body.pop_back();
      for (auto& f : split(body, ',')) {
        auto t = trim(f);
        if (!t.empty()) p.factors.push_back(t);
      }
    } else if (line.rfind("User profile: ", 0) == 0) {
      p.shape = Shape::kUser;
      p.profile = trim(line.substr(14));
      if (!p.profile.empty() && p.profile.back() == '.') p.profile.pop_back();
    } else if (line.rfind("Item: ", 0) == 0) {
      p.shape = Shape::kItem;
      p.subjects.push_back(trim(line.substr(6)));
    } else if (line.find("form one group") != std::string::npos) {
      p.shape = Shape::kSet;
    } else {
      std::string title, marker;
      if (parse_enumerated(line, title, marker)) {
        // Users: only liked titles count as preference evidence.
        if (marker.empty() || marker == "liked") p.subjects.push_back(title);
      }
    }
  }
  return p;
}

void append_words(std::vector<std::string>& out, const std::string& text) {
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
}

std::vector<std::string> facts_about(const std::string& subject, const WorldKnowledge* knowledge) {
  std::vector<std::string> out;
  if (knowledge != nullptr) {
    auto it = knowledge->find(to_lower(subject));
    if (it == knowledge->end()) {
      // Item descriptions look like "Title, Category"; try the title part.
      const auto comma = subject.find(", ");
      if (comma != std::string::npos) it = knowledge->find(to_lower(subject.substr(0, comma)));
    }
    if (it != knowledge->end()) out = it->second;
  }
  return out;
}

}  // namespace

std::size_t count_tokens(const std::string& text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

MockLlm::MockLlm(std::uint64_t seed, std::shared_ptr<const WorldKnowledge> knowledge)
    : seed_(seed), knowledge_(std::move(knowledge)) {}

std::string MockLlm::complete(const std::string& prompt) {
  const auto parsed = parse_prompt(prompt);
  if (parsed.shape == Shape::kFactors) return "genre, style, quality, popularity, mood";

  // Facts: the subject text itself plus anything the world table adds.
  std::vector<std::string> facts;
  if (parsed.shape == Shape::kItem) {
    for (const auto& s : parsed.subjects) append_words(facts, s);
  }
  for (const auto& s : parsed.subjects) {
    const auto extra = facts_about(s, knowledge_.get());
    facts.insert(facts.end(), extra.begin(), extra.end());
  }
  if (parsed.shape == Shape::kUser && !parsed.profile.empty()) append_words(facts, parsed.profile);

  std::vector<std::string> factors = parsed.factors;
  if (factors.empty()) factors.push_back("overall");

  Rng rng(mix64(fnv1a64(prompt) ^ mix64(seed_)));
  const std::size_t target = kTargetTokens - kLengthJitter + static_cast<std::size_t>(rng.below(2 * kLengthJitter + 1));

  std::string lead;
  switch (parsed.shape) {
    case Shape::kUser: lead = "this user tends to enjoy"; break;
    case Shape::kSet: lead = "these titles commonly share"; break;
    default: lead = "this title is characterised by"; break;
  }
  std::vector<std::string> passages;
  std::size_t used = 0;
  for (const auto& f : factors) {
    std::string p = fmt::format("Regarding {}: {}", f, lead);
    for (const auto& fact : facts) p += " " + fact;
    p += ".";
    used += count_tokens(p);
    passages.push_back(std::move(p));
  }
  const std::size_t filler = target > used ? target - used : 0;
  for (std::size_t i = 0; i < passages.size(); ++i) {
    const std::size_t n = filler / passages.size() + (i < filler % passages.size() ? 1 : 0);
    for (std::size_t k = 0; k < n; ++k) {
      passages[i] += ' ';
      passages[i] += kFiller[static_cast<std::size_t>(rng.below(kFiller.size()))];
    }
  }
  std::string out;
  for (std::size_t i = 0; i < passages.size(); ++i) {
    if (i > 0) out += '\n';
    out += passages[i];
  }
  return out;
}

std::string mock_llm(const std::string& prompt, std::uint64_t seed) { return MockLlm(seed).complete(prompt); }

UrlParts split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw Error(fmt::format("endpoint '{}' lacks a scheme", url));
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

RemoteLlm::RemoteLlm(RemoteLlmConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty()) throw Error("remote LLM client needs llm.endpoint");
  if (config_.model.empty()) throw Error("remote LLM client needs llm.model");
}

std::string RemoteLlm::complete(const std::string& prompt) {
  const auto url = split_url(config_.endpoint);
  httplib::Client client(url.origin);
  client.set_connection_timeout(config_.timeout_seconds, 0);
  client.set_read_timeout(config_.timeout_seconds, 0);
  if (!config_.api_key.empty()) client.set_bearer_token_auth(config_.api_key);
  const nlohmann::json body{
      {"model", config_.model},
      {"temperature", config_.temperature},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
  };
  const auto res = client.Post(url.path, body.dump(), "application/json");
  if (!res) throw Error(fmt::format("LLM request failed: {}", httplib::to_string(res.error())));
  if (res->status != 200) throw Error(fmt::format("LLM endpoint returned HTTP {}", res->status));
  try {
    const auto j = nlohmann::json::parse(res->body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(fmt::format("malformed LLM response: {}", e.what()));
  }
}

}  // namespace reki
