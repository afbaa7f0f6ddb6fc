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

#include "reki/prompting.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <nlohmann/json.hpp>

#include "reki/common.hpp"
#include "reki/llm_client.hpp"

namespace reki::prompting {

namespace {

const std::map<std::string, std::vector<std::string>>& presets() {
  static const std::map<std::string, std::vector<std::string>> table{
      {"movie", {"genre", "actors", "directors", "theme", "mood", "production quality", "critical acclaim"}},
      {"news", {"topic", "source", "region", "style", "freshness", "clarity", "impact"}},
  };
  return table;
}

std::string strip_bullet(std::string s) {
  s = trim(s);
  // "1.", "2)", "-", "*", "•" prefixes.
  std::size_t i = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')')) s = s.substr(i + 1);
  s = trim(s);
  while (!s.empty() && (s[0] == '-' || s[0] == '*')) s = trim(s.substr(1));
  if (s.rfind("\xe2\x80\xa2", 0) == 0) s = trim(s.substr(3));
  while (!s.empty() && (s.back() == '.' || s.back() == ';')) s.pop_back();
  return trim(s);
}

PromptText finish(PromptKind kind, std::string key, std::string rendered, const PromptTemplates& t) {
  PromptText p;
  p.kind = kind;
  p.key = std::move(key);
  p.rendered = std::move(rendered);
  p.template_version = t.version;
  p.content_hash = fnv1a64(p.rendered);
  return p;
}

void require_factors(const FactorSet& factors) {
  if (factors.factors.empty()) throw Error("prompt needs a non-empty factor list");
}

std::string scenario_of(const FactorSet& f) { return f.scenario.empty() ? std::string("item") : f.scenario; }

}  // namespace

std::string_view to_string(PromptKind kind) {
  switch (kind) {
    case PromptKind::kUser: return "user";
    case PromptKind::kItem: return "item";
    case PromptKind::kSet: return "set";
    case PromptKind::kFactorElicitation: return "factor_elicitation";
  }
  return "unknown";
}

FactorSet normalize_factors(std::string scenario, const std::vector<std::string>& raw) {
  FactorSet out;
  out.scenario = std::move(scenario);
  for (const auto& r : raw) {
    auto f = to_lower(trim(r));
    if (f.empty()) continue;
    if (std::find(out.factors.begin(), out.factors.end(), f) == out.factors.end()) out.factors.push_back(f);
  }
  if (out.factors.size() < kMinFactors || out.factors.size() > kMaxFactors) {
    throw Error(fmt::format("factor set for '{}' has {} factors; need {}..{}", out.scenario, out.factors.size(),
                            kMinFactors, kMaxFactors));
  }
  return out;
}

std::optional<std::vector<std::string>> preset_factors(const std::string& scenario) {
  const auto it = presets().find(to_lower(scenario));
  if (it == presets().end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> parse_factor_list(const std::string& response) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    auto f = strip_bullet(current);
    if (!f.empty()) out.push_back(f);
    current.clear();
  };
  for (char c : response) {
    if (c == ',' || c == '\n') flush();
    else current += c;
  }
  flush();
  if (out.empty()) throw Error(fmt::format("unparseable factor list: '{}'", response));
  for (const auto& f : out) {
    const auto words = std::count(f.begin(), f.end(), ' ') + 1;
    if (words > 4 || f.size() > 40)
      throw Error(fmt::format("unparseable factor list (entry '{}'): '{}'", f, response));
  }
  return out;
}

FactorSet elicit_factors(const std::string& scenario, LlmClient* client, const ExpertOverrides& overrides) {
  std::vector<std::string> proposed;
  if (!overrides.replace.empty()) {
    proposed = overrides.replace;
  } else {
    if (client == nullptr) throw Error("factor elicitation needs an LLM client or a full override list");
    const auto prompt = build_factor_prompt(scenario);
    proposed = parse_factor_list(client->complete(prompt.rendered));
  }
  std::vector<std::string> dropped;
  for (const auto& d : overrides.drop) dropped.push_back(to_lower(trim(d)));
  std::vector<std::string> merged;
  for (const auto& p : proposed) {
    auto f = to_lower(trim(p));
    if (std::find(dropped.begin(), dropped.end(), f) == dropped.end()) merged.push_back(std::move(f));
  }
  merged.insert(merged.end(), overrides.add.begin(), overrides.add.end());
  if (merged.empty()) throw Error(fmt::format("factor set for '{}' is empty after overrides", scenario));
  return normalize_factors(scenario, merged);
}

std::string factor_set_to_json(const FactorSet& set) {
  nlohmann::json j{{"scenario", set.scenario}, {"factors", set.factors}};
  return j.dump(2) + "\n";
}

FactorSet factor_set_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    return normalize_factors(j.at("scenario").get<std::string>(), j.at("factors").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(fmt::format("bad factor file: {}", e.what()));
  }
}

std::uint64_t PromptText::cache_digest() const {
  return fnv1a64(rendered, fnv1a64(template_version + '\n'));
}

PromptText build_user_prompt(const std::string& key, const std::string& profile,
                             const std::vector<HistoryEntry>& history, const FactorSet& factors,
                             const PromptLimits& limits, const PromptTemplates& templates) {
  require_factors(factors);
  if (history.empty()) throw Error(fmt::format("user '{}': insufficient behavior evidence", key));
  if (key.empty()) throw Error("user prompt needs a key");
  const std::size_t keep = std::min(history.size(), std::max<std::size_t>(limits.user_history, 1));
  std::string lines;
  std::size_t n = 0;
  for (std::size_t i = history.size() - keep; i < history.size(); ++i) {
    if (n > 0) lines += '\n';
    lines += fmt::format("{}. \"{}\" ({})", ++n, history[i].title, history[i].liked ? "liked" : "disliked");
  }
  auto rendered = fmt::format(fmt::runtime(templates.user), fmt::arg("scenario", scenario_of(factors)),
                              fmt::arg("profile", profile.empty() ? std::string("unknown") : profile),
                              fmt::arg("history", lines), fmt::arg("factors", fmt::join(factors.factors, ", ")));
  return finish(PromptKind::kUser, key, std::move(rendered), templates);
}

PromptText build_item_prompt(const std::string& key, const std::string& item_description,
                             const FactorSet& factors, const PromptTemplates& templates) {
  require_factors(factors);
  if (key.empty()) throw Error("item prompt needs a key");
  if (trim(item_description).empty()) throw Error(fmt::format("item '{}' has no description", key));
  auto rendered = fmt::format(fmt::runtime(templates.item), fmt::arg("scenario", scenario_of(factors)),
                              fmt::arg("item", item_description),
                              fmt::arg("factors", fmt::join(factors.factors, ", ")));
  return finish(PromptKind::kItem, key, std::move(rendered), templates);
}

PromptText build_set_prompt(const std::string& key, std::vector<std::string> item_titles, const FactorSet& factors,
                            const PromptLimits& limits, const PromptTemplates& templates) {
  require_factors(factors);
  if (item_titles.size() < 2)
    throw Error(fmt::format("set prompt '{}' needs at least 2 items, got {}", key, item_titles.size()));
  if (item_titles.size() > limits.set_size)
    throw Error(fmt::format("set prompt '{}' has {} items; cap is {}", key, item_titles.size(), limits.set_size));
  std::sort(item_titles.begin(), item_titles.end());
  std::string lines;
  for (std::size_t i = 0; i < item_titles.size(); ++i) {
    if (i > 0) lines += '\n';
    lines += fmt::format("{}. \"{}\"", i + 1, item_titles[i]);
  }
  auto rendered = fmt::format(fmt::runtime(templates.set), fmt::arg("scenario", scenario_of(factors)),
                              fmt::arg("count", item_titles.size()), fmt::arg("items", lines),
                              fmt::arg("factors", fmt::join(factors.factors, ", ")));
  return finish(PromptKind::kSet, key, std::move(rendered), templates);
}

PromptText build_factor_prompt(const std::string& scenario, const PromptTemplates& templates) {
  auto rendered = fmt::format(fmt::runtime(templates.factor_elicitation), fmt::arg("scenario", scenario));
  return finish(PromptKind::kFactorElicitation, "", std::move(rendered), templates);
}

}  // namespace reki::prompting
