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
#include <vector>

namespace reki {
class LlmClient;
}

namespace reki::prompting {

/// Scenario-specific factors that every knowledge prompt enumerates.
struct FactorSet {
  std::string scenario;
  std::vector<std::string> factors;
};

inline constexpr std::size_t kMinFactors = 3;
inline constexpr std::size_t kMaxFactors = 12;

/// Lowercases, trims and deduplicates (first occurrence wins), then checks
/// the size bounds. Throws reki::Error on violation.
FactorSet normalize_factors(std::string scenario, const std::vector<std::string>& raw);

/// Expert-curated factor lists for the scenarios we ship presets for.
std::optional<std::vector<std::string>> preset_factors(const std::string& scenario);

struct ExpertOverrides {
  /// When non-empty, replaces whatever the LLM proposed (no call is made).
  std::vector<std::string> replace;
  std::vector<std::string> drop;
  std::vector<std::string> add;

  bool empty() const { return replace.empty() && drop.empty() && add.empty(); }
};

/// Splits an LLM answer on commas and newlines, stripping bullets and
/// numbering. Throws reki::Error carrying the raw text when nothing usable
/// remains or an entry reads like a sentence.
std::vector<std::string> parse_factor_list(const std::string& response);

FactorSet elicit_factors(const std::string& scenario, LlmClient* client, const ExpertOverrides& overrides);

std::string factor_set_to_json(const FactorSet& set);
FactorSet factor_set_from_json(const std::string& text);

enum class PromptKind { kUser, kItem, kSet, kFactorElicitation };

struct PromptText {
  PromptKind kind = PromptKind::kItem;
  std::string rendered;
  std::string key;
  std::string template_version;
  std::uint64_t content_hash = 0;  // digest of `rendered`

  /// Cache identity: digest over the template version and the rendered text,
  /// so a template edit invalidates previously generated knowledge.
  std::uint64_t cache_digest() const;
};

/// Versioned template set. Placeholders use fmt named-argument syntax.
struct PromptTemplates {
  std::string version;
  std::string user;
  std::string item;
  std::string set;
  std::string factor_elicitation;

  static const PromptTemplates& builtin();
};

struct HistoryEntry {
  std::string title;
  bool liked = false;
};

struct PromptLimits {
  std::size_t user_history = 20;  // most recent entries kept in the user prompt
  std::size_t set_size = 80;      // upper bound on items in a set prompt
};

PromptText build_user_prompt(const std::string& key, const std::string& profile,
                             const std::vector<HistoryEntry>& history, const FactorSet& factors,
                             const PromptLimits& limits = {},
                             const PromptTemplates& templates = PromptTemplates::builtin());

PromptText build_item_prompt(const std::string& key, const std::string& item_description,
                             const FactorSet& factors,
                             const PromptTemplates& templates = PromptTemplates::builtin());

/// Titles are sorted lexicographically before rendering so a set prompt does
/// not depend on member order.
PromptText build_set_prompt(const std::string& key, std::vector<std::string> item_titles,
                            const FactorSet& factors, const PromptLimits& limits = {},
                            const PromptTemplates& templates = PromptTemplates::builtin());

PromptText build_factor_prompt(const std::string& scenario,
                               const PromptTemplates& templates = PromptTemplates::builtin());

std::string_view to_string(PromptKind kind);

}  // namespace reki::prompting
