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
#include <numeric>
#include <string>
#include <vector>

#include "reki/common.hpp"
#include "reki/llm_client.hpp"
#include "reki/prompting.hpp"

namespace reki::prompting {
namespace {

class FixedLlm final : public LlmClient {
 public:
  explicit FixedLlm(std::string answer) : answer_(std::move(answer)) {}
  std::string complete(const std::string&) override {
    ++calls;
    return answer_;
  }
  std::string model_id() const override { return "fixed"; }
  int calls = 0;

 private:
  std::string answer_;
};

FactorSet movie_factors() { return normalize_factors("movie", {"genre", "mood", "actors"}); }

std::size_t occurrences(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + needle.size())) ++n;
  return n;
}

TEST(Factors, NormalizeLowercasesTrimsAndDeduplicates) {
  const auto set = normalize_factors("movie", {" Genre", "MOOD ", "genre", "Actors"});
  EXPECT_EQ(set.factors, (std::vector<std::string>{"genre", "mood", "actors"}));
}

TEST(Factors, SizeBounds) {
  EXPECT_THROW(normalize_factors("movie", {"a", "b"}), Error);
  EXPECT_THROW(normalize_factors("movie", {"a", "A", "b"}), Error);
  std::vector<std::string> many;
  for (int i = 0; i < 13; ++i) many.push_back("f" + std::to_string(i));
  EXPECT_THROW(normalize_factors("movie", many), Error);
  many.pop_back();
  EXPECT_EQ(normalize_factors("movie", many).factors.size(), 12u);
}

TEST(Factors, MoviePresetThroughOverrides) {
  const auto preset = preset_factors("movie");
  ASSERT_TRUE(preset.has_value());
  const auto set = elicit_factors("movie", nullptr, ExpertOverrides{.replace = *preset});
  EXPECT_EQ(set.factors, (std::vector<std::string>{"genre", "actors", "directors", "theme", "mood",
                                                   "production quality", "critical acclaim"}));
}

TEST(Factors, NewsPresetThroughOverrides) {
  const auto set = elicit_factors("news", nullptr, ExpertOverrides{.replace = *preset_factors("news")});
  EXPECT_EQ(set.factors,
            (std::vector<std::string>{"topic", "source", "region", "style", "freshness", "clarity", "impact"}));
}

TEST(Factors, UnknownScenarioHasNoPreset) { EXPECT_FALSE(preset_factors("podcasts").has_value()); }

TEST(Factors, ParsedFromClient) {
  FixedLlm llm("a, b, c");
  const auto set = elicit_factors("movie", &llm, {});
  EXPECT_EQ(set.factors, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(llm.calls, 1);
}

TEST(Factors, ReplaceSkipsTheClient) {
  FixedLlm llm("x, y, z");
  elicit_factors("movie", &llm, ExpertOverrides{.replace = {"a", "b", "c"}});
  EXPECT_EQ(llm.calls, 0);
}

TEST(Factors, DropAndAdd) {
  FixedLlm llm("genre, style, quality, popularity");
  const auto set = elicit_factors("movie", &llm, ExpertOverrides{.drop = {"Style"}, .add = {"mood"}});
  EXPECT_EQ(set.factors, (std::vector<std::string>{"genre", "quality", "popularity", "mood"}));
}

TEST(Factors, EmptyAfterOverridesThrows) {
  FixedLlm llm("a, b, c");
  EXPECT_THROW(elicit_factors("movie", &llm, ExpertOverrides{.drop = {"a", "b", "c"}}), Error);
}

TEST(Factors, NoClientNoOverridesThrows) { EXPECT_THROW(elicit_factors("movie", nullptr, {}), Error); }

TEST(Factors, ParseStripsBulletsAndNumbering) {
  EXPECT_EQ(parse_factor_list("1. Genre\n2) Mood\n- actors\n* theme, style"),
            (std::vector<std::string>{"Genre", "Mood", "actors", "theme", "style"}));
}

TEST(Factors, ParseErrorCarriesRawText) {
  const std::string raw = "I think the most important thing is really the overall vibe of the film";
  try {
    parse_factor_list(raw);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("overall vibe"), std::string::npos);
  }
  EXPECT_THROW(parse_factor_list(" , \n "), Error);
}

TEST(Factors, JsonRoundTrip) {
  const auto set = movie_factors();
  const auto back = factor_set_from_json(factor_set_to_json(set));
  EXPECT_EQ(back.scenario, "movie");
  EXPECT_EQ(back.factors, set.factors);
  EXPECT_THROW(factor_set_from_json("{\"scenario\": 1}"), Error);
}

TEST(UserPrompt, GoldenRendering) {
  const auto p = build_user_prompt("u7", "gender M, age 25", {{"Scream", true}, {"Heat", false}}, movie_factors());
  const std::string golden =
      "You are an expert in movie recommendation.\n"
      "User profile: gender M, age 25.\n"
      "The user's movie history, oldest first:\n"
      "1. \"Scream\" (liked)\n"
      "2. \"Heat\" (disliked)\n"
      "Factors: genre, mood, actors.\n"
      "Analyze what this user prefers in a movie, one factor at a time, "
      "and support each conclusion with titles from the history.\n";
  EXPECT_EQ(p.rendered, golden);
  EXPECT_EQ(p.kind, PromptKind::kUser);
  EXPECT_EQ(p.key, "u7");
  EXPECT_EQ(p.template_version, "v1");
  EXPECT_EQ(p.content_hash, fnv1a64(golden));
}

TEST(UserPrompt, ElementsInOrder) {
  const auto p = build_user_prompt("u1", "male, 25", {{"Scream", true}}, normalize_factors("movie", {"genre", "a", "b"}));
  const auto profile = p.rendered.find("male, 25");
  const auto history = p.rendered.find("\"Scream\" (liked)");
  const auto factors = p.rendered.find("Factors: genre");
  ASSERT_NE(profile, std::string::npos);
  ASSERT_NE(history, std::string::npos);
  ASSERT_NE(factors, std::string::npos);
  EXPECT_LT(profile, history);
  EXPECT_LT(history, factors);
}

TEST(UserPrompt, TwentyTitlesEachOnce) {
  std::vector<HistoryEntry> h;
  for (int i = 0; i < 20; ++i) h.push_back({"Film Number " + std::to_string(100 + i), i % 2 == 0});
  const auto p = build_user_prompt("u1", "p", h, movie_factors());
  for (const auto& e : h) EXPECT_EQ(occurrences(p.rendered, "\"" + e.title + "\""), 1u) << e.title;
}

TEST(UserPrompt, KeepsMostRecentBeyondCap) {
  std::vector<HistoryEntry> h;
  for (int i = 0; i < 5; ++i) h.push_back({"T" + std::to_string(i), true});
  const auto p = build_user_prompt("u1", "p", h, movie_factors(), PromptLimits{.user_history = 3});
  EXPECT_EQ(occurrences(p.rendered, "\"T0\""), 0u);
  EXPECT_EQ(occurrences(p.rendered, "\"T1\""), 0u);
  EXPECT_NE(p.rendered.find("1. \"T2\""), std::string::npos);
  EXPECT_NE(p.rendered.find("3. \"T4\""), std::string::npos);
}

TEST(UserPrompt, EmptyHistoryIsInsufficientEvidence) {
  try {
    build_user_prompt("u1", "p", {}, movie_factors());
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("insufficient behavior evidence"), std::string::npos);
  }
}

TEST(UserPrompt, ByteStable) {
  const auto a = build_user_prompt("u1", "p", {{"A", true}, {"B", false}}, movie_factors());
  const auto b = build_user_prompt("u1", "p", {{"A", true}, {"B", false}}, movie_factors());
  EXPECT_EQ(a.rendered, b.rendered);
  EXPECT_EQ(a.cache_digest(), b.cache_digest());
}

TEST(ItemPrompt, AsksForEveryFactor) {
  const auto factors = *preset_factors("movie");
  const auto p = build_item_prompt("i1", "Roman Holiday (1953), Romance", normalize_factors("movie", factors));
  EXPECT_NE(p.rendered.find("Item: Roman Holiday (1953), Romance\n"), std::string::npos);
  for (const auto& f : factors) EXPECT_NE(p.rendered.find(f), std::string::npos) << f;
  EXPECT_EQ(p.kind, PromptKind::kItem);
}

TEST(ItemPrompt, EmptyFactorsThrow) {
  EXPECT_THROW(build_item_prompt("i1", "X", FactorSet{"movie", {}}), Error);
}

TEST(ItemPrompt, TwoItemsDifferOnlyInDescription) {
  const auto a = build_item_prompt("i1", "Alpha, Drama", movie_factors()).rendered;
  const auto b = build_item_prompt("i2", "Beta, Comedy", movie_factors()).rendered;
  const auto strip = [](std::string s, const std::string& d) { return s.replace(s.find(d), d.size(), "<>"); };
  EXPECT_NE(a, b);
  EXPECT_EQ(strip(a, "Alpha, Drama"), strip(b, "Beta, Comedy"));
}

TEST(SetPrompt, EnumeratesAllMembers) {
  const std::vector<std::string> titles{"Roman Holiday", "Sabrina", "Notting Hill", "Amelie", "Casablanca"};
  const auto p = build_set_prompt("ic3", titles, movie_factors());
  for (const auto& t : titles) EXPECT_EQ(occurrences(p.rendered, "\"" + t + "\""), 1u) << t;
  EXPECT_NE(p.rendered.find("The following 5 titles form one group"), std::string::npos);
  EXPECT_NE(p.rendered.find("Factors: genre, mood, actors."), std::string::npos);
}

TEST(SetPrompt, EightyMembersWithoutTruncation) {
  std::vector<std::string> titles;
  for (int i = 0; i < 80; ++i) titles.push_back("Member " + std::to_string(1000 + i));
  const auto p = build_set_prompt("ic1", titles, movie_factors());
  for (const auto& t : titles) EXPECT_EQ(occurrences(p.rendered, "\"" + t + "\""), 1u) << t;
  titles.push_back("One Too Many");
  EXPECT_THROW(build_set_prompt("ic1", titles, movie_factors()), Error);
}

TEST(SetPrompt, SingletonAndEmptyThrow) {
  EXPECT_THROW(build_set_prompt("ic1", {"Only"}, movie_factors()), Error);
  EXPECT_THROW(build_set_prompt("ic1", {}, movie_factors()), Error);
}

// Property: every permutation of a set renders the same prompt.
TEST(SetPrompt, OrderIndependentUnderPermutations) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng.below(20));
    std::vector<std::string> titles;
    for (std::size_t i = 0; i < n; ++i) titles.push_back("T" + std::to_string(rng.below(1000)) + "-" + std::to_string(i));
    const auto reference = build_set_prompt("ic", titles, movie_factors());
    rng.shuffle(titles);
    const auto shuffled = build_set_prompt("ic", titles, movie_factors());
    EXPECT_EQ(reference.rendered, shuffled.rendered);
    std::vector<std::string> sorted = titles;
    std::sort(sorted.begin(), sorted.end());
    std::size_t last = 0;
    for (const auto& t : sorted) {
      const auto pos = shuffled.rendered.find("\"" + t + "\"");
      ASSERT_NE(pos, std::string::npos);
      EXPECT_GE(pos, last);
      last = pos;
    }
  }
}

TEST(CacheDigest, DependsOnTemplateVersion) {
  auto custom = PromptTemplates::builtin();
  custom.version = "v2";
  const auto a = build_item_prompt("i1", "X", movie_factors());
  const auto b = build_item_prompt("i1", "X", movie_factors(), custom);
  EXPECT_EQ(a.rendered, b.rendered);
  EXPECT_EQ(a.content_hash, b.content_hash);
  EXPECT_NE(a.cache_digest(), b.cache_digest());
  EXPECT_EQ(a.cache_digest(), fnv1a64(a.rendered, fnv1a64("v1\n")));
}

TEST(FactorPrompt, MentionsScenario) {
  const auto p = build_factor_prompt("movie");
  EXPECT_EQ(p.kind, PromptKind::kFactorElicitation);
  EXPECT_NE(p.rendered.find("movie"), std::string::npos);
  EXPECT_NE(p.rendered.find("comma-separated list"), std::string::npos);
}

TEST(MockLlm, Deterministic) {
  const auto prompt = build_item_prompt("i1", "Alpha, Comedy", movie_factors()).rendered;
  EXPECT_EQ(mock_llm(prompt, 3), mock_llm(prompt, 3));
  EXPECT_NE(mock_llm(prompt, 3), mock_llm(prompt, 4));
}

TEST(MockLlm, EchoesCategory) {
  const auto prompt = build_item_prompt("i1", "Alpha, Comedy", movie_factors()).rendered;
  const auto text = mock_llm(prompt, 0);
  EXPECT_NE(text.find("Comedy"), std::string::npos);
}

TEST(MockLlm, UserResponseMentionsOnlyLikedTitlesFacts) {
  auto world = std::make_shared<WorldKnowledge>();
  (*world)["scream"] = {"Horror"};
  (*world)["heat"] = {"Crime"};
  MockLlm llm(0, world);
  const auto text = llm.complete(build_user_prompt("u1", "p", {{"Scream", true}, {"Heat", false}}, movie_factors()).rendered);
  EXPECT_NE(text.find("Horror"), std::string::npos);
  EXPECT_EQ(text.find("Crime"), std::string::npos);
}

TEST(MockLlm, MeanLengthNearTarget) {
  Rng rng(11);
  double total = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto prompt =
        build_item_prompt("i" + std::to_string(i), "Title " + std::to_string(rng.below(100000)) + ", Drama", movie_factors());
    total += static_cast<double>(count_tokens(mock_llm(prompt.rendered, 0)));
  }
  const double mean = total / 100.0;
  EXPECT_GE(mean, 450.0);
  EXPECT_LE(mean, 650.0);
}

TEST(MockLlm, FactorPromptAnswerParses) {
  const auto factors = parse_factor_list(mock_llm(build_factor_prompt("movie").rendered, 0));
  EXPECT_EQ(normalize_factors("movie", factors).factors.size(), 5u);
}

}  // namespace
}  // namespace reki::prompting
