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
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace reki {

/// Text-completion backend. Implementations must be safe to call from
/// several threads at once.
class LlmClient {
 public:
  virtual ~LlmClient() = default;
  /// Throws reki::Error on transport or service failure. An empty answer is
  /// returned as-is; callers treat it as a failure.
  virtual std::string complete(const std::string& prompt) = 0;
  virtual std::string model_id() const = 0;
};

/// Facts the mock "knows" about titles, standing in for an LLM's
/// open-world knowledge: lowercase title -> attribute tokens.
using WorldKnowledge = std::unordered_map<std::string, std::vector<std::string>>;

/// Deterministic test double. For each factor named in the prompt it writes
/// one passage listing what it can tell about the entity (attributes echoed
/// from the prompt plus WorldKnowledge facts for any titles it recognises),
/// padded with seeded filler to roughly 550 whitespace tokens.
class MockLlm final : public LlmClient {
 public:
  explicit MockLlm(std::uint64_t seed = 0, std::shared_ptr<const WorldKnowledge> knowledge = nullptr);

  std::string complete(const std::string& prompt) override;
  std::string model_id() const override { return "mock-llm-v1"; }

 private:
  std::uint64_t seed_;
  std::shared_ptr<const WorldKnowledge> knowledge_;
};

std::string mock_llm(const std::string& prompt, std::uint64_t seed);

struct RemoteLlmConfig {
  std::string endpoint;  // e.g. https://api.example.com/v1/chat/completions
  std::string model;
  std::string api_key;  // resolved from the environment by the caller
  double temperature = 0.0;
  int timeout_seconds = 60;
};

/// Chat-completion client speaking the common `{model, messages,
/// temperature}` JSON protocol and reading `choices[0].message.content`.
class RemoteLlm final : public LlmClient {
 public:
  explicit RemoteLlm(RemoteLlmConfig config);

  std::string complete(const std::string& prompt) override;
  std::string model_id() const override { return config_.model; }

 private:
  RemoteLlmConfig config_;
};

std::size_t count_tokens(const std::string& text);

/// Split `http(s)://host[:port]/path` into scheme+host and path.
struct UrlParts {
  std::string origin;
  std::string path;
};
UrlParts split_url(const std::string& url);

}  // namespace reki
