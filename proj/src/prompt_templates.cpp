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

// Prompt template assets. Bump `version` on any edit: it is part of the
// knowledge cache key.

#include "reki/prompting.hpp"

namespace reki::prompting {

const PromptTemplates& PromptTemplates::builtin() {
  static const PromptTemplates templates{
      "v1",
      // user
      "You are an expert in {scenario} recommendation.\n"
      "User profile: {profile}.\n"
      "The user's {scenario} history, oldest first:\n"
      "{history}\n"
      "Factors: {factors}.\n"
      "Analyze what this user prefers in a {scenario}, one factor at a time, "
      "and support each conclusion with titles from the history.\n",
      // item
      "You are an expert in {scenario} recommendation.\n"
      "Item: {item}\n"
      "Factors: {factors}.\n"
      "Introduce this {scenario} with one short paragraph per factor.\n",
      // set
      "You are an expert in {scenario} recommendation.\n"
      "The following {count} titles form one group:\n"
      "{items}\n"
      "Factors: {factors}.\n"
      "Describe what these titles have in common, one factor at a time.\n",
      // factor elicitation
      "Name the factors that most influence whether a user is interested in a {scenario}. "
      "Reply with a comma-separated list of short factor names only.\n",
  };
  return templates;
}

}  // namespace reki::prompting
