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
#include <string>
#include <string_view>

namespace reki {

/// What a knowledge text or vector is keyed by. The numeric values are the
/// on-disk key_kind byte of the vector store; never renumber.
enum class KeyKind : std::uint8_t {
  kUser = 0,
  kItem = 1,
  kUserCluster = 2,
  kItemCluster = 3,
  kUserHistory = 4,
  kItemDesc = 5,
};

inline constexpr int kKeyKindCount = 6;

std::string_view to_string(KeyKind kind);
KeyKind key_kind_from_string(std::string_view name);
KeyKind key_kind_from_byte(std::uint8_t value);

}  // namespace reki
