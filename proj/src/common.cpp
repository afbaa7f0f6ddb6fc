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

#include "reki/common.hpp"

#include <fmt/format.h>

#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

namespace reki {

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void Crc64::update(const void* data, std::size_t size) { crc_.process_bytes(data, size); }

std::uint64_t Crc64::value() const { return crc_.checksum(); }

void Crc64::reset() { crc_.reset(); }

std::uint64_t crc64(const void* data, std::size_t size) {
  Crc64 crc;
  crc.update(data, size);
  return crc.value();
}

std::string hex64(std::uint64_t value) { return fmt::format("{:016x}", value); }

std::uint64_t parse_hex64(std::string_view text) {
  std::uint64_t v = 0;
  if (text.empty() || text.size() > 16) throw Error(fmt::format("bad hex digest '{}'", text));
  for (char c : text) {
    int d;
    if (c >= '0' && c <= '9') d = c - '0';
    else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
    else throw Error(fmt::format("bad hex digest '{}'", text));
    v = (v << 4) | static_cast<std::uint64_t>(d);
  }
  return v;
}

Rng::Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

std::uint64_t Rng::next() { return engine_(); }

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw Error("Rng::below requires n > 0");
  const std::uint64_t limit = ~0ULL - (~0ULL % n);
  std::uint64_t x;
  do {
    x = next();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

double Rng::logistic() {
  double u;
  do {
    u = uniform();
  } while (u <= 0.0);
  return std::log(u / (1.0 - u));
}

bool Rng::bernoulli(double p) { return uniform() < p; }

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  return mix64(seed ^ fnv1a64(tag));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open '{}'", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write '{}'", path));
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error(fmt::format("short write to '{}'", path));
}

bool file_exists(const std::string& path) { return std::filesystem::exists(path); }

std::string trim(std::string_view text) {
  std::size_t b = 0, e = text.size();
  while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  return std::string(text.substr(b, e - b));
}

std::string to_lower(std::string_view text) {
  std::string out(text);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(text.substr(start));
      break;
    }
    out.emplace_back(text.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace reki

#include "reki/keys.hpp"

namespace reki {

namespace {
constexpr std::string_view kKeyKindNames[kKeyKindCount] = {"user",         "item",         "user_cluster",
                                                           "item_cluster", "user_history", "item_desc"};
}  // namespace

std::string_view to_string(KeyKind kind) { return kKeyKindNames[static_cast<int>(kind)]; }

KeyKind key_kind_from_string(std::string_view name) {
  for (int i = 0; i < kKeyKindCount; ++i)
    if (kKeyKindNames[i] == name) return static_cast<KeyKind>(i);
  throw Error(fmt::format("unknown key kind '{}'", name));
}

KeyKind key_kind_from_byte(std::uint8_t value) {
  if (value >= kKeyKindCount) throw Error(fmt::format("unknown key kind byte {}", value));
  return static_cast<KeyKind>(value);
}

}  // namespace reki
