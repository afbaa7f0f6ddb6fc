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

#include <boost/crc.hpp>

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace reki {

/// Domain error raised by every module. The CLI maps it to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 64-bit FNV-1a digest. Used for prompt hashes and config hashes.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// CRC-64/XZ (ECMA-182 polynomial, reflected, inverted).
class Crc64 {
 public:
  void update(const void* data, std::size_t size);
  std::uint64_t value() const;
  void reset();

 private:
  boost::crc_optimal<64, 0x42F0E1EBA9EA3693ULL, ~0ULL, ~0ULL, true, true> crc_;
};

std::uint64_t crc64(const void* data, std::size_t size);

std::string hex64(std::uint64_t value);
std::uint64_t parse_hex64(std::string_view text);

/// Deterministic PRNG with platform-independent transforms. The standard
/// distributions are implementation-defined, which breaks byte-identical
/// reruns across toolchains, so the transforms live here instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  double normal();
  /// Standard logistic variate.
  double logistic();
  bool bernoulli(double p);

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// SplitMix64 finalizer; also used to derive sub-seeds.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);
bool file_exists(const std::string& path);

std::string trim(std::string_view text);
std::string to_lower(std::string_view text);
std::vector<std::string> split(std::string_view text, char sep);

}  // namespace reki
