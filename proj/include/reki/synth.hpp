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
#include <vector>

namespace reki::synth {

struct SynthSpec {
  std::size_t users = 2000;
  std::size_t items = 500;
  std::size_t genres = 8;
  std::size_t interactions = 60000;
  /// Scale of the logistic label noise; 0 makes labels deterministic.
  double noise = 0.2;
  /// Favourite genres per user, drawn uniformly from [1, max_favourites].
  std::size_t max_favourites = 2;
  /// Weight of an item's primary genre; the secondary gets the rest.
  double primary_weight = 0.6;
  /// Affinity threshold subtracted from every score.
  double threshold = 0.3;
};

/// The latent ground truth behind a generated corpus.
struct SynthTruth {
  std::vector<std::vector<double>> user_affinity;  // users x genres
  std::vector<std::size_t> primary_genre;          // per item
  std::vector<std::size_t> secondary_genre;        // per item, != primary
  std::vector<std::string> genre_names;
};

/// score(u, i) = affinity_u . genre_i - threshold, where genre_i puts
/// primary_weight on the primary genre and the rest on the secondary.
double planted_score(const SynthSpec& spec, const SynthTruth& truth, std::size_t user, std::size_t item);

struct SynthResult {
  SynthTruth truth;
  std::size_t interactions = 0;
  std::size_t positives = 0;
  double expected_positive_rate = 0.0;  // mean of sigma(score / noise) over the drawn pairs
};

/// Writes interactions.csv, items.csv and users.csv under `dir`. The item
/// category column holds the primary genre; the attrs column repeats it and
/// adds the secondary genre, a year and a format, so the secondary genre is
/// visible through item text but not through any categorical feature.
/// Label = 1[score + noise * z > 0] with z standard logistic, written as
/// rating 4-5 (positive) or 1-3 (negative).
SynthResult generate(const SynthSpec& spec, std::uint64_t seed, const std::string& dir);

}  // namespace reki::synth
