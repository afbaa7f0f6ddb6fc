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

#include "reki/synth.hpp"

#include <array>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include <fmt/format.h>

#include "reki/common.hpp"

namespace reki::synth {

namespace {

constexpr std::array<std::string_view, 12> kGenres = {"Action",   "Comedy",  "Drama",   "Horror",
                                                      "Romance",  "Thriller", "Documentary", "Animation",
                                                      "Fantasy",  "Western", "Mystery", "Musical"};

constexpr std::array<std::string_view, 32> kTitleWords = {
    "Harbor", "Lantern", "Silver", "Orchard", "Falcon", "Meadow", "Copper", "Winter", "Echo",    "Garden", "River",
    "Summit", "Velvet",  "Hollow", "Ember",   "Cinder", "Marble", "Quiet",  "North",  "Paper",   "Glass",  "Iron",
    "Sparrow", "Atlas",  "Crown",  "Delta",   "Ferry",  "Harvest", "Island", "Juniper", "Kettle", "Lark"};

constexpr std::array<std::string_view, 4> kFormats = {"Feature", "Series", "Short", "Special"};

constexpr std::array<std::string_view, 5> kAges = {"18", "25", "35", "45", "56"};

std::string genre_name(std::size_t g) {
  return g < kGenres.size() ? std::string(kGenres[g]) : fmt::format("Genre{}", g + 1);
}

}  // namespace

double planted_score(const SynthSpec& spec, const SynthTruth& truth, std::size_t user, std::size_t item) {
  const auto& a = truth.user_affinity.at(user);
  return spec.primary_weight * a[truth.primary_genre.at(item)] +
         (1.0 - spec.primary_weight) * a[truth.secondary_genre.at(item)] - spec.threshold;
}

SynthResult generate(const SynthSpec& spec, std::uint64_t seed, const std::string& dir) {
  if (spec.users < 2 || spec.items < 2 || spec.genres < 2)
    throw Error("synthetic corpus needs at least 2 users, 2 items and 2 genres");
  if (spec.interactions < spec.users) throw Error("synthetic corpus needs at least one interaction per user");
  if (spec.interactions > spec.users * spec.items) throw Error("more interactions requested than user-item pairs");
  if (spec.max_favourites < 1 || spec.max_favourites > spec.genres)
    throw Error(fmt::format("max_favourites must be in [1, {}]", spec.genres));
  if (spec.noise < 0.0) throw Error("noise must be non-negative");

  Rng rng(derive_seed(seed, "synth"));
  SynthResult result;
  SynthTruth& truth = result.truth;
  for (std::size_t g = 0; g < spec.genres; ++g) truth.genre_names.push_back(genre_name(g));

  std::string items_csv = "item_id,title,category,attrs\n";
  std::unordered_set<std::string> titles;
  for (std::size_t i = 0; i < spec.items; ++i) {
    const auto primary = static_cast<std::size_t>(rng.below(spec.genres));
    auto secondary = static_cast<std::size_t>(rng.below(spec.genres - 1));
    if (secondary >= primary) ++secondary;
    truth.primary_genre.push_back(primary);
    truth.secondary_genre.push_back(secondary);
    std::string title;
    do {
      title = fmt::format("{} {} {}", kTitleWords[rng.below(kTitleWords.size())],
                          kTitleWords[rng.below(kTitleWords.size())], 1 + rng.below(99));
    } while (!titles.insert(title).second);
    const auto format = kFormats[rng.below(kFormats.size())];
    const auto year = 1950 + rng.below(60);
    items_csv += fmt::format("i{},\"{}\",{},genre={}|genre2={}|year={}|format={}\n", i + 1, title, truth.genre_names[primary],
                             truth.genre_names[primary], truth.genre_names[secondary], year, format);
  }

  std::string users_csv = "user_id,gender,age\n";
  for (std::size_t u = 0; u < spec.users; ++u) {
    std::vector<double> a(spec.genres, 0.0);
    const auto favourites = 1 + static_cast<std::size_t>(rng.below(spec.max_favourites));
    std::vector<std::size_t> genres(spec.genres);
    std::iota(genres.begin(), genres.end(), std::size_t{0});
    rng.shuffle(genres);
    for (std::size_t k = 0; k < favourites; ++k) a[genres[k]] = 1.0;
    truth.user_affinity.push_back(std::move(a));
    users_csv += fmt::format("u{},{},{}\n", u + 1, rng.bernoulli(0.5) ? "M" : "F", kAges[rng.below(kAges.size())]);
  }

  // Interaction counts: an even share each, remainder spread over a seeded subset.
  std::vector<std::size_t> counts(spec.users, spec.interactions / spec.users);
  std::vector<std::size_t> order(spec.users);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  for (std::size_t k = 0; k < spec.interactions % spec.users; ++k) ++counts[order[k]];

  std::string inter_csv = "user_id,item_id,rating,timestamp\n";
  double expected = 0.0;
  std::vector<std::size_t> pool(spec.items);
  for (std::size_t u = 0; u < spec.users; ++u) {
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    // Partial Fisher-Yates: the first counts[u] entries become a uniform sample without replacement.
    for (std::size_t k = 0; k < counts[u]; ++k) {
      const auto j = k + static_cast<std::size_t>(rng.below(spec.items - k));
      std::swap(pool[k], pool[j]);
    }
    std::int64_t ts = 978300000 + static_cast<std::int64_t>(rng.below(86400));
    for (std::size_t k = 0; k < counts[u]; ++k) {
      const std::size_t item = pool[k];
      const double s = planted_score(spec, truth, u, item);
      int label = 0;
      if (spec.noise == 0.0) {
        label = s > 0.0 ? 1 : 0;
        expected += label;
      } else {
        label = s + spec.noise * rng.logistic() > 0.0 ? 1 : 0;
        expected += 1.0 / (1.0 + std::exp(-s / spec.noise));
      }
      const auto rating = label == 1 ? 4 + static_cast<int>(rng.below(2)) : 1 + static_cast<int>(rng.below(3));
      ts += 60 + static_cast<std::int64_t>(rng.below(3600));
      inter_csv += fmt::format("u{},i{},{},{}\n", u + 1, item + 1, rating, ts);
      result.positives += static_cast<std::size_t>(label);
      ++result.interactions;
    }
  }
  result.expected_positive_rate = expected / static_cast<double>(result.interactions);

  write_file(dir + "/items.csv", items_csv);
  write_file(dir + "/users.csv", users_csv);
  write_file(dir + "/interactions.csv", inter_csv);
  return result;
}

}  // namespace reki::synth
