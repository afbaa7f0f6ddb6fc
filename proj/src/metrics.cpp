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

#include "reki/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <fmt/format.h>

#include "reki/common.hpp"

namespace reki::metrics {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw Error(fmt::format("auc: {} scores for {} labels", scores.size(), labels.size()));
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Ranks are 1-based; a tie group spanning positions [i, j) shares rank (i + j + 1) / 2.
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double rank = static_cast<double>(i + j + 1) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      const int y = labels[order[k]];
      if (y != 0 && y != 1) throw Error(fmt::format("auc: label {} is not 0/1", y));
      if (y == 1) {
        positive_rank_sum += rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) throw Error("auc: needs both positive and negative labels");
  const double np = static_cast<double>(positives);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(negatives));
}

double logloss(std::span<const double> probs, std::span<const int> labels) {
  if (probs.size() != labels.size())
    throw Error(fmt::format("logloss: {} predictions for {} labels", probs.size(), labels.size()));
  if (probs.empty()) throw Error("logloss: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], 1e-12, 1.0 - 1e-12);
    total -= labels[i] == 1 ? std::log(p) : std::log(1.0 - p);
  }
  return total / static_cast<double>(probs.size());
}

}  // namespace reki::metrics
