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

#include <cmath>
#include <vector>

#include "reki/common.hpp"
#include "reki/metrics.hpp"

namespace reki::metrics {
namespace {

// O(n^2) concordance count with ties worth one half.
double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double concordant = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      if (s[i] > s[j]) concordant += 1.0;
      else if (s[i] == s[j]) concordant += 0.5;
    }
  }
  return concordant / pairs;
}

double scalar_logloss(const std::vector<double>& p, const std::vector<int>& y) {
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::min(std::max(p[i], 1e-12), 1.0 - 1e-12);
    total -= y[i] == 1 ? std::log(q) : std::log(1.0 - q);
  }
  return total / static_cast<double>(p.size());
}

TEST(Auc, SpecExample) {
  EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.9, 0.8, 0.3}, std::vector<int>{1, 0, 1}), 0.5);
}

TEST(Auc, PerfectSeparation) {
  EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{0, 0, 1, 1}), 0.0);
}

TEST(Auc, AllTiedIsHalf) {
  EXPECT_DOUBLE_EQ(auc(std::vector<double>(6, 0.3), std::vector<int>{0, 1, 0, 1, 1, 0}), 0.5);
}

TEST(Auc, Errors) {
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), Error);
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 2}), Error);
  EXPECT_THROW(auc(std::vector<double>{0.1}, std::vector<int>{1, 0}), Error);
}

TEST(Auc, MatchesPairwiseOracleWithTies) {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(999);
    // Coarse scores force ties.
    const double levels = static_cast<double>(1 + rng.below(20));
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::floor(rng.uniform() * levels) / levels;
      y[i] = rng.bernoulli(0.3) ? 1 : 0;
    }
    y[0] = 1;
    y[1] = 0;
    EXPECT_EQ(auc(s, y), pairwise_auc(s, y)) << "trial " << trial;
  }
}

TEST(Auc, InvariantUnderMonotoneTransform) {
  Rng rng(8);
  std::vector<double> s(300);
  std::vector<int> y(300);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = rng.normal();
    y[i] = static_cast<int>(i % 2);
  }
  std::vector<double> t(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) t[i] = 1.0 / (1.0 + std::exp(-3.0 * s[i]));
  EXPECT_EQ(auc(s, y), auc(t, y));
}

TEST(Logloss, MatchesScalarOracle) {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(1000);
    std::vector<double> p(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.uniform();
      y[i] = rng.bernoulli(0.5) ? 1 : 0;
    }
    if (trial == 0) p[0] = 0.0;
    EXPECT_NEAR(logloss(p, y), scalar_logloss(p, y), 1e-12);
  }
}

TEST(Logloss, KnownValue) {
  EXPECT_NEAR(logloss(std::vector<double>{0.5, 0.5}, std::vector<int>{1, 0}), std::log(2.0), 1e-15);
}

}  // namespace
}  // namespace reki::metrics
