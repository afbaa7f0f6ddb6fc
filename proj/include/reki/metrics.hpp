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

#include <span>

namespace reki::metrics {

/// Rank-sum AUC with average ranks for tied scores. Labels are 0/1 and both
/// classes must be present.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Mean binary cross entropy with probabilities clamped to [1e-12, 1 - 1e-12].
double logloss(std::span<const double> probs, std::span<const int> labels);

}  // namespace reki::metrics
