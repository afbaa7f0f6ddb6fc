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

#include "reki/common.hpp"
#include "reki/tensor.hpp"

namespace reki::hein {

enum class AdaptorKind { kHein, kMoe, kMlp };

std::string to_string(AdaptorKind kind);
AdaptorKind adaptor_kind_from_string(const std::string& name);

enum class Side { kUser, kItem };

struct HeinConfig {
  std::size_t input_dim = 768;   // m
  std::size_t output_dim = 32;   // q, strictly below m
  std::vector<std::size_t> hidden{128, 32};
  std::size_t n_shared = 2;
  std::size_t n_user = 2;
  std::size_t n_item = 2;
  AdaptorKind kind = AdaptorKind::kHein;

  void validate() const;
  /// Expert count seen by one side's gate.
  std::size_t gate_width(Side side) const;
  bool gated() const { return kind != AdaptorKind::kMlp; }
};

/// The config a variant actually builds: mlp keeps a single shared expert and
/// no gate; moe keeps the shared pool and drops the dedicated sets.
HeinConfig adaptor_config(AdaptorKind kind, HeinConfig base);

struct SideOutput {
  tensor::Var output;  // B x q
  tensor::Var alpha;   // B x gate_width; unset (id -1) for the mlp variant
};

/// Mixture of shared and per-side dedicated expert MLPs. For a side s with
/// input r the gate gives alpha = softmax(r W_g + b_g) over the concatenated
/// (shared, dedicated) expert list and the output is sum_e alpha_e * E_e(r).
/// Parameters live in a caller-owned set; shared experts are the same
/// Parameter objects for both sides.
class Hein {
 public:
  /// Registers parameters under `hein.` in `params`. Experts are initialised
  /// before gates (shared, user, item), each weight Glorot-uniform from one
  /// seeded stream; biases are zero.
  Hein(const HeinConfig& config, tensor::ParameterSet& params, std::uint64_t seed);

  SideOutput forward_side(tensor::Tape& tape, Side side, tensor::Var r) const;
  std::pair<SideOutput, SideOutput> forward(tensor::Tape& tape, tensor::Var r_user, tensor::Var r_item) const;

  const HeinConfig& config() const { return config_; }
  /// Per expert in gate order, its layer parameters (w0, b0, w1, b1, ...).
  std::vector<std::vector<tensor::Parameter*>> experts(Side side) const;
  std::vector<tensor::Parameter*> gate(Side side) const;

 private:
  struct Expert {
    std::vector<tensor::Parameter*> weights;
    std::vector<tensor::Parameter*> biases;
  };
  Expert make_expert(tensor::ParameterSet& params, const std::string& prefix, Rng& rng);
  tensor::Var run_expert(tensor::Tape& tape, const Expert& e, tensor::Var x) const;

  HeinConfig config_;
  std::vector<Expert> shared_;
  std::vector<Expert> user_;
  std::vector<Expert> item_;
  tensor::Parameter* gate_user_w_ = nullptr;
  tensor::Parameter* gate_user_b_ = nullptr;
  tensor::Parameter* gate_item_w_ = nullptr;
  tensor::Parameter* gate_item_b_ = nullptr;
};

/// Glorot-uniform fan_in x fan_out matrix: U(-sqrt(6/(in+out)), +sqrt(...)).
tensor::Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace reki::hein
