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

#include "reki/hein.hpp"

#include <cmath>

#include <fmt/format.h>

namespace reki::hein {

using tensor::Parameter;
using tensor::Tape;
using tensor::Tensor;
using tensor::Var;

std::string to_string(AdaptorKind kind) {
  switch (kind) {
    case AdaptorKind::kHein: return "hein";
    case AdaptorKind::kMoe: return "moe";
    case AdaptorKind::kMlp: return "mlp";
  }
  return "hein";
}

AdaptorKind adaptor_kind_from_string(const std::string& name) {
  if (name == "hein") return AdaptorKind::kHein;
  if (name == "moe") return AdaptorKind::kMoe;
  if (name == "mlp") return AdaptorKind::kMlp;
  throw Error(fmt::format("unknown adaptor kind '{}' (expected hein, moe or mlp)", name));
}

void HeinConfig::validate() const {
  if (input_dim == 0) throw Error("adaptor input dimension must be positive");
  if (output_dim == 0 || output_dim >= input_dim)
    throw Error(fmt::format("adaptor output dimension {} must be in [1, {})", output_dim, input_dim));
  for (std::size_t h : hidden)
    if (h == 0) throw Error("adaptor hidden layers must be non-empty");
  if (n_shared + n_user < 1) throw Error("user side of the adaptor has no experts");
  if (n_shared + n_item < 1) throw Error("item side of the adaptor has no experts");
  if (kind == AdaptorKind::kMlp && (n_shared != 1 || n_user != 0 || n_item != 0))
    throw Error("mlp adaptor takes exactly one shared expert");
  if (kind == AdaptorKind::kMoe && (n_user != 0 || n_item != 0))
    throw Error("moe adaptor takes shared experts only");
}

std::size_t HeinConfig::gate_width(Side side) const {
  return n_shared + (side == Side::kUser ? n_user : n_item);
}

HeinConfig adaptor_config(AdaptorKind kind, HeinConfig base) {
  base.kind = kind;
  if (kind == AdaptorKind::kMlp) {
    base.n_shared = 1;
    base.n_user = 0;
    base.n_item = 0;
  } else if (kind == AdaptorKind::kMoe) {
    base.n_user = 0;
    base.n_item = 0;
    if (base.n_shared == 0) base.n_shared = 1;
  }
  return base;
}

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(fan_in, fan_out);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-a, a);
  return t;
}

Hein::Expert Hein::make_expert(tensor::ParameterSet& params, const std::string& prefix, Rng& rng) {
  std::vector<std::size_t> dims{config_.input_dim};
  dims.insert(dims.end(), config_.hidden.begin(), config_.hidden.end());
  dims.push_back(config_.output_dim);
  Expert e;
  for (std::size_t j = 0; j + 1 < dims.size(); ++j) {
    e.weights.push_back(&params.add(fmt::format("{}.layer{}.w", prefix, j), glorot_uniform(dims[j], dims[j + 1], rng)));
    e.biases.push_back(&params.add(fmt::format("{}.layer{}.b", prefix, j), Tensor(1, dims[j + 1])));
  }
  return e;
}

Hein::Hein(const HeinConfig& config, tensor::ParameterSet& params, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  for (std::size_t i = 0; i < config_.n_shared; ++i)
    shared_.push_back(make_expert(params, fmt::format("hein.shared.expert{}", i), rng));
  for (std::size_t i = 0; i < config_.n_user; ++i)
    user_.push_back(make_expert(params, fmt::format("hein.u.expert{}", i), rng));
  for (std::size_t i = 0; i < config_.n_item; ++i)
    item_.push_back(make_expert(params, fmt::format("hein.i.expert{}", i), rng));
  if (config_.gated()) {
    const std::size_t m = config_.input_dim;
    gate_user_w_ = &params.add("hein.gate.u.w", glorot_uniform(m, config_.gate_width(Side::kUser), rng));
    gate_user_b_ = &params.add("hein.gate.u.b", Tensor(1, config_.gate_width(Side::kUser)));
    gate_item_w_ = &params.add("hein.gate.i.w", glorot_uniform(m, config_.gate_width(Side::kItem), rng));
    gate_item_b_ = &params.add("hein.gate.i.b", Tensor(1, config_.gate_width(Side::kItem)));
  }
}

Var Hein::run_expert(Tape& tape, const Expert& e, Var x) const {
  for (std::size_t j = 0; j < e.weights.size(); ++j) {
    x = tensor::add_row_bias(tensor::matmul(x, tape.param(*e.weights[j])), tape.param(*e.biases[j]));
    if (j + 1 < e.weights.size()) x = tensor::relu(x);
  }
  return x;
}

SideOutput Hein::forward_side(Tape& tape, Side side, Var r) const {
  if (r.cols() != config_.input_dim)
    throw Error(fmt::format("adaptor input has {} columns, expected {}", r.cols(), config_.input_dim));
  const auto& dedicated = side == Side::kUser ? user_ : item_;
  std::vector<const Expert*> order;
  for (const auto& e : shared_) order.push_back(&e);
  for (const auto& e : dedicated) order.push_back(&e);

  SideOutput out;
  if (!config_.gated()) {
    out.output = run_expert(tape, *order.front(), r);
    return out;
  }
  Parameter* gw = side == Side::kUser ? gate_user_w_ : gate_item_w_;
  Parameter* gb = side == Side::kUser ? gate_user_b_ : gate_item_b_;
  out.alpha = tensor::softmax_rowwise(tensor::add_row_bias(tensor::matmul(r, tape.param(*gw)), tape.param(*gb)));
  for (std::size_t k = 0; k < order.size(); ++k) {
    Var term = tensor::scale_rows(run_expert(tape, *order[k], r), tensor::slice_cols(out.alpha, k, 1));
    out.output = k == 0 ? term : tensor::add(out.output, term);
  }
  return out;
}

std::pair<SideOutput, SideOutput> Hein::forward(Tape& tape, Var r_user, Var r_item) const {
  return {forward_side(tape, Side::kUser, r_user), forward_side(tape, Side::kItem, r_item)};
}

std::vector<std::vector<Parameter*>> Hein::experts(Side side) const {
  std::vector<std::vector<Parameter*>> out;
  auto push = [&out](const Expert& e) {
    std::vector<Parameter*> ps;
    for (std::size_t j = 0; j < e.weights.size(); ++j) {
      ps.push_back(e.weights[j]);
      ps.push_back(e.biases[j]);
    }
    out.push_back(std::move(ps));
  };
  for (const auto& e : shared_) push(e);
  for (const auto& e : side == Side::kUser ? user_ : item_) push(e);
  return out;
}

std::vector<Parameter*> Hein::gate(Side side) const {
  if (!config_.gated()) return {};
  if (side == Side::kUser) return {gate_user_w_, gate_user_b_};
  return {gate_item_w_, gate_item_b_};
}

}  // namespace reki::hein
