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

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "reki/common.hpp"
#include "reki/tensor.hpp"

namespace reki::tensor {

Adam::Adam(ParameterSet& params, AdamConfig config) : params_(params), config_(config) {}

void Adam::step() {
  while (m_.size() < params_.size()) {
    const auto& v = params_[m_.size()].value;
    m_.emplace_back(v.rows(), v.cols());
    v_.emplace_back(v.rows(), v.cols());
  }
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = params_[k];
    if (!p.grad.same_shape(p.value)) continue;
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      p.value[i] -= config_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
  }
}

namespace {

double eval_loss(const LossClosure& closure, const std::vector<Parameter*>& params) {
  Tape tape(false);
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (Parameter* p : params) vars.push_back(tape.param(*p));
  const Var loss = closure.fn(tape, vars);
  const Tensor& v = loss.value();
  if (v.size() != 1) throw Error(fmt::format("grad_check: loss must be scalar, got {}", shape_string(v)));
  return v[0];
}

}  // namespace

GradCheckReport grad_check(const LossClosure& closure, const std::vector<Parameter*>& params, double step,
                           std::uint64_t seed, std::size_t samples) {
  if (closure.arity != params.size())
    throw Error(fmt::format("grad_check: closure takes {} parameters, {} supplied", closure.arity, params.size()));
  if (!closure.fn) throw Error("grad_check: empty closure");

  for (Parameter* p : params) p->grad = Tensor(p->value.rows(), p->value.cols());
  {
    Tape tape(true);
    std::vector<Var> vars;
    for (Parameter* p : params) vars.push_back(tape.param(*p));
    tape.backward(closure.fn(tape, vars));
  }

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t k = 0; k < params.size(); ++k)
    for (std::size_t i = 0; i < params[k]->value.size(); ++i) coords.emplace_back(k, i);
  Rng rng(seed);
  rng.shuffle(coords);
  if (coords.size() > samples) coords.resize(samples);

  GradCheckReport report;
  report.coordinates = coords.size();
  for (const auto& [k, i] : coords) {
    Parameter& p = *params[k];
    const double original = p.value[i];
    p.value[i] = original + step;
    const double up = eval_loss(closure, params);
    p.value[i] = original - step;
    const double down = eval_loss(closure, params);
    p.value[i] = original;
    const double numeric = (up - down) / (2.0 * step);
    const double analytic = p.grad[i];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-5});
    const double rel = std::abs(analytic - numeric) / denom;
    if (rel >= report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_parameter = p.name;
      report.worst_index = i;
      report.analytic = analytic;
      report.numeric = numeric;
    }
  }
  return report;
}

}  // namespace reki::tensor
