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

#include "reki/tensor.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "reki/common.hpp"

namespace reki::tensor {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMajor>;
using Map = Eigen::Map<RowMajor>;

MapC view(const Tensor& t) {
  return MapC(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
Map view(Tensor& t) { return Map(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())); }

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw Error(fmt::format("{}: shape mismatch {} vs {}", op, shape_string(a), shape_string(b)));
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) shape_error(op, a, b);
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols)
    throw Error(fmt::format("tensor data has {} values, shape {}x{} needs {}", data_.size(), rows, cols, rows * cols));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string shape_string(const Tensor& t) { return fmt::format("[{}x{}]", t.rows(), t.cols()); }

Parameter& ParameterSet::add(const std::string& name, Tensor init) {
  if (index_.contains(name)) throw Error(fmt::format("duplicate parameter '{}'", name));
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->grad = Tensor(init.rows(), init.cols());
  p->value = std::move(init);
  index_.emplace(name, params_.size());
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParameterSet::at(const std::string& name) {
  auto* p = find(name);
  if (!p) throw Error(fmt::format("unknown parameter '{}'", name));
  return *p;
}

const Parameter& ParameterSet::at(const std::string& name) const {
  const auto* p = find(name);
  if (!p) throw Error(fmt::format("unknown parameter '{}'", name));
  return *p;
}

Parameter* ParameterSet::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : params_[it->second].get();
}

const Parameter* ParameterSet::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : params_[it->second].get();
}

std::size_t ParameterSet::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

std::vector<Parameter*> ParameterSet::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) {
    if (!p->grad.same_shape(p->value)) p->grad = Tensor(p->value.rows(), p->value.cols());
    p->grad.fill(0.0);
  }
}

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(Parameter& p) {
  Node n;
  n.param = &p;
  n.needs_grad = grad_enabled_;
  if (grad_enabled_ && !p.grad.same_shape(p.value)) p.grad = Tensor(p.value.rows(), p.value.cols());
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, Backward backward, const char* op) {
  if (checked_ && !value.all_finite()) throw Error(fmt::format("{}: produced a non-finite value", op));
  Node n;
  n.value = std::move(value);
  if (grad_enabled_) {
    for (const Var& v : inputs)
      if (nodes_[static_cast<std::size_t>(v.id)].needs_grad) n.needs_grad = true;
    if (n.needs_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

const Tensor& Tape::value(int id) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(id));
  return n.param ? n.param->value : n.value;
}

Tensor& Tape::grad(int id) {
  Node& n = nodes_.at(static_cast<std::size_t>(id));
  Tensor& g = n.param ? n.param->grad : n.grad;
  const Tensor& v = n.param ? n.param->value : n.value;
  if (!g.same_shape(v)) g = Tensor(v.rows(), v.cols());
  return g;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw Error("backward: loss belongs to another tape");
  const Tensor& lv = value(loss.id);
  if (lv.rows() != 1 || lv.cols() != 1) throw Error(fmt::format("backward: loss must be scalar, got {}", shape_string(lv)));
  if (!grad_enabled_) throw Error("backward: tape was recorded without gradients");
  grad(loss.id)[0] += 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, i);
  }
}

Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) shape_error("matmul", av, bv);
  Tensor out(av.rows(), bv.cols());
  view(out).noalias() = view(av) * view(bv);
  return t.record(std::move(out), {a, b}, [ai = a.id, bi = b.id](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    if (tp.needs_grad(ai)) view(tp.grad(ai)).noalias() += view(g) * view(tp.value(bi)).transpose();
    if (tp.needs_grad(bi)) view(tp.grad(bi)).noalias() += view(tp.value(ai)).transpose() * view(g);
  }, "matmul");
}

Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same("add", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape->record(std::move(out), {a, b}, [ai = a.id, bi = b.id](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    for (int id : {ai, bi}) {
      if (!tp.needs_grad(id)) continue;
      Tensor& gi = tp.grad(id);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  }, "add");
}

Var sub(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same("sub", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape->record(std::move(out), {a, b}, [ai = a.id, bi = b.id](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    if (tp.needs_grad(ai)) {
      Tensor& ga = tp.grad(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.needs_grad(bi)) {
      Tensor& gb = tp.grad(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  }, "sub");
}

Var mul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same("mul", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape->record(std::move(out), {a, b}, [ai = a.id, bi = b.id](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    if (tp.needs_grad(ai)) {
      Tensor& ga = tp.grad(ai);
      const Tensor& bv2 = tp.value(bi);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
    }
    if (tp.needs_grad(bi)) {
      Tensor& gb = tp.grad(bi);
      const Tensor& av2 = tp.value(ai);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
    }
  }, "mul");
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor;
  return a.tape->record(std::move(out), {a}, [ai = a.id, factor](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  }, "scale");
}

Var add_row_bias(Var a, Var bias) {
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != av.cols()) shape_error("add_row_bias", av, bv);
  Tensor out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv[c];
  return a.tape->record(std::move(out), {a, bias}, [ai = a.id, bi = bias.id](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    if (tp.needs_grad(ai)) {
      Tensor& ga = tp.grad(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.needs_grad(bi)) {
      Tensor& gb = tp.grad(bi);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
    }
  }, "add_row_bias");
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error("concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  std::vector<std::size_t> offsets;
  std::vector<int> ids;
  for (const Var& p : parts) {
    if (p.rows() != rows) shape_error("concat_cols", parts[0].value(), p.value());
    offsets.push_back(cols);
    ids.push_back(p.id);
    cols += p.cols();
  }
  Tensor out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(pv.row(r).begin(), pv.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(offsets[k]));
  }
  return parts[0].tape->record(std::move(out), parts, [ids, offsets](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tp.needs_grad(ids[k])) continue;
      Tensor& gk = tp.grad(ids[k]);
      for (std::size_t r = 0; r < gk.rows(); ++r)
        for (std::size_t c = 0; c < gk.cols(); ++c) gk(r, c) += g(r, offsets[k] + c);
    }
  }, "concat_cols");
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  const Tensor& av = a.value();
  if (start + count > av.cols())
    throw Error(fmt::format("slice_cols: columns [{}, {}) outside {}", start, start + count, shape_string(av)));
  Tensor out(av.rows(), count);
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = av(r, start + c);
  return a.tape->record(std::move(out), {a}, [ai = a.id, start](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ai);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) ga(r, start + c) += g(r, c);
  }, "slice_cols");
}

Var slice_rows(Var a, std::size_t start, std::size_t count) {
  const Tensor& av = a.value();
  if (start + count > av.rows())
    throw Error(fmt::format("slice_rows: rows [{}, {}) outside {}", start, start + count, shape_string(av)));
  const std::size_t w = av.cols();
  Tensor out(count, w, std::vector<double>(av.data() + start * w, av.data() + (start + count) * w));
  return a.tape->record(std::move(out), {a}, [ai = a.id, offset = start * w](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[offset + i] += g[i];
  }, "slice_rows");
}

Var mean_rows(Var a) {
  const Tensor& av = a.value();
  if (av.rows() == 0) throw Error("mean_rows: empty input");
  Tensor out(1, av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out[c] += av(r, c);
  const double inv = 1.0 / static_cast<double>(av.rows());
  for (std::size_t c = 0; c < av.cols(); ++c) out[c] *= inv;
  return a.tape->record(std::move(out), {a}, [ai = a.id, inv](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ai);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g[c] * inv;
  }, "mean_rows");
}

Var relu(Var a) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  return a.tape->record(std::move(out), {a}, [ai = a.id](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    const Tensor& x = tp.value(ai);
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > 0.0) ga[i] += g[i];
  }, "relu");
}

Var sigmoid(Var a) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(out[i]);
  return a.tape->record(std::move(out), {a}, [ai = a.id](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  }, "sigmoid");
}

Var softmax_rowwise(Var a) {
  const Tensor& av = a.value();
  if (av.cols() == 0) throw Error("softmax_rowwise: zero columns");
  Tensor out(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double mx = av(r, 0);
    for (std::size_t c = 1; c < av.cols(); ++c) mx = std::max(mx, av(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < av.cols(); ++c) {
      out(r, c) = std::exp(av(r, c) - mx);
      z += out(r, c);
    }
    for (std::size_t c = 0; c < av.cols(); ++c) out(r, c) /= z;
  }
  return a.tape->record(std::move(out), {a}, [ai = a.id](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    Tensor& ga = tp.grad(ai);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += y(r, c) * (g(r, c) - dot);
    }
  }, "softmax_rowwise");
}

Var embedding_lookup(Var table, const std::vector<std::size_t>& ids) {
  const Tensor& tv = table.value();
  Tensor out(ids.size(), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= tv.rows())
      throw Error(fmt::format("embedding_lookup: id {} outside table {}", ids[i], shape_string(tv)));
    std::copy(tv.row(ids[i]).begin(), tv.row(ids[i]).end(), out.row(i).begin());
  }
  return table.tape->record(std::move(out), {table}, [ti = table.id, ids](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    Tensor& gt = tp.grad(ti);
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t c = 0; c < g.cols(); ++c) gt(ids[i], c) += g(i, c);
  }, "embedding_lookup");
}

Var scale_rows(Var a, Var w) {
  const Tensor& av = a.value();
  const Tensor& wv = w.value();
  if (wv.cols() != 1 || wv.rows() != av.rows()) shape_error("scale_rows", av, wv);
  Tensor out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) *= wv[r];
  return a.tape->record(std::move(out), {a, w}, [ai = a.id, wi = w.id](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    if (tp.needs_grad(ai)) {
      const Tensor& wv2 = tp.value(wi);
      Tensor& ga = tp.grad(ai);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += g(r, c) * wv2[r];
    }
    if (tp.needs_grad(wi)) {
      const Tensor& av2 = tp.value(ai);
      Tensor& gw = tp.grad(wi);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gw[r] += g(r, c) * av2(r, c);
    }
  }, "scale_rows");
}

Var segment_sum(Var a, std::size_t group) {
  const Tensor& av = a.value();
  if (group == 0 || av.rows() % group != 0)
    throw Error(fmt::format("segment_sum: {} rows not divisible into groups of {}", av.rows(), group));
  Tensor out(av.rows() / group, av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out(r / group, c) += av(r, c);
  return a.tape->record(std::move(out), {a}, [ai = a.id, group](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ai);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g(r / group, c);
  }, "segment_sum");
}

Var repeat_rows(Var a, std::size_t times) {
  const Tensor& av = a.value();
  if (times == 0) throw Error("repeat_rows: times must be positive");
  Tensor out(av.rows() * times, av.cols());
  for (std::size_t r = 0; r < out.rows(); ++r)
    std::copy(av.row(r / times).begin(), av.row(r / times).end(), out.row(r).begin());
  return a.tape->record(std::move(out), {a}, [ai = a.id, times](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ai);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) ga(r / times, c) += g(r, c);
  }, "repeat_rows");
}

Var sum(Var a) {
  const Tensor& av = a.value();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i];
  return a.tape->record(Tensor(1, 1, s), {a}, [ai = a.id](Tape& tp, int self) {
    const double g = tp.grad(self)[0];
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  }, "sum");
}

Var binary_cross_entropy(Var probs, const std::vector<double>& labels) {
  const Tensor& pv = probs.value();
  if (pv.cols() != 1 || pv.rows() != labels.size() || labels.empty())
    throw Error(fmt::format("binary_cross_entropy: {} predictions for {} labels", shape_string(pv), labels.size()));
  constexpr double kLo = 1e-12;
  constexpr double kHi = 1.0 - 1e-12;
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = std::clamp(pv[i], kLo, kHi);
    loss -= labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
  }
  const double n = static_cast<double>(labels.size());
  return probs.tape->record(Tensor(1, 1, loss / n), {probs}, [pi = probs.id, labels, n](Tape& tp, int self) {
    const double g = tp.grad(self)[0];
    const Tensor& pv2 = tp.value(pi);
    Tensor& gp = tp.grad(pi);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (pv2[i] < kLo || pv2[i] > kHi) continue;  // clamp is flat there
      gp[i] += g * (-(labels[i] / pv2[i]) + (1.0 - labels[i]) / (1.0 - pv2[i])) / n;
    }
  }, "binary_cross_entropy");
}

Var bce_with_logits(Var logits, const std::vector<double>& labels) {
  const Tensor& zv = logits.value();
  if (zv.cols() != 1 || zv.rows() != labels.size() || labels.empty())
    throw Error(fmt::format("bce_with_logits: {} logits for {} labels", shape_string(zv), labels.size()));
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double z = zv[i];
    // log(1 + e^z) - y z, evaluated without overflow.
    loss += std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))) - labels[i] * z;
  }
  const double n = static_cast<double>(labels.size());
  return logits.tape->record(Tensor(1, 1, loss / n), {logits}, [zi = logits.id, labels, n](Tape& tp, int self) {
    const double g = tp.grad(self)[0];
    const Tensor& zv2 = tp.value(zi);
    Tensor& gz = tp.grad(zi);
    for (std::size_t i = 0; i < labels.size(); ++i) gz[i] += g * (stable_sigmoid(zv2[i]) - labels[i]) / n;
  }, "bce_with_logits");
}

}  // namespace reki::tensor
