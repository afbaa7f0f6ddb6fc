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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace reki::tensor {

/// Dense row-major matrix of doubles. Vectors are 1 x n.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::vector<std::size_t> shape() const { return {rows_, cols_}; }
  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  const std::vector<double>& values() const { return data_; }

  void fill(double v);
  bool all_finite() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

std::string shape_string(const Tensor& t);

/// A named trainable tensor. `grad` has the value's shape and accumulates.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

/// Owns parameters in insertion order; addresses are stable.
class ParameterSet {
 public:
  Parameter& add(const std::string& name, Tensor init);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.contains(name); }

  std::size_t size() const { return params_.size(); }
  std::size_t element_count() const;
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }
  std::vector<Parameter*> all();

  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Tape;

/// Handle to a tape node.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Records operations for reverse-mode differentiation. Nodes are appended in
/// execution order, so the vector is already topologically sorted. With
/// gradients disabled no backward rules are recorded.
class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Binds a parameter by reference; backward accumulates into param.grad.
  Var param(Parameter& p);

  /// Appends an op result. `backward` may be empty for constants.
  Var record(Tensor value, const std::vector<Var>& inputs, Backward backward, const char* op);

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded rule once in reverse.
  void backward(Var loss);

  const Tensor& value(int id) const;
  /// Gradient buffer of node `id`, zero-initialised on first access.
  Tensor& grad(int id);
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

  bool grad_enabled() const { return grad_enabled_; }
  /// When set, every op result is scanned and NaN/Inf throws.
  void set_checked(bool on) { checked_ = on; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Parameter* param = nullptr;
    Backward backward;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
  bool grad_enabled_;
  bool checked_ = true;
};

// Ops. Shapes are checked and mismatches name both operands.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// a (n x k) + bias (1 x k) broadcast over rows; the only broadcast supported.
Var add_row_bias(Var a, Var bias);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var slice_rows(Var a, std::size_t start, std::size_t count);
/// Column means: n x k -> 1 x k.
Var mean_rows(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var softmax_rowwise(Var a);
/// Rows `ids` of `table`; backward scatter-adds into the table gradient.
Var embedding_lookup(Var table, const std::vector<std::size_t>& ids);
/// Row i of `a` times w(i, 0); w is n x 1.
Var scale_rows(Var a, Var w);
/// Each of the n/group consecutive row blocks summed into one row.
Var segment_sum(Var a, std::size_t group);
/// Every row of `a` repeated `times` times consecutively.
Var repeat_rows(Var a, std::size_t times);
Var sum(Var a);
/// Batch-mean binary cross entropy of probabilities (clamped to
/// [1e-12, 1 - 1e-12]) against constant 0/1 labels (n x 1). Returns 1 x 1.
Var binary_cross_entropy(Var probs, const std::vector<double>& labels);
/// Same loss computed from logits without the clamp.
Var bce_with_logits(Var logits, const std::vector<double>& labels);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction over every parameter of a set.
class Adam {
 public:
  Adam(ParameterSet& params, AdamConfig config = {});
  void step();
  void set_lr(double lr) { config_.lr = lr; }
  std::int64_t steps() const { return t_; }

 private:
  ParameterSet& params_;
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::int64_t t_ = 0;
};

/// Scalar loss of the bound parameters, one Var per parameter in order.
struct LossClosure {
  std::size_t arity = 0;
  std::function<Var(Tape&, const std::vector<Var>&)> fn;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Central differences on a seeded sample of `samples` coordinates drawn
/// across all parameters. Relative error is |a - n| / max(|a|, |n|, 1e-5).
GradCheckReport grad_check(const LossClosure& closure, const std::vector<Parameter*>& params, double step = 1e-6,
                           std::uint64_t seed = 0, std::size_t samples = 64);

/// Binary checkpoint: "REKIPAR1" | u32 count | per tensor (u16 name_len,
/// name, u32 ndim, ndim x u64 dims, f64 data) | u64 CRC-64 of everything
/// after the magic.
void save_checkpoint(const std::string& path, const ParameterSet& params);
/// Loads into `params`; names and shapes must match exactly.
void load_checkpoint(const std::string& path, ParameterSet& params);
std::vector<std::pair<std::string, Tensor>> read_checkpoint(const std::string& path);

}  // namespace reki::tensor
