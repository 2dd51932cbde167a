// Copyright 2026 The MDMP Authors.
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. A Tape records every operation of one forward pass; backward()
// walks it in reverse and accumulates gradients. Parameters live outside the
// tape in a ParameterSet and are referenced, not copied.

#pragma once

#include "mdmp/rng.hpp"
#include "mdmp/tensor.hpp"

#include <functional>
#include <string>
#include <vector>

namespace mdmp::ad {

// Ordered, named collection of trainable tensors.
class ParameterSet {
 public:
  int add(std::string name, Matrix value);

  [[nodiscard]] int size() const { return static_cast<int>(values_.size()); }
  [[nodiscard]] const std::string& name(int i) const { return names_[static_cast<size_t>(i)]; }
  [[nodiscard]] const Matrix& value(int i) const { return values_[static_cast<size_t>(i)]; }
  Matrix& value(int i) { return values_[static_cast<size_t>(i)]; }
  [[nodiscard]] int find(const std::string& name) const;  // -1 when absent
  [[nodiscard]] Eigen::Index scalar_count() const;

  [[nodiscard]] std::vector<Matrix> zeros_like() const;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
};

// Gradients parallel to a ParameterSet.
using GradientSet = std::vector<Matrix>;

class Tape;

// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  [[nodiscard]] const Matrix& value() const;
  [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
  [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
};

class Tape {
 public:
  // With record = false the tape only evaluates; no backward graph is kept.
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var parameter(const ParameterSet& params, int index);

  // Seeds d(loss)/d(loss) = seed and propagates. loss must be 1x1.
  void backward(Var loss, double seed = 1.0);

  // Adds parameter gradients into grads (sized like the ParameterSet).
  void accumulate(GradientSet& grads) const;

  [[nodiscard]] bool recording() const { return record_; }
  [[nodiscard]] const Matrix& value(int id) const;
  [[nodiscard]] const Matrix& grad(int id) const { return nodes_[static_cast<size_t>(id)].grad; }
  [[nodiscard]] bool needs_grad(int id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }
  [[nodiscard]] size_t size() const { return nodes_.size(); }

  // Adds g into the gradient of node id (allocating on first use).
  void add_grad(int id, const Matrix& g);
  // Gradient storage for id, zero-filled to the value's shape on first use.
  Matrix& grad_buffer(int id);
  template <typename Expr>
  void add_grad_expr(int id, const Expr& g) {
    auto& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  // Registers an op output. backward receives the tape and the output id.
  Var push(Matrix value, std::vector<int> inputs, std::function<void(Tape&, int)> backward);

 private:
  struct Node {
    Matrix owned;
    const Matrix* external = nullptr;
    Matrix grad;
    bool needs_grad = false;
    int param_index = -1;
    std::function<void(Tape&, int)> backward;
  };
  std::vector<Node> nodes_;
  bool record_;
};

// --- ops -------------------------------------------------------------------

Var matmul(Var a, Var b);     // a * b
Var matmul_nt(Var a, Var b);  // a * b^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);             // elementwise
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var add_row(Var a, Var row);       // broadcast a 1xC row over every row of a
Var gelu(Var a);                   // exact erf form
Var exp(Var a);
Var clamp(Var a, double lo, double hi);
Var softmax_rows(Var a);
Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-5);
Var dropout(Var a, double p, Rng& rng);  // inverted dropout
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var sum(Var a);   // 1x1
Var mean(Var a);  // 1x1

// Graph convolution applied independently to each row of h.
// Row r of h is a K x F_in node-feature block stored row-major; the result row
// r is the K x F_out block A * H_r * W.
Var graph_conv(Var h, Var adjacency, Var weights);

}  // namespace mdmp::ad
