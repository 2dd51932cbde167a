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

#include "mdmp/autodiff.hpp"

#include "mdmp/errors.hpp"

#include <cmath>
#include <numbers>

namespace mdmp::ad {

using Eigen::Index;

namespace {

using RowMap = Eigen::Map<Matrix>;
using ConstRowMap = Eigen::Map<const Matrix>;

void require_same_tape(Var a, Var b) {
  MDMP_CHECK_ARG(a.tape != nullptr && a.tape == b.tape, "autodiff: operands live on different tapes");
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  MDMP_CHECK_ARG(a.rows() == b.rows() && a.cols() == b.cols(), std::string(op) + ": shape mismatch");
}

}  // namespace

// --- ParameterSet -----------------------------------------------------------

int ParameterSet::add(std::string name, Matrix value) {
  MDMP_CHECK_ARG(find(name) < 0, "duplicate parameter name " + name);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return static_cast<int>(values_.size()) - 1;
}

int ParameterSet::find(const std::string& name) const {
  for (size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return static_cast<int>(i);
  }
  return -1;
}

Index ParameterSet::scalar_count() const {
  Index n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

std::vector<Matrix> ParameterSet::zeros_like() const {
  std::vector<Matrix> out;
  out.reserve(values_.size());
  for (const auto& v : values_) out.push_back(Matrix::Zero(v.rows(), v.cols()));
  return out;
}

// --- Tape -------------------------------------------------------------------

const Matrix& Var::value() const { return tape->value(id); }

const Matrix& Tape::value(int id) const {
  const auto& n = nodes_[static_cast<size_t>(id)];
  return n.external != nullptr ? *n.external : n.owned;
}

Var Tape::constant(Matrix value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::parameter(const ParameterSet& params, int index) {
  Node n;
  n.external = &params.value(index);
  n.needs_grad = record_;
  n.param_index = index;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::push(Matrix value, std::vector<int> inputs, std::function<void(Tape&, int)> backward) {
  Node n;
  n.owned = std::move(value);
  if (record_) {
    for (int in : inputs) n.needs_grad = n.needs_grad || nodes_[static_cast<size_t>(in)].needs_grad;
    if (n.needs_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::add_grad(int id, const Matrix& g) { add_grad_expr(id, g); }

Matrix& Tape::grad_buffer(int id) {
  auto& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.size() == 0) {
    const Matrix& v = value(id);
    n.grad = Matrix::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

void Tape::backward(Var loss, double seed) {
  MDMP_CHECK_ARG(loss.tape == this, "backward: loss is not on this tape");
  MDMP_CHECK_ARG(record_, "backward: tape was not recording");
  MDMP_CHECK_ARG(value(loss.id).size() == 1, "backward: loss must be a scalar");
  add_grad(loss.id, Matrix::Constant(1, 1, seed));
  for (int id = loss.id; id >= 0; --id) {
    auto& n = nodes_[static_cast<size_t>(id)];
    if (!n.backward || n.grad.size() == 0) continue;
    n.backward(*this, id);
  }
}

void Tape::accumulate(GradientSet& grads) const {
  for (const auto& n : nodes_) {
    if (n.param_index < 0 || n.grad.size() == 0) continue;
    auto& g = grads[static_cast<size_t>(n.param_index)];
    if (g.size() == 0) {
      g = n.grad;
    } else {
      g += n.grad;
    }
  }
}

// --- ops --------------------------------------------------------------------

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  MDMP_CHECK_ARG(a.cols() == b.rows(), "matmul: inner dimensions differ");
  const int ia = a.id, ib = b.id;
  return a.tape->push(a.value() * b.value(), {ia, ib}, [ia, ib](Tape& t, int out) {
    const Matrix& g = t.grad(out);
    if (t.needs_grad(ia)) t.add_grad_expr(ia, g * t.value(ib).transpose());
    if (t.needs_grad(ib)) t.add_grad_expr(ib, t.value(ia).transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  require_same_tape(a, b);
  MDMP_CHECK_ARG(a.cols() == b.cols(), "matmul_nt: inner dimensions differ");
  const int ia = a.id, ib = b.id;
  return a.tape->push(a.value() * b.value().transpose(), {ia, ib}, [ia, ib](Tape& t, int out) {
    const Matrix& g = t.grad(out);
    if (t.needs_grad(ia)) t.add_grad_expr(ia, g * t.value(ib));
    if (t.needs_grad(ib)) t.add_grad_expr(ib, g.transpose() * t.value(ia));
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  const int ia = a.id, ib = b.id;
  return a.tape->push(a.value() + b.value(), {ia, ib}, [ia, ib](Tape& t, int out) {
    const Matrix& g = t.grad(out);
    if (t.needs_grad(ia)) t.add_grad(ia, g);
    if (t.needs_grad(ib)) t.add_grad(ib, g);
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  const int ia = a.id, ib = b.id;
  return a.tape->push(a.value() - b.value(), {ia, ib}, [ia, ib](Tape& t, int out) {
    const Matrix& g = t.grad(out);
    if (t.needs_grad(ia)) t.add_grad(ia, g);
    if (t.needs_grad(ib)) t.add_grad_expr(ib, -g);
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  const int ia = a.id, ib = b.id;
  return a.tape->push(a.value().cwiseProduct(b.value()), {ia, ib}, [ia, ib](Tape& t, int out) {
    const Matrix& g = t.grad(out);
    if (t.needs_grad(ia)) t.add_grad_expr(ia, g.cwiseProduct(t.value(ib)));
    if (t.needs_grad(ib)) t.add_grad_expr(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var scale(Var a, double s) {
  const int ia = a.id;
  return a.tape->push(a.value() * s, {ia}, [ia, s](Tape& t, int out) { t.add_grad_expr(ia, t.grad(out) * s); });
}

Var add_scalar(Var a, double s) {
  const int ia = a.id;
  return a.tape->push(a.value().array() + s, {ia}, [ia](Tape& t, int out) { t.add_grad(ia, t.grad(out)); });
}

Var add_row(Var a, Var row) {
  require_same_tape(a, row);
  MDMP_CHECK_ARG(row.rows() == 1 && row.cols() == a.cols(), "add_row: bias must be 1 x cols");
  const int ia = a.id, ir = row.id;
  Matrix v = a.value();
  v.rowwise() += row.value().row(0);
  return a.tape->push(std::move(v), {ia, ir}, [ia, ir](Tape& t, int out) {
    const Matrix& g = t.grad(out);
    if (t.needs_grad(ia)) t.add_grad(ia, g);
    if (t.needs_grad(ir)) t.add_grad_expr(ir, g.colwise().sum());
  });
}

constexpr double kInvSqrt2 = 0.70710678118654752440;

Var gelu(Var a) {
  const int ia = a.id;
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    y.data()[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  }
  return a.tape->push(std::move(y), {ia}, [ia](Tape& t, int out) {
    const Matrix& g = t.grad(out);
    const Matrix& xv = t.value(ia);
    Matrix dx(xv.rows(), xv.cols());
    for (Index i = 0; i < xv.size(); ++i) {
      const double v = xv.data()[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = std::exp(-0.5 * v * v) * 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
      dx.data()[i] = g.data()[i] * (cdf + v * pdf);
    }
    t.add_grad(ia, dx);
  });
}

Var exp(Var a) {
  const int ia = a.id;
  return a.tape->push(a.value().array().exp().matrix(), {ia}, [ia](Tape& t, int out) {
    t.add_grad_expr(ia, t.grad(out).cwiseProduct(t.value(out)));
  });
}

Var clamp(Var a, double lo, double hi) {
  const int ia = a.id;
  return a.tape->push(a.value().cwiseMax(lo).cwiseMin(hi), {ia}, [ia, lo, hi](Tape& t, int out) {
    const Matrix& x = t.value(ia);
    const Matrix& g = t.grad(out);
    t.add_grad_expr(ia, (x.array() >= lo && x.array() <= hi).select(g, 0.0).matrix());
  });
}

Var softmax_rows(Var a) {
  const int ia = a.id;
  Matrix y = a.value();
  for (Index r = 0; r < y.rows(); ++r) {
    const double m = y.row(r).maxCoeff();
    y.row(r) = (y.row(r).array() - m).exp();
    y.row(r) /= y.row(r).sum();
  }
  return a.tape->push(std::move(y), {ia}, [ia](Tape& t, int out) {
    const Matrix& yv = t.value(out);
    const Matrix& g = t.grad(out);
    const Eigen::VectorXd dots = g.cwiseProduct(yv).rowwise().sum();
    Matrix dx = yv.cwiseProduct((g.colwise() - dots).matrix());
    t.add_grad(ia, dx);
  });
}

Var layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
  require_same_tape(x, gamma);
  require_same_tape(x, beta);
  const Index cols = x.cols();
  MDMP_CHECK_ARG(gamma.rows() == 1 && gamma.cols() == cols && beta.rows() == 1 && beta.cols() == cols,
                 "layer_norm: gamma/beta must be 1 x cols");
  const Matrix& xv = x.value();
  Matrix xhat(xv.rows(), cols);
  Eigen::VectorXd inv_std(xv.rows());
  for (Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mu) * inv_std(r);
  }
  Matrix y = xhat.array().rowwise() * gamma.value().row(0).array();
  y.rowwise() += beta.value().row(0);
  const int ix = x.id, ig = gamma.id, ib = beta.id;
  return x.tape->push(std::move(y), {ix, ig, ib},
                      [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, int out) {
                        const Matrix& g = t.grad(out);
                        if (t.needs_grad(ig)) t.add_grad_expr(ig, g.cwiseProduct(xhat).colwise().sum());
                        if (t.needs_grad(ib)) t.add_grad_expr(ib, g.colwise().sum());
                        if (t.needs_grad(ix)) {
                          const Matrix dxhat = g.array().rowwise() * t.value(ig).row(0).array();
                          Matrix dx(dxhat.rows(), dxhat.cols());
                          for (Index r = 0; r < dx.rows(); ++r) {
                            const double m1 = dxhat.row(r).mean();
                            const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
                            dx.row(r) = inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
                          }
                          t.add_grad(ix, dx);
                        }
                      });
}

Var dropout(Var a, double p, Rng& rng) {
  MDMP_CHECK_ARG(p >= 0.0 && p < 1.0, "dropout probability must be in [0, 1)");
  if (p == 0.0) return a;
  const int ia = a.id;
  const Matrix& x = a.value();
  Matrix mask(x.rows(), x.cols());
  const double keep = 1.0 / (1.0 - p);
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.bernoulli(p) ? 0.0 : keep;
  Matrix y = x.cwiseProduct(mask);
  return a.tape->push(std::move(y), {ia}, [ia, mask = std::move(mask)](Tape& t, int out) {
    t.add_grad_expr(ia, t.grad(out).cwiseProduct(mask));
  });
}

Var slice_cols(Var a, Index start, Index count) {
  MDMP_CHECK_ARG(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols: range out of bounds");
  const int ia = a.id;
  return a.tape->push(a.value().middleCols(start, count), {ia}, [ia, start, count](Tape& t, int out) {
    t.grad_buffer(ia).middleCols(start, count) += t.grad(out);
  });
}

Var slice_rows(Var a, Index start, Index count) {
  MDMP_CHECK_ARG(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows: range out of bounds");
  const int ia = a.id;
  return a.tape->push(a.value().middleRows(start, count), {ia}, [ia, start, count](Tape& t, int out) {
    t.grad_buffer(ia).middleRows(start, count) += t.grad(out);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  MDMP_CHECK_ARG(!parts.empty(), "concat_cols: no inputs");
  Tape* tape = parts[0].tape;
  const Index rows = parts[0].rows();
  Index cols = 0;
  std::vector<int> ids;
  for (const Var& p : parts) {
    MDMP_CHECK_ARG(p.tape == tape && p.rows() == rows, "concat_cols: row counts differ");
    cols += p.cols();
    ids.push_back(p.id);
  }
  Matrix y(rows, cols);
  Index c = 0;
  for (const Var& p : parts) {
    y.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return tape->push(std::move(y), ids, [ids](Tape& t, int out) {
    const Matrix& g = t.grad(out);
    Index off = 0;
    for (int id : ids) {
      const Index w = t.value(id).cols();
      if (t.needs_grad(id)) t.add_grad_expr(id, g.middleCols(off, w));
      off += w;
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  MDMP_CHECK_ARG(!parts.empty(), "concat_rows: no inputs");
  Tape* tape = parts[0].tape;
  const Index cols = parts[0].cols();
  Index rows = 0;
  std::vector<int> ids;
  for (const Var& p : parts) {
    MDMP_CHECK_ARG(p.tape == tape && p.cols() == cols, "concat_rows: column counts differ");
    rows += p.rows();
    ids.push_back(p.id);
  }
  Matrix y(rows, cols);
  Index r = 0;
  for (const Var& p : parts) {
    y.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return tape->push(std::move(y), ids, [ids](Tape& t, int out) {
    const Matrix& g = t.grad(out);
    Index off = 0;
    for (int id : ids) {
      const Index h = t.value(id).rows();
      if (t.needs_grad(id)) t.add_grad_expr(id, g.middleRows(off, h));
      off += h;
    }
  });
}

Var sum(Var a) {
  const int ia = a.id;
  return a.tape->push(Matrix::Constant(1, 1, a.value().sum()), {ia}, [ia](Tape& t, int out) {
    const Matrix& x = t.value(ia);
    t.add_grad_expr(ia, Matrix::Constant(x.rows(), x.cols(), t.grad(out)(0, 0)));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  MDMP_CHECK_ARG(n > 0, "mean of an empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var graph_conv(Var h, Var adjacency, Var weights) {
  require_same_tape(h, adjacency);
  require_same_tape(h, weights);
  const Matrix& A = adjacency.value();
  const Matrix& W = weights.value();
  const Index K = A.rows();
  const Index fin = W.rows();
  const Index fout = W.cols();
  MDMP_CHECK_ARG(A.cols() == K, "graph_conv: adjacency must be square");
  MDMP_CHECK_ARG(h.cols() == K * fin, "graph_conv: row width must equal K * F_in");
  const Index R = h.rows();
  // Stacked (R*K) x F views of the per-row node blocks.
  const ConstRowMap hs(h.value().data(), R * K, fin);
  const Matrix hw = hs * W;
  Matrix y(R, K * fout);
  for (Index r = 0; r < R; ++r) {
    RowMap(y.row(r).data(), K, fout).noalias() = A * ConstRowMap(hw.data() + r * K * fout, K, fout);
  }
  const int ih = h.id, ia = adjacency.id, iw = weights.id;
  return h.tape->push(std::move(y), {ih, ia, iw}, [ih, ia, iw, K, fin, fout, R, hw](Tape& t, int out) {
    const Matrix& Av = t.value(ia);
    const Matrix& Wv = t.value(iw);
    const Matrix& g = t.grad(out);
    Matrix atg(R * K, fout);
    Matrix dA = Matrix::Zero(K, K);
    for (Index r = 0; r < R; ++r) {
      const ConstRowMap gr(g.data() + r * K * fout, K, fout);
      RowMap(atg.data() + r * K * fout, K, fout).noalias() = Av.transpose() * gr;
      dA.noalias() += gr * ConstRowMap(hw.data() + r * K * fout, K, fout).transpose();
    }
    if (t.needs_grad(ia)) t.add_grad(ia, dA);
    if (t.needs_grad(iw)) {
      const ConstRowMap hs2(t.value(ih).data(), R * K, fin);
      t.add_grad_expr(iw, hs2.transpose() * atg);
    }
    if (t.needs_grad(ih)) {
      const Matrix dh = atg * Wv.transpose();
      t.add_grad(ih, Matrix(ConstRowMap(dh.data(), R, K * fin)));
    }
  });
}

}  // namespace mdmp::ad
