// Copyright 2026 The ptrsql Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// arrays. Nodes live on a Tape in creation order; Backward walks the tape in
// reverse, so every op only needs to know its direct inputs. Scalar type is
// a template parameter: float for training, double for gradient checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ptrsql/error.hpp"
#include "ptrsql/rng.hpp"

namespace ptrsql::tensor {

template <class T>
struct Node {
  int rows = 0;
  int cols = 1;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::function<void()> backward;

  int size() const { return rows * cols; }
  T* g() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad.data();
  }
  bool has_grad() const { return !grad.empty(); }
  T scalar() const { return value.at(0); }
};

template <class T>
using Var = Node<T>*;

template <class T>
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var<T> Make(int rows, int cols) {
    Node<T>& n = nodes_.emplace_back();
    n.rows = rows;
    n.cols = cols;
    n.value.assign(static_cast<std::size_t>(rows) * cols, T(0));
    return &n;
  }

  Var<T> Constant(std::vector<T> data, int rows, int cols = 1) {
    if (static_cast<std::size_t>(rows) * cols != data.size()) throw ShapeError("constant shape mismatch");
    Node<T>& n = nodes_.emplace_back();
    n.rows = rows;
    n.cols = cols;
    n.value = std::move(data);
    return &n;
  }

  // Should an op with these inputs record a backward rule?
  template <class... Vs>
  bool Tracks(Vs... inputs) const {
    return record_ && (... || inputs->requires_grad);
  }
  bool TracksAll(std::span<const Var<T>> inputs) const {
    if (!record_) return false;
    for (auto v : inputs)
      if (v->requires_grad) return true;
    return false;
  }

  // Seeds d(loss)/d(loss) = seed and propagates through the whole tape.
  void Backward(Var<T> loss, T seed = T(1)) {
    if (loss->size() != 1) throw ShapeError("backward needs a scalar loss");
    loss->g()[0] += seed;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
      if (it->backward && it->has_grad()) it->backward();
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  bool record_;
  std::deque<Node<T>> nodes_;
};

// ---------------------------------------------------------------------------
// Kernels

template <class T>
inline T DotKernel(const T* a, const T* b, int n) {
  T s = T(0);
#pragma omp simd reduction(+ : s)
  for (int i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <class T>
inline void AxpyKernel(T alpha, const T* x, T* y, int n) {
#pragma omp simd
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// y += W x for row-major W [m x n].
template <class T>
inline void GemvKernel(const T* w, const T* x, T* y, int m, int n) {
  for (int i = 0; i < m; ++i) y[i] += DotKernel(w + static_cast<std::size_t>(i) * n, x, n);
}

// x_grad += W^T y_grad and W_grad += y_grad x^T.
template <class T>
inline void GemvBackward(const T* w, const T* x, const T* gy, T* gw, T* gx, int m, int n) {
  for (int i = 0; i < m; ++i) {
    const T d = gy[i];
    if (d == T(0)) continue;
    if (gx) AxpyKernel(d, w + static_cast<std::size_t>(i) * n, gx, n);
    if (gw) AxpyKernel(d, x, gw + static_cast<std::size_t>(i) * n, n);
  }
}

template <class T>
inline T Sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// ---------------------------------------------------------------------------
// Elementwise and structural ops

template <class T>
Var<T> Add(Tape<T>& tape, Var<T> a, Var<T> b) {
  if (a->size() != b->size()) throw ShapeError("add: size mismatch");
  Var<T> out = tape.Make(a->rows, a->cols);
  for (int i = 0; i < a->size(); ++i) out->value[i] = a->value[i] + b->value[i];
  if (tape.Tracks(a, b)) {
    out->requires_grad = true;
    out->backward = [a, b, out] {
      const int n = out->size();
      if (a->requires_grad) AxpyKernel(T(1), out->grad.data(), a->g(), n);
      if (b->requires_grad) AxpyKernel(T(1), out->grad.data(), b->g(), n);
    };
  }
  return out;
}

template <class T>
Var<T> Mul(Tape<T>& tape, Var<T> a, Var<T> b) {
  if (a->size() != b->size()) throw ShapeError("mul: size mismatch");
  Var<T> out = tape.Make(a->rows, a->cols);
  for (int i = 0; i < a->size(); ++i) out->value[i] = a->value[i] * b->value[i];
  if (tape.Tracks(a, b)) {
    out->requires_grad = true;
    out->backward = [a, b, out] {
      const T* go = out->grad.data();
      if (a->requires_grad) {
        T* ga = a->g();
        for (int i = 0; i < out->size(); ++i) ga[i] += go[i] * b->value[i];
      }
      if (b->requires_grad) {
        T* gb = b->g();
        for (int i = 0; i < out->size(); ++i) gb[i] += go[i] * a->value[i];
      }
    };
  }
  return out;
}

// Elementwise product with a constant (e.g. a dropout mask).
template <class T>
Var<T> MulConst(Tape<T>& tape, Var<T> a, const std::vector<T>& c) {
  if (static_cast<std::size_t>(a->size()) != c.size()) throw ShapeError("mul_const: size mismatch");
  Var<T> out = tape.Make(a->rows, a->cols);
  for (int i = 0; i < a->size(); ++i) out->value[i] = a->value[i] * c[i];
  if (tape.Tracks(a)) {
    out->requires_grad = true;
    out->backward = [a, out, c] {
      T* ga = a->g();
      for (int i = 0; i < out->size(); ++i) ga[i] += out->grad[i] * c[i];
    };
  }
  return out;
}

template <class T>
Var<T> Scale(Tape<T>& tape, Var<T> a, T s) {
  Var<T> out = tape.Make(a->rows, a->cols);
  for (int i = 0; i < a->size(); ++i) out->value[i] = a->value[i] * s;
  if (tape.Tracks(a)) {
    out->requires_grad = true;
    out->backward = [a, out, s] { AxpyKernel(s, out->grad.data(), a->g(), out->size()); };
  }
  return out;
}

template <class T>
Var<T> Tanh(Tape<T>& tape, Var<T> a) {
  Var<T> out = tape.Make(a->rows, a->cols);
  for (int i = 0; i < a->size(); ++i) out->value[i] = std::tanh(a->value[i]);
  if (tape.Tracks(a)) {
    out->requires_grad = true;
    out->backward = [a, out] {
      T* ga = a->g();
      for (int i = 0; i < out->size(); ++i) {
        const T y = out->value[i];
        ga[i] += out->grad[i] * (T(1) - y * y);
      }
    };
  }
  return out;
}

template <class T>
Var<T> Sigmoid(Tape<T>& tape, Var<T> a) {
  Var<T> out = tape.Make(a->rows, a->cols);
  for (int i = 0; i < a->size(); ++i) out->value[i] = Sigmoid(a->value[i]);
  if (tape.Tracks(a)) {
    out->requires_grad = true;
    out->backward = [a, out] {
      T* ga = a->g();
      for (int i = 0; i < out->size(); ++i) {
        const T y = out->value[i];
        ga[i] += out->grad[i] * y * (T(1) - y);
      }
    };
  }
  return out;
}

// log(sigmoid(a)), stable for large |a|.
template <class T>
Var<T> LogSigmoid(Tape<T>& tape, Var<T> a) {
  Var<T> out = tape.Make(a->rows, a->cols);
  for (int i = 0; i < a->size(); ++i) {
    const T x = a->value[i];
    out->value[i] = x >= T(0) ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
  }
  if (tape.Tracks(a)) {
    out->requires_grad = true;
    out->backward = [a, out] {
      T* ga = a->g();
      for (int i = 0; i < out->size(); ++i) ga[i] += out->grad[i] * (T(1) - Sigmoid(a->value[i]));
    };
  }
  return out;
}

// Concatenates vectors (or flattens matrices) end to end.
template <class T>
Var<T> Concat(Tape<T>& tape, std::vector<Var<T>> parts) {
  int n = 0;
  for (auto p : parts) n += p->size();
  Var<T> out = tape.Make(n, 1);
  int off = 0;
  for (auto p : parts) {
    std::copy(p->value.begin(), p->value.end(), out->value.begin() + off);
    off += p->size();
  }
  if (tape.TracksAll(parts)) {
    out->requires_grad = true;
    out->backward = [parts = std::move(parts), out] {
      int off = 0;
      for (auto p : parts) {
        if (p->requires_grad) AxpyKernel(T(1), out->grad.data() + off, p->g(), p->size());
        off += p->size();
      }
    };
  }
  return out;
}

template <class T>
Var<T> Slice(Tape<T>& tape, Var<T> a, int offset, int length) {
  if (offset < 0 || length < 0 || offset + length > a->size()) throw ShapeError("slice out of range");
  Var<T> out = tape.Make(length, 1);
  std::copy(a->value.begin() + offset, a->value.begin() + offset + length, out->value.begin());
  if (tape.Tracks(a)) {
    out->requires_grad = true;
    out->backward = [a, out, offset, length] { AxpyKernel(T(1), out->grad.data(), a->g() + offset, length); };
  }
  return out;
}

// Zero-pads a vector to length n (data at the given offset).
template <class T>
Var<T> Pad(Tape<T>& tape, Var<T> a, int n, int offset = 0) {
  if (offset < 0 || offset + a->size() > n) throw ShapeError("pad: target too small");
  Var<T> out = tape.Make(n, 1);
  std::copy(a->value.begin(), a->value.end(), out->value.begin() + offset);
  if (tape.Tracks(a)) {
    out->requires_grad = true;
    out->backward = [a, out, offset] { AxpyKernel(T(1), out->grad.data() + offset, a->g(), a->size()); };
  }
  return out;
}

// Stacks equal-length vectors as the rows of a matrix.
template <class T>
Var<T> StackRows(Tape<T>& tape, std::vector<Var<T>> rows) {
  if (rows.empty()) throw ShapeError("stack of nothing");
  const int d = rows.front()->size();
  for (auto r : rows)
    if (r->size() != d) throw ShapeError("stack: ragged rows");
  Var<T> out = tape.Make(static_cast<int>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i]->value.begin(), rows[i]->value.end(), out->value.begin() + i * d);
  if (tape.TracksAll(rows)) {
    out->requires_grad = true;
    out->backward = [rows = std::move(rows), out, d] {
      for (std::size_t i = 0; i < rows.size(); ++i)
        if (rows[i]->requires_grad) AxpyKernel(T(1), out->grad.data() + i * d, rows[i]->g(), d);
    };
  }
  return out;
}

// Mean of the rows of a matrix.
template <class T>
Var<T> MeanRows(Tape<T>& tape, Var<T> m) {
  const int r = m->rows, d = m->cols;
  if (r == 0) throw ShapeError("mean of no rows");
  Var<T> out = tape.Make(d, 1);
  const T inv = T(1) / T(r);
  for (int i = 0; i < r; ++i) AxpyKernel(inv, m->value.data() + i * d, out->value.data(), d);
  if (tape.Tracks(m)) {
    out->requires_grad = true;
    out->backward = [m, out, r, d, inv] {
      for (int i = 0; i < r; ++i) AxpyKernel(inv, out->grad.data(), m->g() + i * d, d);
    };
  }
  return out;
}

template <class T>
Var<T> Row(Tape<T>& tape, Var<T> m, int i) {
  if (i < 0 || i >= m->rows) throw IndexError("row index out of range");
  return Slice(tape, m, i * m->cols, m->cols);
}

template <class T>
Var<T> Sum(Tape<T>& tape, const std::vector<Var<T>>& terms, T scale = T(1)) {
  Var<T> out = tape.Make(1, 1);
  for (auto t : terms) {
    if (t->size() != 1) throw ShapeError("sum expects scalars");
    out->value[0] += t->value[0];
  }
  out->value[0] *= scale;
  if (tape.TracksAll(terms)) {
    out->requires_grad = true;
    out->backward = [terms, out, scale] {
      for (auto t : terms)
        if (t->requires_grad) t->g()[0] += out->grad[0] * scale;
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra

// W [m x n] times x [n].
template <class T>
Var<T> MatVec(Tape<T>& tape, Var<T> w, Var<T> x) {
  if (w->cols != x->size()) throw ShapeError("matvec: " + std::to_string(w->rows) + "x" +
                                             std::to_string(w->cols) + " by " + std::to_string(x->size()));
  Var<T> out = tape.Make(w->rows, 1);
  GemvKernel(w->value.data(), x->value.data(), out->value.data(), w->rows, w->cols);
  if (tape.Tracks(w, x)) {
    out->requires_grad = true;
    out->backward = [w, x, out] {
      GemvBackward(w->value.data(), x->value.data(), out->grad.data(), w->requires_grad ? w->g() : nullptr,
                   x->requires_grad ? x->g() : nullptr, w->rows, w->cols);
    };
  }
  return out;
}

// W x + b.
template <class T>
Var<T> Affine(Tape<T>& tape, Var<T> w, Var<T> x, Var<T> b) {
  if (b->size() != w->rows) throw ShapeError("affine: bias size");
  Var<T> out = tape.Make(w->rows, 1);
  std::copy(b->value.begin(), b->value.end(), out->value.begin());
  GemvKernel(w->value.data(), x->value.data(), out->value.data(), w->rows, w->cols);
  if (w->cols != x->size()) throw ShapeError("affine: input size");
  if (tape.Tracks(w, x, b)) {
    out->requires_grad = true;
    out->backward = [w, x, b, out] {
      GemvBackward(w->value.data(), x->value.data(), out->grad.data(), w->requires_grad ? w->g() : nullptr,
                   x->requires_grad ? x->g() : nullptr, w->rows, w->cols);
      if (b->requires_grad) AxpyKernel(T(1), out->grad.data(), b->g(), b->size());
    };
  }
  return out;
}

// M^T a for M [n x d], a [n]: the a-weighted sum of M's rows.
template <class T>
Var<T> MatTVec(Tape<T>& tape, Var<T> m, Var<T> a) {
  if (m->rows != a->size()) throw ShapeError("mat_t_vec: size mismatch");
  const int n = m->rows, d = m->cols;
  Var<T> out = tape.Make(d, 1);
  for (int i = 0; i < n; ++i) AxpyKernel(a->value[i], m->value.data() + i * d, out->value.data(), d);
  if (tape.Tracks(m, a)) {
    out->requires_grad = true;
    out->backward = [m, a, out, n, d] {
      const T* go = out->grad.data();
      if (a->requires_grad) {
        T* ga = a->g();
        for (int i = 0; i < n; ++i) ga[i] += DotKernel(m->value.data() + i * d, go, d);
      }
      if (m->requires_grad) {
        T* gm = m->g();
        for (int i = 0; i < n; ++i) AxpyKernel(a->value[i], go, gm + i * d, d);
      }
    };
  }
  return out;
}

// Gathers rows of an embedding table; backward scatters only into the
// touched rows.
template <class T>
Var<T> EmbeddingLookup(Tape<T>& tape, Var<T> table, std::vector<int> ids) {
  const int d = table->cols;
  for (int id : ids)
    if (id < 0 || id >= table->rows) throw IndexError("embedding id " + std::to_string(id) + " out of range");
  Var<T> out = tape.Make(static_cast<int>(ids.size()), d);
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(table->value.begin() + static_cast<std::size_t>(ids[i]) * d, d, out->value.begin() + i * d);
  if (tape.Tracks(table)) {
    out->requires_grad = true;
    out->backward = [table, out, ids = std::move(ids), d] {
      T* gt = table->g();
      for (std::size_t i = 0; i < ids.size(); ++i)
        AxpyKernel(T(1), out->grad.data() + i * d, gt + static_cast<std::size_t>(ids[i]) * d, d);
    };
  }
  return out;
}

template <class T>
Var<T> EmbeddingRow(Tape<T>& tape, Var<T> table, int id) {
  Var<T> m = EmbeddingLookup(tape, table, {id});
  m->rows = table->cols;
  m->cols = 1;
  return m;
}

// ---------------------------------------------------------------------------
// LSTM

template <class T>
struct LstmWeights {
  Var<T> w_input;   // [4d x d_in], gate order: input, forget, cell, output
  Var<T> w_hidden;  // [4d x d]
  Var<T> bias;      // [4d]
  int hidden() const { return w_hidden->cols; }
};

// Returns [h'; c'] as one node of length 2d.
template <class T>
Var<T> LstmCellPacked(Tape<T>& tape, Var<T> x, Var<T> h, Var<T> c, const LstmWeights<T>& w) {
  const int d = w.hidden();
  const int din = w.w_input->cols;
  if (w.w_input->rows != 4 * d || w.w_hidden->rows != 4 * d || w.bias->size() != 4 * d)
    throw ShapeError("lstm: weight shapes");
  if (x->size() != din || h->size() != d || c->size() != d) throw ShapeError("lstm: input/state shapes");
  std::vector<T> gates(w.bias->value);
  GemvKernel(w.w_input->value.data(), x->value.data(), gates.data(), 4 * d, din);
  GemvKernel(w.w_hidden->value.data(), h->value.data(), gates.data(), 4 * d, d);
  for (int k = 0; k < d; ++k) {
    gates[k] = Sigmoid(gates[k]);
    gates[d + k] = Sigmoid(gates[d + k]);
    gates[2 * d + k] = std::tanh(gates[2 * d + k]);
    gates[3 * d + k] = Sigmoid(gates[3 * d + k]);
  }
  Var<T> out = tape.Make(2 * d, 1);
  std::vector<T> tanh_c(d);
  for (int k = 0; k < d; ++k) {
    const T cn = gates[d + k] * c->value[k] + gates[k] * gates[2 * d + k];
    tanh_c[k] = std::tanh(cn);
    out->value[k] = gates[3 * d + k] * tanh_c[k];
    out->value[d + k] = cn;
  }
  if (tape.Tracks(x, h, c, w.w_input, w.w_hidden, w.bias)) {
    out->requires_grad = true;
    out->backward = [x, h, c, w, out, d, din, gates = std::move(gates), tanh_c = std::move(tanh_c)] {
      const T* gh = out->grad.data();
      const T* gc = out->grad.data() + d;
      std::vector<T> dz(4 * d);
      T* gc_prev = c->requires_grad ? c->g() : nullptr;
      for (int k = 0; k < d; ++k) {
        const T i = gates[k], f = gates[d + k], g = gates[2 * d + k], o = gates[3 * d + k];
        const T dc = gc[k] + gh[k] * o * (T(1) - tanh_c[k] * tanh_c[k]);
        dz[3 * d + k] = gh[k] * tanh_c[k] * o * (T(1) - o);
        dz[k] = dc * g * i * (T(1) - i);
        dz[d + k] = dc * c->value[k] * f * (T(1) - f);
        dz[2 * d + k] = dc * i * (T(1) - g * g);
        if (gc_prev) gc_prev[k] += dc * f;
      }
      GemvBackward(w.w_input->value.data(), x->value.data(), dz.data(),
                   w.w_input->requires_grad ? w.w_input->g() : nullptr, x->requires_grad ? x->g() : nullptr,
                   4 * d, din);
      GemvBackward(w.w_hidden->value.data(), h->value.data(), dz.data(),
                   w.w_hidden->requires_grad ? w.w_hidden->g() : nullptr, h->requires_grad ? h->g() : nullptr,
                   4 * d, d);
      if (w.bias->requires_grad) AxpyKernel(T(1), dz.data(), w.bias->g(), 4 * d);
    };
  }
  return out;
}

// Standard LSTM cell: i, f, o sigmoid gates and a tanh candidate.
template <class T>
std::pair<Var<T>, Var<T>> LstmCell(Tape<T>& tape, Var<T> x, Var<T> h, Var<T> c, const LstmWeights<T>& w) {
  Var<T> packed = LstmCellPacked(tape, x, h, c, w);
  const int d = w.hidden();
  return {Slice(tape, packed, 0, d), Slice(tape, packed, d, d)};
}

// ---------------------------------------------------------------------------
// Softmax family

inline void CheckMask(const std::vector<std::uint8_t>* mask, int n) {
  if (!mask) return;
  if (static_cast<int>(mask->size()) != n) throw ShapeError("mask size mismatch");
  if (std::find(mask->begin(), mask->end(), 1) == mask->end()) throw AllMasked("every entry is masked");
}

// Log-softmax over the unmasked entries; masked entries are -inf. A null
// mask keeps every entry.
template <class T>
Var<T> LogSoftmax(Tape<T>& tape, Var<T> x, const std::vector<std::uint8_t>* mask = nullptr) {
  const int n = x->size();
  CheckMask(mask, n);
  std::vector<std::uint8_t> keep = mask ? *mask : std::vector<std::uint8_t>(n, 1);
  T mx = -std::numeric_limits<T>::infinity();
  for (int i = 0; i < n; ++i)
    if (keep[i]) mx = std::max(mx, x->value[i]);
  if (!std::isfinite(mx)) throw AllMasked("no finite score among unmasked entries");
  T z = T(0);
  for (int i = 0; i < n; ++i)
    if (keep[i] && x->value[i] > -std::numeric_limits<T>::infinity()) z += std::exp(x->value[i] - mx);
  const T lse = mx + std::log(z);
  Var<T> out = tape.Make(x->rows, x->cols);
  for (int i = 0; i < n; ++i)
    out->value[i] = keep[i] ? x->value[i] - lse : -std::numeric_limits<T>::infinity();
  if (tape.Tracks(x)) {
    out->requires_grad = true;
    out->backward = [x, out, n, keep = std::move(keep)] {
      T total = T(0);
      for (int i = 0; i < n; ++i)
        if (keep[i]) total += out->grad[i];
      T* gx = x->g();
      for (int i = 0; i < n; ++i)
        if (keep[i] && std::isfinite(out->value[i])) gx[i] += out->grad[i] - std::exp(out->value[i]) * total;
    };
  }
  return out;
}

// Softmax over the unmasked entries; masked entries are exactly 0.
template <class T>
Var<T> MaskedSoftmax(Tape<T>& tape, Var<T> x, const std::vector<std::uint8_t>* mask = nullptr) {
  const int n = x->size();
  CheckMask(mask, n);
  std::vector<std::uint8_t> keep = mask ? *mask : std::vector<std::uint8_t>(n, 1);
  T mx = -std::numeric_limits<T>::infinity();
  for (int i = 0; i < n; ++i)
    if (keep[i]) mx = std::max(mx, x->value[i]);
  if (!std::isfinite(mx)) throw AllMasked("no finite score among unmasked entries");
  Var<T> out = tape.Make(x->rows, x->cols);
  T z = T(0);
  for (int i = 0; i < n; ++i) {
    out->value[i] = keep[i] ? std::exp(x->value[i] - mx) : T(0);
    z += out->value[i];
  }
  for (int i = 0; i < n; ++i) out->value[i] /= z;
  if (tape.Tracks(x)) {
    out->requires_grad = true;
    out->backward = [x, out, n] {
      T dot = T(0);
      for (int i = 0; i < n; ++i) dot += out->grad[i] * out->value[i];
      T* gx = x->g();
      for (int i = 0; i < n; ++i) gx[i] += out->value[i] * (out->grad[i] - dot);
    };
  }
  return out;
}

// out[g] = max over i with segment[i] == g of x[i].
template <class T>
Var<T> SegmentMax(Tape<T>& tape, Var<T> x, const std::vector<int>& segment, int groups) {
  if (static_cast<int>(segment.size()) != x->size()) throw ShapeError("segment size mismatch");
  Var<T> out = tape.Make(groups, 1);
  std::vector<int> arg(groups, -1);
  for (int i = 0; i < x->size(); ++i) {
    const int g = segment[i];
    if (g < 0 || g >= groups) throw IndexError("segment id out of range");
    if (arg[g] < 0 || x->value[i] > x->value[arg[g]]) arg[g] = i;
  }
  for (int g = 0; g < groups; ++g) {
    if (arg[g] < 0) throw ShapeError("empty segment");
    out->value[g] = x->value[arg[g]];
  }
  if (tape.Tracks(x)) {
    out->requires_grad = true;
    out->backward = [x, out, arg = std::move(arg)] {
      T* gx = x->g();
      for (std::size_t g = 0; g < arg.size(); ++g) gx[arg[g]] += out->grad[g];
    };
  }
  return out;
}

// out[g] = log sum over i with segment[i] == g of exp(x[i]).
template <class T>
Var<T> SegmentLogSumExp(Tape<T>& tape, Var<T> x, const std::vector<int>& segment, int groups) {
  if (static_cast<int>(segment.size()) != x->size()) throw ShapeError("segment size mismatch");
  std::vector<T> mx(groups, -std::numeric_limits<T>::infinity());
  for (int i = 0; i < x->size(); ++i) {
    const int g = segment[i];
    if (g < 0 || g >= groups) throw IndexError("segment id out of range");
    mx[g] = std::max(mx[g], x->value[i]);
  }
  std::vector<T> z(groups, T(0));
  for (int i = 0; i < x->size(); ++i) z[segment[i]] += std::exp(x->value[i] - mx[segment[i]]);
  Var<T> out = tape.Make(groups, 1);
  for (int g = 0; g < groups; ++g) {
    if (z[g] == T(0)) throw ShapeError("empty segment");
    out->value[g] = mx[g] + std::log(z[g]);
  }
  if (tape.Tracks(x)) {
    out->requires_grad = true;
    out->backward = [x, out, segment] {
      T* gx = x->g();
      for (int i = 0; i < x->size(); ++i) {
        const int g = segment[i];
        gx[i] += out->grad[g] * std::exp(x->value[i] - out->value[g]);
      }
    };
  }
  return out;
}

// x + s for a scalar node s.
template <class T>
Var<T> AddScalar(Tape<T>& tape, Var<T> x, Var<T> s) {
  if (s->size() != 1) throw ShapeError("add_scalar expects a scalar");
  Var<T> out = tape.Make(x->rows, x->cols);
  for (int i = 0; i < x->size(); ++i) out->value[i] = x->value[i] + s->value[0];
  if (tape.Tracks(x, s)) {
    out->requires_grad = true;
    out->backward = [x, s, out] {
      if (x->requires_grad) AxpyKernel(T(1), out->grad.data(), x->g(), x->size());
      if (s->requires_grad) {
        T t = T(0);
        for (int i = 0; i < x->size(); ++i) t += out->grad[i];
        s->g()[0] += t;
      }
    };
  }
  return out;
}

// Picks entry i of a vector as a scalar node.
template <class T>
Var<T> Pick(Tape<T>& tape, Var<T> x, int i) {
  if (i < 0 || i >= x->size()) throw IndexError("pick index out of range");
  return Slice(tape, x, i, 1);
}

// Cross-entropy against a label-smoothed target: 1 - eps on gold, eps
// spread uniformly over the other entries of support (null = all entries).
template <class T>
Var<T> SmoothedNll(Tape<T>& tape, Var<T> logp, int gold, T eps,
                   const std::vector<std::uint8_t>* support = nullptr) {
  const int n = logp->size();
  if (gold < 0 || gold >= n) throw IndexError("gold index out of range");
  if (support && (static_cast<int>(support->size()) != n || !(*support)[gold]))
    throw ShapeError("gold outside label support");
  std::vector<T> target(n, T(0));
  int others = 0;
  for (int i = 0; i < n; ++i)
    if (i != gold && (!support || (*support)[i])) ++others;
  const T spread = others > 0 ? eps / T(others) : T(0);
  target[gold] = others > 0 ? T(1) - eps : T(1);
  for (int i = 0; i < n; ++i)
    if (i != gold && (!support || (*support)[i])) target[i] = spread;
  Var<T> out = tape.Make(1, 1);
  T loss = T(0);
  for (int i = 0; i < n; ++i)
    if (target[i] != T(0)) loss -= target[i] * logp->value[i];
  out->value[0] = loss;
  if (tape.Tracks(logp)) {
    out->requires_grad = true;
    out->backward = [logp, out, target = std::move(target)] {
      T* g = logp->g();
      for (std::size_t i = 0; i < target.size(); ++i)
        if (target[i] != T(0)) g[i] -= out->grad[0] * target[i];
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dropout

// Inverted-dropout mask: each entry is 0 with probability rate, otherwise
// 1 / (1 - rate). Sample once and reuse for time-shared dropout.
template <class T>
std::vector<T> DropoutMask(int n, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
  std::vector<T> m(n, T(1));
  if (rate == 0.0) return m;
  const T keep = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& v : m) v = rng.Uniform() < rate ? T(0) : keep;
  return m;
}

template <class T>
Var<T> Dropout(Tape<T>& tape, Var<T> x, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  return MulConst(tape, x, DropoutMask<T>(x->size(), rate, rng));
}

}  // namespace ptrsql::tensor
