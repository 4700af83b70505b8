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

// Named parameter storage, the Adam optimizer, and the binary checkpoint
// container.
//
// Checkpoint layout (little-endian):
//   magic   "PTRSQLCK" (8 bytes)
//   version u32 (= 1)
//   count   u32
//   count x { name_len u32, name bytes, dtype u8 (0 = f32, 1 = f64),
//             ndim u32, dims u64[ndim], data }

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ptrsql/error.hpp"
#include "ptrsql/rng.hpp"
#include "ptrsql/tensor.hpp"

namespace ptrsql::tensor {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
class ParamStore {
 public:
  struct Param {
    std::string name;
    std::unique_ptr<Node<T>> node;
    std::vector<std::uint8_t> frozen_rows;  // empty = all trainable
  };

  // Uniform(-scale, scale) initialization.
  Var<T> Add(const std::string& name, int rows, int cols, double scale, Rng& rng) {
    Var<T> v = AddZeros(name, rows, cols);
    for (auto& x : v->value) x = static_cast<T>((2.0 * rng.Uniform() - 1.0) * scale);
    return v;
  }

  Var<T> AddZeros(const std::string& name, int rows, int cols) {
    if (index_.count(name)) throw ConfigError("duplicate parameter " + name);
    auto node = std::make_unique<Node<T>>();
    node->rows = rows;
    node->cols = cols;
    node->value.assign(static_cast<std::size_t>(rows) * cols, T(0));
    node->grad.assign(node->value.size(), T(0));
    node->requires_grad = true;
    Var<T> v = node.get();
    index_[name] = params_.size();
    params_.push_back({name, std::move(node), {}});
    return v;
  }

  Var<T> Get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw IndexError("no parameter " + name);
    return params_[it->second].node.get();
  }

  Param& param(const std::string& name) { return params_.at(index_.at(name)); }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

  void ZeroGrad() {
    for (auto& p : params_) std::fill(p.node->grad.begin(), p.node->grad.end(), T(0));
  }

  std::size_t NumScalars() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.node->value.size();
    return n;
  }

  std::vector<std::vector<T>> Snapshot() const {
    std::vector<std::vector<T>> out;
    for (const auto& p : params_) out.push_back(p.node->value);
    return out;
  }

  void Restore(const std::vector<std::vector<T>>& snap) {
    if (snap.size() != params_.size()) throw ShapeError("snapshot does not match parameters");
    for (std::size_t i = 0; i < snap.size(); ++i) {
      if (snap[i].size() != params_[i].node->value.size()) throw ShapeError("snapshot shape mismatch");
      params_[i].node->value = snap[i];
    }
  }

 private:
  std::vector<Param> params_;
  std::map<std::string, std::size_t> index_;
};

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <class T>
struct AdamMoments {
  std::vector<T> m;
  std::vector<T> v;
};

// One bias-corrected Adam update of a single array. step is the 1-based
// update count after this step.
template <class T>
void AdamStep(std::span<T> param, std::span<const T> grad, AdamMoments<T>& mom, std::uint64_t step,
              const AdamConfig& cfg) {
  if (param.size() != grad.size()) throw ShapeError("adam: gradient shape");
  if (mom.m.empty()) {
    mom.m.assign(param.size(), T(0));
    mom.v.assign(param.size(), T(0));
  }
  if (mom.m.size() != param.size()) throw ShapeError("adam: moment shape");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T lr = static_cast<T>(cfg.learning_rate), eps = static_cast<T>(cfg.epsilon);
  const T inv_c1 = static_cast<T>(1.0 / c1), inv_c2 = static_cast<T>(1.0 / c2);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad[i];
    mom.m[i] = b1 * mom.m[i] + (T(1) - b1) * g;
    mom.v[i] = b2 * mom.v[i] + (T(1) - b2) * g * g;
    const T mhat = mom.m[i] * inv_c1;
    const T vhat = mom.v[i] * inv_c2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

template <class T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // Applies one update to every parameter using its accumulated gradient.
  // Frozen rows have their gradient cleared first.
  void Step(ParamStore<T>& store) {
    auto& params = store.params();
    if (moments_.size() != params.size()) moments_.resize(params.size());
    ++step_;
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      if (!p.frozen_rows.empty()) {
        const int cols = p.node->cols;
        for (int r = 0; r < p.node->rows; ++r)
          if (p.frozen_rows[r]) std::fill_n(p.node->grad.begin() + static_cast<std::size_t>(r) * cols, cols, T(0));
      }
      AdamStep<T>(p.node->value, p.node->grad, moments_[i], step_, cfg_);
    }
  }

  std::uint64_t step() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::uint64_t step_ = 0;
  std::vector<AdamMoments<T>> moments_;
};

// ---------------------------------------------------------------------------
// Checkpoints

struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> data;
};

namespace detail {

template <class V>
void WritePod(std::ostream& out, const V& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
V ReadPod(std::istream& in) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!in) throw FormatError("truncated checkpoint", 0);
  return v;
}

inline constexpr char kMagic[8] = {'P', 'T', 'R', 'S', 'Q', 'L', 'C', 'K'};
inline constexpr std::uint32_t kVersion = 1;

}  // namespace detail

template <class T>
void SaveCheckpoint(const std::string& path, const ParamStore<T>& store) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(detail::kMagic, 8);
  detail::WritePod(out, detail::kVersion);
  detail::WritePod(out, static_cast<std::uint32_t>(store.params().size()));
  for (const auto& p : store.params()) {
    detail::WritePod(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    detail::WritePod(out, static_cast<std::uint8_t>(sizeof(T) == 4 ? 0 : 1));
    detail::WritePod(out, std::uint32_t{2});
    detail::WritePod(out, static_cast<std::uint64_t>(p.node->rows));
    detail::WritePod(out, static_cast<std::uint64_t>(p.node->cols));
    out.write(reinterpret_cast<const char*>(p.node->value.data()),
              static_cast<std::streamsize>(p.node->value.size() * sizeof(T)));
  }
  if (!out) throw IoError("write failure on " + path);
}

inline std::vector<NamedArray> ReadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, detail::kMagic, 8) != 0) throw FormatError("not a checkpoint file", 0);
  const auto version = detail::ReadPod<std::uint32_t>(in);
  if (version != detail::kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version), 0);
  const auto count = detail::ReadPod<std::uint32_t>(in);
  std::vector<NamedArray> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedArray a;
    const auto len = detail::ReadPod<std::uint32_t>(in);
    a.name.resize(len);
    in.read(a.name.data(), len);
    const auto dtype = detail::ReadPod<std::uint8_t>(in);
    if (dtype > 1) throw FormatError("bad dtype tag", 0);
    const auto ndim = detail::ReadPod<std::uint32_t>(in);
    std::uint64_t total = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      a.shape.push_back(detail::ReadPod<std::uint64_t>(in));
      total *= a.shape.back();
    }
    a.data.resize(total);
    for (std::uint64_t i = 0; i < total; ++i)
      a.data[i] = dtype == 0 ? detail::ReadPod<float>(in) : detail::ReadPod<double>(in);
    out.push_back(std::move(a));
  }
  return out;
}

// Loads values into an existing store; names and shapes must match.
template <class T>
void LoadCheckpoint(const std::string& path, ParamStore<T>& store) {
  auto arrays = ReadCheckpoint(path);
  if (arrays.size() != store.params().size()) throw FormatError("checkpoint parameter count mismatch", 0);
  for (const auto& a : arrays) {
    Var<T> v = store.Get(a.name);
    if (a.shape.size() != 2 || a.shape[0] != static_cast<std::uint64_t>(v->rows) ||
        a.shape[1] != static_cast<std::uint64_t>(v->cols))
      throw FormatError("shape mismatch for " + a.name, 0);
    for (std::size_t i = 0; i < a.data.size(); ++i) v->value[i] = static_cast<T>(a.data[i]);
  }
}

}  // namespace ptrsql::tensor
