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

// Pointer-generator sequence model over the per-example output space:
// a BiLSTM question encoder with embedding skip connections, on-the-fly
// column encoders for the embedding and output sides, dot-product
// attention, a unidirectional LSTM decoder, and one of two copy heads
// (shared softmax or point-or-generate).

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ptrsql/error.hpp"
#include "ptrsql/grammar.hpp"
#include "ptrsql/params.hpp"
#include "ptrsql/query_ast.hpp"
#include "ptrsql/rng.hpp"
#include "ptrsql/schema.hpp"
#include "ptrsql/tensor.hpp"
#include "ptrsql/vocab.hpp"

namespace ptrsql {

enum class CopyHead { kSharedSoftmax, kPointOrGenerate };

struct ModelConfig {
  int d_emb = 300;
  int d_dec = 600;
  int encoder_layers = 2;
  int decoder_layers = 2;
  double input_dropout = 0.2;
  double recurrent_dropout = 0.1;
  double label_smoothing_eps = 0.2;
  CopyHead copy_head = CopyHead::kSharedSoftmax;
  bool constraints_in_training = false;
  bool skip_connections = true;
  // Decoder input is [EMB(s_{t-1}); previous context] when set.
  bool input_feeding = true;
  double init_scale = 0.1;

  void Validate() const {
    if (d_emb <= 0 || d_dec <= 0) throw ConfigError("dimensions must be positive");
    if (d_dec % 2 != 0) throw ConfigError("d_dec must be even (bidirectional halves)");
    if (skip_connections && d_emb > d_dec) throw ConfigError("skip connections need d_emb <= d_dec");
    if (encoder_layers < 1 || decoder_layers < 1) throw ConfigError("need at least one layer");
    for (double r : {input_dropout, recurrent_dropout, label_smoothing_eps})
      if (!(r >= 0.0 && r < 1.0)) throw ConfigError("rates must lie in [0, 1)");
  }

  int d_out() const { return 2 * d_dec; }
};

template <class T>
struct EncodedQuestion {
  tensor::Var<T> states;  // [N x d_dec]
  std::vector<int> token_ids;
};

template <class T>
struct ColumnEncodings {
  std::vector<tensor::Var<T>> emb_side;  // one [d_emb] vector per column
  tensor::Var<T> out_side;               // [columns x 2 d_dec], rows of U^COL
};

template <class T>
struct DecoderState {
  std::vector<tensor::Var<T>> h;
  std::vector<tensor::Var<T>> c;
  tensor::Var<T> context = nullptr;
  std::vector<std::vector<T>> input_masks;
  std::vector<std::vector<T>> recurrent_masks;
};

template <class T>
struct DecoderStep {
  tensor::Var<T> y = nullptr;
  tensor::Var<T> context = nullptr;
  tensor::Var<T> scores = nullptr;     // raw attention scores a(t)
  tensor::Var<T> alpha = nullptr;      // attention distribution
  tensor::Var<T> log_probs = nullptr;  // over the output space; -inf off-mask

  std::vector<T> Probs() const {
    std::vector<T> p(log_probs->value.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(log_probs->value[i]);
    return p;
  }
};

template <class T>
class PtrGenModel {
 public:
  using Var = tensor::Var<T>;
  using Tape = tensor::Tape<T>;

  PtrGenModel(ModelConfig cfg, Vocabulary vocab, std::uint64_t seed) : cfg_(cfg), vocab_(std::move(vocab)) {
    cfg_.Validate();
    Rng rng(seed);
    const double s = cfg_.init_scale;
    const int de = cfg_.d_emb, dd = cfg_.d_dec, half = dd / 2;
    params_.Add("W_E", vocab_.size(), de, s, rng);
    params_.Add("W_SQL", kNumSqlTokens, de, s, rng);
    params_.Add("go", de, 1, s, rng);
    for (int l = 0; l < cfg_.encoder_layers; ++l)
      for (const char* dir : {"f", "b"})
        encoder_.push_back(AddLstm("enc" + std::to_string(l) + dir, l == 0 ? de : dd, half, rng));
    col_emb_ = AddLstm("colemb", de, de, rng);
    col_out_ = AddLstm("colout", de, cfg_.d_out(), rng);
    const int dec_in = de + (cfg_.input_feeding ? dd : 0);
    for (int l = 0; l < cfg_.decoder_layers; ++l)
      decoder_.push_back(AddLstm("dec" + std::to_string(l), l == 0 ? dec_in : dd, dd, rng));
    params_.Add("U_SQL", kNumSqlTokens, cfg_.d_out(), 1.0 / std::sqrt(cfg_.d_out()), rng);
    if (cfg_.copy_head == CopyHead::kPointOrGenerate) {
      const int gh = std::max(1, dd / 2);
      params_.Add("gate.W1", gh, cfg_.d_out(), 1.0 / std::sqrt(cfg_.d_out()), rng);
      params_.AddZeros("gate.b1", gh, 1);
      params_.Add("gate.W2", 1, gh, 1.0 / std::sqrt(gh), rng);
      params_.AddZeros("gate.b2", 1, 1);
    }
  }

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  tensor::ParamStore<T>& params() { return params_; }
  const tensor::ParamStore<T>& params() const { return params_; }

  // Overwrites W_E rows of known words from a "word v1 ... vd" text file
  // and freezes them. Returns the number of rows loaded.
  int LoadPretrainedEmbeddings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    auto& p = params_.param("W_E");
    p.frozen_rows.assign(p.node->rows, 0);
    std::string line;
    std::size_t lineno = 0;
    int loaded = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::istringstream ls(line);
      std::string word;
      if (!(ls >> word)) continue;
      std::vector<T> vec;
      double x;
      while (ls >> x) vec.push_back(static_cast<T>(x));
      if (static_cast<int>(vec.size()) != cfg_.d_emb)
        throw FormatError("embedding dimension " + std::to_string(vec.size()) + " != d_emb", lineno);
      if (!vocab_.Contains(word) || word == Vocabulary::kRareWord) continue;
      const int id = vocab_.Id(word);
      std::copy(vec.begin(), vec.end(), p.node->value.begin() + static_cast<std::size_t>(id) * cfg_.d_emb);
      p.frozen_rows[id] = 1;
      ++loaded;
    }
    return loaded;
  }

  // h_i = BiLSTM(q)_i + pad(q_i).
  EncodedQuestion<T> EncodeQuestion(Tape& tape, const std::vector<std::string>& question, Rng* rng,
                                    bool training) const {
    if (question.empty()) throw EmptyInput("empty question");
    const int n = static_cast<int>(question.size());
    const int dd = cfg_.d_dec, half = dd / 2;
    EncodedQuestion<T> enc;
    enc.token_ids = vocab_.Ids(question);
    Var emb = tensor::EmbeddingLookup(tape, params_.Get("W_E"), enc.token_ids);
    std::vector<Var> inputs;
    for (int i = 0; i < n; ++i) inputs.push_back(tensor::Row(tape, emb, i));
    std::vector<Var> layer_in = inputs;
    for (int l = 0; l < cfg_.encoder_layers; ++l) {
      std::vector<Var> fwd(n), bwd(n);
      for (int dir = 0; dir < 2; ++dir) {
        const auto& w = encoder_[2 * l + dir];
        auto in_mask = Mask(layer_in[0]->size(), cfg_.input_dropout, rng, training);
        auto rec_mask = Mask(half, cfg_.recurrent_dropout, rng, training);
        Var h = tape.Make(half, 1), c = tape.Make(half, 1);
        for (int k = 0; k < n; ++k) {
          const int i = dir == 0 ? k : n - 1 - k;
          Var x = in_mask ? tensor::MulConst(tape, layer_in[i], *in_mask) : layer_in[i];
          Var hr = rec_mask ? tensor::MulConst(tape, h, *rec_mask) : h;
          std::tie(h, c) = tensor::LstmCell(tape, x, hr, c, w);
          (dir == 0 ? fwd : bwd)[i] = h;
        }
      }
      for (int i = 0; i < n; ++i) layer_in[i] = tensor::Concat(tape, {fwd[i], bwd[i]});
    }
    std::vector<Var> states(n);
    for (int i = 0; i < n; ++i)
      states[i] = cfg_.skip_connections ? tensor::Add(tape, layer_in[i], tensor::Pad(tape, inputs[i], dd, 0))
                                        : layer_in[i];
    enc.states = tensor::StackRows(tape, states);
    return enc;
  }

  // Embedding side: final state of a single-layer LSTM over the column
  // name. Output side: u = u* + [0; mean of name embeddings], the mean
  // placed in the context-aligned region of [y_t, h^_t].
  ColumnEncodings<T> EncodeColumns(Tape& tape, const TableSchema& schema) const {
    ColumnEncodings<T> out;
    const Var table = params_.Get("W_E");
    std::vector<Var> rows;
    for (const auto& name : schema.column_names) {
      if (name.empty()) throw EmptyInput("empty column name");
      Var words = tensor::EmbeddingLookup(tape, table, vocab_.Ids(name));
      Var he = tape.Make(cfg_.d_emb, 1), ce = tape.Make(cfg_.d_emb, 1);
      Var ho = tape.Make(cfg_.d_out(), 1), co = tape.Make(cfg_.d_out(), 1);
      for (int k = 0; k < words->rows; ++k) {
        Var x = tensor::Row(tape, words, k);
        std::tie(he, ce) = tensor::LstmCell(tape, x, he, ce, col_emb_);
        std::tie(ho, co) = tensor::LstmCell(tape, x, ho, co, col_out_);
      }
      out.emb_side.push_back(he);
      if (cfg_.skip_connections)
        ho = tensor::Add(tape, ho, tensor::Pad(tape, tensor::MeanRows(tape, words), cfg_.d_out(), cfg_.d_dec));
      rows.push_back(ho);
    }
    out.out_side = tensor::StackRows(tape, rows);
    return out;
  }

  DecoderState<T> InitDecoder(Tape& tape, Rng* rng, bool training) const {
    DecoderState<T> st;
    const int dd = cfg_.d_dec;
    for (int l = 0; l < cfg_.decoder_layers; ++l) {
      st.h.push_back(tape.Make(dd, 1));
      st.c.push_back(tape.Make(dd, 1));
      const int din = decoder_[l].w_input->cols;
      st.input_masks.push_back(Mask(din, cfg_.input_dropout, rng, training).value_or(std::vector<T>{}));
      st.recurrent_masks.push_back(Mask(dd, cfg_.recurrent_dropout, rng, training).value_or(std::vector<T>{}));
    }
    st.context = tape.Make(dd, 1);
    return st;
  }

  // Decoder-side embedding of a previous output token (-1 = start).
  Var Embed(Tape& tape, int token, const ColumnEncodings<T>& cols, const OutputSpace& space) const {
    if (token < 0) return params_.Get("go");
    if (token >= space.size()) throw IndexError("previous token outside the output space");
    if (token < kNumSqlTokens) return tensor::EmbeddingRow(tape, params_.Get("W_SQL"), token);
    if (token < space.word_begin()) return cols.emb_side.at(token - space.column_begin());
    return tensor::EmbeddingRow(tape, params_.Get("W_E"), vocab_.Id(space.words()[token - space.word_begin()]));
  }

  // a_i = h_i . y, alpha = softmax(a), context = sum_i alpha_i h_i.
  struct AttentionResult {
    Var scores;
    Var alpha;
    Var context;
  };
  AttentionResult Attention(Tape& tape, Var y, const EncodedQuestion<T>& enc) const {
    if (y->size() != enc.states->cols) throw ShapeError("attention: query size != state size");
    AttentionResult r;
    r.scores = tensor::MatVec(tape, enc.states, y);
    r.alpha = tensor::MaskedSoftmax(tape, r.scores);
    r.context = tensor::MatTVec(tape, enc.states, r.alpha);
    return r;
  }

  // Log-probabilities over the output space. Tokens outside the mask get
  // -inf and the rest are renormalized.
  Var OutputDistribution(Tape& tape, Var y, Var context, Var scores, const ColumnEncodings<T>& cols,
                         const OutputSpace& space, const TokenMask* mask = nullptr) const {
    if (scores->size() != static_cast<int>(space.position_word().size()))
      throw ShapeError("attention scores do not match the question length");
    if (mask && static_cast<int>(mask->allowed.size()) != space.size()) throw ShapeError("mask size");
    Var yc = tensor::Concat(tape, {y, context});
    Var o_sql = tensor::MatVec(tape, params_.Get("U_SQL"), yc);
    Var o_col = tensor::MatVec(tape, cols.out_side, yc);
    const std::vector<std::uint8_t>* m = mask ? &mask->allowed : nullptr;
    if (cfg_.copy_head == CopyHead::kSharedSoftmax) {
      Var o_e = tensor::SegmentMax(tape, scores, space.position_word(), space.num_words());
      return tensor::LogSoftmax(tape, tensor::Concat(tape, {o_sql, o_col, o_e}), m);
    }
    Var gen = tensor::LogSoftmax(tape, tensor::Concat(tape, {o_sql, o_col}));
    Var ptr = tensor::SegmentLogSumExp(tape, tensor::LogSoftmax(tape, scores), space.position_word(),
                                       space.num_words());
    Var z = GateLogit(tape, yc);
    Var log_gamma = tensor::LogSigmoid(tape, z);
    Var log_one_minus = tensor::LogSigmoid(tape, tensor::Scale(tape, z, T(-1)));
    Var mix = tensor::Concat(tape, {tensor::AddScalar(tape, gen, log_one_minus), tensor::AddScalar(tape, ptr, log_gamma)});
    return m ? tensor::LogSoftmax(tape, mix, m) : mix;
  }

  // Pre-sigmoid output of the two-layer mixture-weight network.
  Var GateLogit(Tape& tape, Var yc) const {
    Var hidden = tensor::Tanh(tape, tensor::Affine(tape, params_.Get("gate.W1"), yc, params_.Get("gate.b1")));
    return tensor::Affine(tape, params_.Get("gate.W2"), hidden, params_.Get("gate.b2"));
  }

  std::pair<DecoderStep<T>, DecoderState<T>> DecodeStep(Tape& tape, int prev_token, const DecoderState<T>& state,
                                                        const EncodedQuestion<T>& enc, const ColumnEncodings<T>& cols,
                                                        const OutputSpace& space,
                                                        const TokenMask* mask = nullptr) const {
    DecoderState<T> next = state;
    Var x = Embed(tape, prev_token, cols, space);
    if (cfg_.input_feeding) x = tensor::Concat(tape, {x, state.context});
    for (int l = 0; l < cfg_.decoder_layers; ++l) {
      if (!state.input_masks[l].empty()) x = tensor::MulConst(tape, x, state.input_masks[l]);
      Var h = state.h[l];
      if (!state.recurrent_masks[l].empty()) h = tensor::MulConst(tape, h, state.recurrent_masks[l]);
      std::tie(next.h[l], next.c[l]) = tensor::LstmCell(tape, x, h, state.c[l], decoder_[l]);
      x = next.h[l];
    }
    DecoderStep<T> step;
    step.y = x;
    auto att = Attention(tape, step.y, enc);
    step.scores = att.scores;
    step.alpha = att.alpha;
    step.context = att.context;
    step.log_probs = OutputDistribution(tape, step.y, step.context, step.scores, cols, space, mask);
    next.context = step.context;
    return {step, next};
  }

  // Mean over steps of label-smoothed cross-entropy. supports[t], when
  // non-null, restricts the smoothing mass to the allowed tokens.
  Var SequenceLoss(Tape& tape, const std::vector<Var>& log_probs, const std::vector<int>& gold, T eps,
                   const std::vector<const TokenMask*>& supports = {}) const {
    if (log_probs.size() != gold.size()) throw LengthMismatch("log_probs and gold differ in length");
    if (!supports.empty() && supports.size() != gold.size()) throw LengthMismatch("supports length");
    if (gold.empty()) throw LengthMismatch("empty sequence");
    std::vector<Var> terms;
    for (std::size_t t = 0; t < gold.size(); ++t) {
      const std::vector<std::uint8_t>* sup =
          !supports.empty() && supports[t] ? &supports[t]->allowed : nullptr;
      terms.push_back(tensor::SmoothedNll(tape, log_probs[t], gold[t], eps, sup));
    }
    return tensor::Sum(tape, terms, T(1) / T(gold.size()));
  }

 private:
  tensor::LstmWeights<T> AddLstm(const std::string& name, int din, int d, Rng& rng) {
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    tensor::LstmWeights<T> w;
    w.w_input = params_.Add(name + ".Wx", 4 * d, din, s, rng);
    w.w_hidden = params_.Add(name + ".Wh", 4 * d, d, s, rng);
    w.bias = params_.AddZeros(name + ".b", 4 * d, 1);
    for (int k = d; k < 2 * d; ++k) w.bias->value[k] = T(1);  // forget gate
    return w;
  }

  static std::optional<std::vector<T>> Mask(int n, double rate, Rng* rng, bool training) {
    if (!training || rate == 0.0 || !rng) return std::nullopt;
    return tensor::DropoutMask<T>(n, rate, *rng);
  }

  ModelConfig cfg_;
  Vocabulary vocab_;
  tensor::ParamStore<T> params_;
  std::vector<tensor::LstmWeights<T>> encoder_;  // [layer * 2 + direction]
  tensor::LstmWeights<T> col_emb_;
  tensor::LstmWeights<T> col_out_;
  std::vector<tensor::LstmWeights<T>> decoder_;
};

// ---------------------------------------------------------------------------
// Greedy decoding

struct DecodeOptions {
  bool constrained = true;
  // Upper bound on emitted tokens for unconstrained decoding; 0 = derive
  // from the question length and column count.
  int max_steps = 0;
};

struct Decoded {
  LinearQuery tokens;   // without the trailing END
  bool finished = false;
  std::optional<QueryTree> tree;  // empty when the sequence does not parse
};

template <class T>
Decoded GreedyDecode(const PtrGenModel<T>& model, const TableSchema& schema,
                     const std::vector<std::string>& question, const DecodeOptions& opts = {},
                     GrammarOptions gopts = {}) {
  tensor::Tape<T> tape(false);
  const OutputSpace space(schema.num_columns(), question);
  auto enc = model.EncodeQuestion(tape, question, nullptr, false);
  auto cols = model.EncodeColumns(tape, schema);
  auto state = model.InitDecoder(tape, nullptr, false);
  const int max_steps = opts.max_steps > 0
                            ? opts.max_steps
                            : 5 + static_cast<int>(schema.num_columns()) * (5 + static_cast<int>(question.size()));
  std::optional<GrammarState> grammar;
  if (opts.constrained) grammar = InitGrammar(schema, question, std::nullopt, gopts);
  Decoded out;
  int prev = -1;
  for (int t = 0; t < max_steps; ++t) {
    std::optional<TokenMask> mask;
    if (grammar) mask = ValidNext(*grammar);
    auto [step, next] = model.DecodeStep(tape, prev, state, enc, cols, space, mask ? &*mask : nullptr);
    state = std::move(next);
    const auto& lp = step.log_probs->value;
    int best = -1;
    for (int i = 0; i < static_cast<int>(lp.size()); ++i)
      if ((!mask || mask->Allows(i)) && (best < 0 || lp[i] > lp[best])) best = i;
    if (grammar) grammar = Advance(*grammar, best);
    prev = best;
    if (best == OutputSpace::SqlIndex(Sql::kEnd)) {
      out.finished = true;
      break;
    }
    out.tokens.push_back(space.ToToken(best));
  }
  try {
    if (out.finished) out.tree = Delinearize(out.tokens, schema);
  } catch (const ParseError&) {
    out.tree.reset();
  }
  return out;
}

}  // namespace ptrsql
