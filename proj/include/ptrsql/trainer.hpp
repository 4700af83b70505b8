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

// Training regimes: teacher forcing under an order policy, the dynamic
// oracle, and REINFORCE with a 0/1 episode reward; plus the epoch loop
// with Adam, dev-set early stopping and a per-epoch metrics log.

#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ptrsql/error.hpp"
#include "ptrsql/evaluator.hpp"
#include "ptrsql/grammar.hpp"
#include "ptrsql/model.hpp"
#include "ptrsql/params.hpp"
#include "ptrsql/query_ast.hpp"
#include "ptrsql/rng.hpp"
#include "ptrsql/table_store.hpp"
#include "ptrsql/tensor.hpp"

namespace ptrsql {

enum class Regime { kTeacherForcing, kOracle, kReinforce };

inline const char* RegimeName(Regime r) {
  switch (r) {
    case Regime::kTeacherForcing: return "tf";
    case Regime::kOracle: return "oracle";
    case Regime::kReinforce: return "rl";
  }
  return "?";
}

struct TrainConfig {
  Regime regime = Regime::kTeacherForcing;
  OrderPolicy order;  // teacher forcing only
  int batch_size = 100;
  int max_epochs = 50;
  double learning_rate = 0.001;
  int patience = 5;  // epochs without a dev Acc_QM gain before stopping
  std::uint64_t seed = 1;
  bool execution_reward = false;  // reinforce: reward execution match instead of query match
  bool test_constraints = true;   // constrained decoding when scoring the dev set
  std::string metrics_path;       // one JSON object per epoch; empty = no log

  void Validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (max_epochs < 1) throw ConfigError("max_epochs must be positive");
    if (patience < 1) throw ConfigError("patience must be at least 1");
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  }
};

struct EpisodeTrace {
  std::vector<int> inputs;       // x_{t+1}: the token fed back after step t
  std::vector<int> supervision;  // g_t
  std::vector<TokenMask> masks;  // VNT_t
  double reward = 0;
};

template <class T>
struct Episode {
  tensor::Var<T> loss = nullptr;
  EpisodeTrace trace;
};

namespace detail {

inline void RequireCopyable(const Example& ex) {
  for (const auto& c : ex.gold.conditions)
    if (!FindSpan(ex.question, c.value))
      throw NotCopyable("value '" + JoinWords(c.value) + "' is not a span of the question");
}

template <class T>
struct Unrolled {
  OutputSpace space;
  EncodedQuestion<T> enc;
  ColumnEncodings<T> cols;
  DecoderState<T> state;
  int prev = -1;

  Unrolled(const PtrGenModel<T>& model, tensor::Tape<T>& tape, const TableSchema& schema,
           const std::vector<std::string>& question, Rng* rng, bool training)
      : space(schema.num_columns(), question),
        enc(model.EncodeQuestion(tape, question, rng, training)),
        cols(model.EncodeColumns(tape, schema)),
        state(model.InitDecoder(tape, rng, training)) {}

  DecoderStep<T> Step(const PtrGenModel<T>& model, tensor::Tape<T>& tape, const TokenMask* mask) {
    auto [step, next] = model.DecodeStep(tape, prev, state, enc, cols, space, mask);
    state = std::move(next);
    return step;
  }
};

inline int Argmax(const std::vector<float>& v, const TokenMask* among = nullptr) {
  int best = -1;
  for (int i = 0; i < static_cast<int>(v.size()); ++i)
    if ((!among || among->Allows(i)) && (best < 0 || v[i] > v[best])) best = i;
  return best;
}
inline int Argmax(const std::vector<double>& v, const TokenMask* among = nullptr) {
  int best = -1;
  for (int i = 0; i < static_cast<int>(v.size()); ++i)
    if ((!among || among->Allows(i)) && (best < 0 || v[i] > v[best])) best = i;
  return best;
}

}  // namespace detail

// Gold sequence under policy as both decoder input and target.
template <class T>
Episode<T> TeacherForcingEpisode(const PtrGenModel<T>& model, tensor::Tape<T>& tape, const Example& ex,
                                 const TableSchema& schema, const OrderPolicy& policy, Rng* rng,
                                 bool training = true) {
  detail::RequireCopyable(ex);
  const ModelConfig& mc = model.config();
  detail::Unrolled<T> u(model, tape, schema, ex.question, rng, training);
  LinearQuery target = Linearize(ex.gold, schema, policy);
  target.push_back(Token::Of(Sql::kEnd));
  std::optional<GrammarState> grammar;
  if (mc.constraints_in_training) grammar = InitGrammar(schema, ex.question);
  Episode<T> ep;
  ep.trace.masks.reserve(target.size());
  std::vector<tensor::Var<T>> terms;
  for (const auto& tok : target) {
    const int id = *u.space.IndexOf(tok);
    const TokenMask* mask = nullptr;
    if (grammar) {
      ep.trace.masks.push_back(ValidNext(*grammar));
      mask = &ep.trace.masks.back();
    }
    auto step = u.Step(model, tape, mask);
    terms.push_back(tensor::SmoothedNll(tape, step.log_probs, id, static_cast<T>(mc.label_smoothing_eps),
                                        mask ? &mask->allowed : nullptr));
    ep.trace.supervision.push_back(id);
    ep.trace.inputs.push_back(id);
    if (grammar) grammar = Advance(*grammar, id);
    u.prev = id;
  }
  ep.loss = tensor::Sum(tape, terms, T(1) / T(terms.size()));
  return ep;
}

// Supervise with the best-scored gold-reachable token; feed the overall
// argmax when it is reachable and a uniform reachable token otherwise.
template <class T>
Episode<T> OracleEpisode(const PtrGenModel<T>& model, tensor::Tape<T>& tape, const Example& ex,
                         const TableSchema& schema, Rng& rng, bool training = true) {
  const ModelConfig& mc = model.config();
  GrammarState oracle = InitGrammar(schema, ex.question, ex.gold);
  std::optional<GrammarState> grammar;
  if (mc.constraints_in_training) grammar = InitGrammar(schema, ex.question);
  detail::Unrolled<T> u(model, tape, schema, ex.question, &rng, training);
  Episode<T> ep;
  std::vector<TokenMask> free_masks;
  std::vector<tensor::Var<T>> terms;
  while (!oracle.done()) {
    ep.trace.masks.push_back(ValidNext(oracle));
    const TokenMask& vnt = ep.trace.masks.back();
    const TokenMask* mask = nullptr;
    if (grammar) {
      free_masks.push_back(ValidNext(*grammar));
      mask = &free_masks.back();
    }
    auto step = u.Step(model, tape, mask);
    const auto& lp = step.log_probs->value;
    int x = detail::Argmax(lp);
    const int g = detail::Argmax(lp, &vnt);
    if (!vnt.Allows(x)) {
      const auto allowed = vnt.Indices();
      x = allowed[rng.UniformInt(allowed.size())];
    }
    terms.push_back(tensor::SmoothedNll(tape, step.log_probs, g, static_cast<T>(mc.label_smoothing_eps),
                                        mask ? &mask->allowed : nullptr));
    ep.trace.supervision.push_back(g);
    ep.trace.inputs.push_back(x);
    oracle = Advance(oracle, x);
    if (grammar) grammar = Advance(*grammar, x);
    u.prev = x;
  }
  ep.loss = tensor::Sum(tape, terms, T(1) / T(terms.size()));
  return ep;
}

// -A * sum_t log p_t(x_{t+1}); its gradient is the REINFORCE estimate.
template <class T>
tensor::Var<T> ReinforceSurrogate(tensor::Tape<T>& tape, const std::vector<tensor::Var<T>>& taken_log_probs,
                                  double reward) {
  return tensor::Sum(tape, taken_log_probs, static_cast<T>(-reward));
}

// Upper bound on the length of a sampled episode, END included.
inline std::size_t ReinforceStepBound(const TableSchema& schema, const std::vector<std::string>& question) {
  const std::size_t conds = question.empty() ? 0 : schema.num_columns();
  return 5 + conds * (5 + question.size());
}

// Samples from the model renormalized over the grammar mask and rewards
// the episode with 1 when the result matches the gold query.
template <class T>
Episode<T> ReinforceEpisode(const PtrGenModel<T>& model, tensor::Tape<T>& tape, const Example& ex,
                            const Table& table, Rng& rng, bool execution_reward = false, bool training = true) {
  detail::RequireCopyable(ex);
  const TableSchema& schema = table.schema;
  GrammarState grammar = InitGrammar(schema, ex.question);
  detail::Unrolled<T> u(model, tape, schema, ex.question, &rng, training);
  const std::size_t bound = ReinforceStepBound(schema, ex.question);
  Episode<T> ep;
  std::vector<tensor::Var<T>> taken;
  LinearQuery tokens;
  while (!grammar.done()) {
    if (ep.trace.inputs.size() >= bound) throw Error("sampled episode exceeded its step bound");
    ep.trace.masks.push_back(ValidNext(grammar));
    const TokenMask& mask = ep.trace.masks.back();
    auto step = u.Step(model, tape, &mask);
    const auto& lp = step.log_probs->value;
    double r = rng.Uniform(), acc = 0;
    int x = -1;
    for (int i : mask.Indices()) {
      x = i;
      acc += std::exp(static_cast<double>(lp[i]));
      if (r < acc) break;
    }
    taken.push_back(tensor::Pick(tape, step.log_probs, x));
    ep.trace.inputs.push_back(x);
    ep.trace.supervision.push_back(x);
    grammar = Advance(grammar, x);
    if (x != OutputSpace::SqlIndex(Sql::kEnd)) tokens.push_back(u.space.ToToken(x));
    u.prev = x;
  }
  const QueryTree pred = Delinearize(tokens, schema);
  bool correct = QueryEqual(pred, ex.gold);
  if (!correct && execution_reward) {
    try {
      correct = ResultEqual(Execute(pred, table), Execute(ex.gold, table));
    } catch (const ValueParseError&) {
    }
  }
  ep.trace.reward = correct ? 1.0 : 0.0;
  ep.loss = ReinforceSurrogate(tape, taken, ep.trace.reward);
  return ep;
}

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0;
  double acc_lf = 0;
  double acc_qm = 0;
  double acc_ex = 0;

  nlohmann::json ToJson() const {
    return {{"epoch", epoch}, {"train_loss", train_loss}, {"acc_lf", acc_lf}, {"acc_qm", acc_qm}, {"acc_ex", acc_ex}};
  }
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  int best_epoch = 0;
  double best_acc_qm = -1;
  bool stopped_early = false;
};

// Scores the current model on the dev set; the default decodes greedily.
template <class T>
using DevScorer = std::function<EvalReport(const PtrGenModel<T>&)>;

template <class T>
TrainResult Train(PtrGenModel<T>& model, const std::vector<Example>& train, const std::vector<Example>& dev,
                  const TableMap& tables, const TrainConfig& cfg, DevScorer<T> scorer = {},
                  const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
  cfg.Validate();
  if (train.empty()) throw EmptyInput("empty training set");
  if (!scorer) {
    if (dev.empty()) throw EmptyInput("empty dev set");
    scorer = [&](const PtrGenModel<T>& m) {
      DecodeOptions opts;
      opts.constrained = cfg.test_constraints;
      return Evaluate(dev, PredictAll(m, dev, tables, opts), tables, OrderPolicy::Original());
    };
  }
  std::ofstream log;
  if (!cfg.metrics_path.empty()) {
    log.open(cfg.metrics_path, std::ios::trunc);
    if (!log) throw IoError("cannot write " + cfg.metrics_path);
  }
  std::vector<const Table*> table_of(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) table_of[i] = &TableFor(tables, train[i].table_id);

  const Rng run(cfg.seed);
  tensor::AdamConfig adam_cfg;
  adam_cfg.learning_rate = cfg.learning_rate;
  tensor::Adam<T> adam(adam_cfg);
  auto& store = model.params();
  TrainResult result;
  auto best = store.Snapshot();
  int since_best = 0;
  std::vector<std::size_t> order(train.size());
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle = run.Split(0).Split(epoch);
    shuffle.Shuffle(order);
    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const T scale = T(1) / T(end - start);
      store.ZeroGrad();
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        const Example& ex = train[idx];
        // Per-example stream: batch composition does not perturb it.
        Rng rng = run.Split(1).Split(epoch).Split(idx);
        tensor::Tape<T> tape;
        Episode<T> ep;
        switch (cfg.regime) {
          case Regime::kTeacherForcing: {
            OrderPolicy policy = cfg.order;
            if (policy.variant == OrderPolicy::Variant::kArbitraryPerTrial)
              policy.seed = run.Split(2).Split(epoch).Split(idx).NextU64() ^ cfg.order.seed;
            ep = TeacherForcingEpisode(model, tape, ex, table_of[idx]->schema, policy, &rng);
            break;
          }
          case Regime::kOracle:
            ep = OracleEpisode(model, tape, ex, table_of[idx]->schema, rng);
            break;
          case Regime::kReinforce:
            ep = ReinforceEpisode(model, tape, ex, *table_of[idx], rng, cfg.execution_reward);
            break;
        }
        loss_sum += static_cast<double>(ep.loss->scalar());
        if (cfg.regime == Regime::kReinforce && ep.trace.reward == 0.0) continue;
        tape.Backward(ep.loss, scale);
      }
      adam.Step(store);
    }
    const EvalReport report = scorer(model);
    EpochMetrics m{epoch, loss_sum / static_cast<double>(train.size()), report.acc_lf, report.acc_qm,
                   report.acc_ex};
    result.history.push_back(m);
    if (log) log << m.ToJson().dump() << '\n' << std::flush;
    if (on_epoch) on_epoch(m);
    if (m.acc_qm > result.best_acc_qm) {
      result.best_acc_qm = m.acc_qm;
      result.best_epoch = epoch;
      best = store.Snapshot();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      result.stopped_early = epoch < cfg.max_epochs;
      break;
    }
  }
  store.Restore(best);
  return result;
}

}  // namespace ptrsql
