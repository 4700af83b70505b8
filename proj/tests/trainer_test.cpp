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
#include "ptrsql/trainer.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "test_util.hpp"

namespace ptrsql {
namespace {

using testing::ProcessorQuery;
using testing::ProcessorQuestion;
using testing::ProcessorSchema;
using tensor::Tape;
using tensor::Var;

ModelConfig Tiny() {
  ModelConfig cfg;
  cfg.d_emb = 8;
  cfg.d_dec = 12;
  cfg.input_dropout = 0;
  cfg.recurrent_dropout = 0;
  return cfg;
}

Vocabulary VocabOf(const std::vector<std::string>& words) {
  Vocabulary v;
  for (const auto& w : words) v.Add(w);
  return v;
}

Example ProcessorExample() { return {ProcessorQuestion(), "processors", ProcessorQuery()}; }

LinearQuery TokensOf(const std::vector<int>& ids, const OutputSpace& space) {
  LinearQuery out;
  for (int id : ids)
    if (id != OutputSpace::SqlIndex(Sql::kEnd)) out.push_back(space.ToToken(id));
  return out;
}

TEST(TeacherForcing, ZeroConditionSequence) {
  const TableSchema s = ProcessorSchema();
  const auto q = ProcessorQuestion();
  PtrGenModel<double> model(Tiny(), VocabOf(q), 3);
  Example ex{q, "processors", {}};
  ex.gold.select_col = 2;
  ex.gold.select_agg = 1;
  Tape<double> tape;
  auto ep = TeacherForcingEpisode(model, tape, ex, s, OrderPolicy::Original(), nullptr, false);
  const OutputSpace space(s.num_columns(), q);
  EXPECT_EQ(ep.trace.supervision, (std::vector<int>{OutputSpace::SqlIndex(Sql::kSelect), space.ColumnIndex(2),
                                                     OutputSpace::AggIndex(1), OutputSpace::SqlIndex(Sql::kEnd)}));
  EXPECT_TRUE(std::isfinite(ep.loss->scalar()));
  EXPECT_GT(ep.loss->scalar(), 0);
}

TEST(TeacherForcing, ReversedPolicyReversesConditionBlocks) {
  const TableSchema s = ProcessorSchema();
  const auto q = ProcessorQuestion();
  PtrGenModel<double> model(Tiny(), VocabOf(q), 3);
  const Example ex = ProcessorExample();
  Tape<double> tape;
  auto orig = TeacherForcingEpisode(model, tape, ex, s, OrderPolicy::Original(), nullptr, false).trace.supervision;
  auto rev = TeacherForcingEpisode(model, tape, ex, s, OrderPolicy::Reversed(), nullptr, false).trace.supervision;
  ASSERT_EQ(orig.size(), rev.size());
  EXPECT_NE(orig, rev);
  const OutputSpace space(s.num_columns(), q);
  // Split into blocks at COND; the prefix and END stay, the blocks flip.
  auto blocks = [&](const std::vector<int>& seq) {
    std::vector<std::vector<int>> out(1);
    for (int id : seq) {
      if (id == OutputSpace::SqlIndex(Sql::kCond) || id == OutputSpace::SqlIndex(Sql::kEnd)) out.emplace_back();
      out.back().push_back(id);
    }
    return out;
  };
  auto a = blocks(orig), b = blocks(rev);
  ASSERT_EQ(a.size(), 4u);
  EXPECT_EQ(a[0], b[0]);
  EXPECT_EQ(a[1], b[2]);
  EXPECT_EQ(a[2], b[1]);
  EXPECT_EQ(a[3], b[3]);
  EXPECT_TRUE(QueryEqual(Delinearize(TokensOf(orig, space), s), Delinearize(TokensOf(rev, space), s)));
}

TEST(TeacherForcing, RejectsUncopyableGold) {
  const TableSchema s = ProcessorSchema();
  const auto q = ProcessorQuestion();
  PtrGenModel<double> model(Tiny(), VocabOf(q), 3);
  Example ex = ProcessorExample();
  ex.gold.conditions[0].value = {"900"};
  Tape<double> tape;
  EXPECT_THROW(TeacherForcingEpisode(model, tape, ex, s, OrderPolicy::Original(), nullptr), NotCopyable);
  Rng rng(1);
  EXPECT_THROW(OracleEpisode(model, tape, ex, s, rng), NotCopyable);
  Table t{s, {}};
  EXPECT_THROW(ReinforceEpisode(model, tape, ex, t, rng), NotCopyable);
}

TEST(TeacherForcing, OverfitsSingleExampleMonotonically) {
  const TableSchema s = ProcessorSchema();
  const auto q = ProcessorQuestion();
  ModelConfig cfg = Tiny();
  cfg.label_smoothing_eps = 0;
  PtrGenModel<double> model(cfg, VocabOf(q), 11);
  const Example ex = ProcessorExample();
  tensor::AdamConfig ac;
  ac.learning_rate = 0.01;
  tensor::Adam<double> adam(ac);
  double prev = INFINITY, first = 0;
  for (int step = 0; step < 50; ++step) {
    model.params().ZeroGrad();
    Tape<double> tape;
    auto ep = TeacherForcingEpisode(model, tape, ex, s, OrderPolicy::Original(), nullptr);
    const double loss = ep.loss->scalar();
    EXPECT_LT(loss, prev) << "step " << step;
    if (step == 0) first = loss;
    prev = loss;
    tape.Backward(ep.loss);
    adam.Step(model.params());
  }
  EXPECT_LT(prev, 0.5 * first);
}

// Oracle runs on random schemas, questions and untrained models.
struct RandomCase {
  TableSchema schema;
  Example ex;
  std::unique_ptr<PtrGenModel<double>> model;
};

RandomCase MakeCase(std::uint64_t seed) {
  Rng rng(seed);
  RandomCase c;
  c.schema = testing::RandomSchema(rng, 1, 5);
  c.ex.question = testing::RandomQuestion(rng, 1, 8, 6);
  c.ex.table_id = c.schema.table_id;
  c.ex.gold = testing::RandomTree(rng, c.schema, c.ex.question, 3);
  ModelConfig cfg = Tiny();
  cfg.constraints_in_training = rng.Bernoulli(0.5);
  c.model = std::make_unique<PtrGenModel<double>>(cfg, VocabOf(c.ex.question), rng.NextU64());
  return c;
}

TEST(Oracle, TracesStayInsideValidNextSetsAndReachGold) {
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    RandomCase c = MakeCase(seed);
    Tape<double> tape(false);
    Rng rng(seed * 7 + 1);
    auto ep = OracleEpisode(*c.model, tape, c.ex, c.schema, rng, false);
    const auto& tr = ep.trace;
    ASSERT_EQ(tr.inputs.size(), tr.masks.size());
    for (std::size_t t = 0; t < tr.inputs.size(); ++t) {
      ASSERT_TRUE(tr.masks[t].Allows(tr.supervision[t])) << "seed " << seed << " step " << t;
      ASSERT_TRUE(tr.masks[t].Allows(tr.inputs[t])) << "seed " << seed << " step " << t;
    }
    ASSERT_EQ(tr.inputs.back(), OutputSpace::SqlIndex(Sql::kEnd));
    const OutputSpace space(c.schema.num_columns(), c.ex.question);
    EXPECT_TRUE(QueryEqual(Delinearize(TokensOf(tr.inputs, space), c.schema), c.ex.gold)) << "seed " << seed;
    EXPECT_TRUE(std::isfinite(ep.loss->scalar()));
  }
}

TEST(Oracle, InvariantUnderConditionPermutation) {
  int permuted = 0;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    RandomCase c = MakeCase(seed);
    if (c.ex.gold.conditions.size() < 2) continue;
    ++permuted;
    Example shuffled = c.ex;
    std::reverse(shuffled.gold.conditions.begin(), shuffled.gold.conditions.end());
    Rng r1(seed), r2(seed);
    Tape<double> t1, t2;
    auto a = OracleEpisode(*c.model, t1, c.ex, c.schema, r1, true);
    auto b = OracleEpisode(*c.model, t2, shuffled, c.schema, r2, true);
    ASSERT_EQ(a.trace.inputs, b.trace.inputs) << "seed " << seed;
    ASSERT_EQ(a.trace.supervision, b.trace.supervision) << "seed " << seed;
    ASSERT_EQ(a.loss->scalar(), b.loss->scalar());
  }
  EXPECT_GT(permuted, 50);
}

TEST(Oracle, SupervisesWhicheverConditionTheModelPrefers) {
  // Look for untrained models that rank the second gold condition's column
  // above the first at the first column slot of the WHERE clause.
  const TableSchema s = ProcessorSchema();
  const auto q = ProcessorQuestion();
  const Example ex = ProcessorExample();
  const OutputSpace space(s.num_columns(), q);
  int second_first = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    PtrGenModel<double> model(Tiny(), VocabOf(q), seed);
    Tape<double> tape(false);
    Rng rng(seed);
    auto ep = OracleEpisode(model, tape, ex, s, rng, false);
    // SELECT col agg WHERE COND col ...: step 5 picks the first condition column.
    const int g = ep.trace.supervision.at(5);
    ASSERT_TRUE(g == space.ColumnIndex(1) || g == space.ColumnIndex(2));
    if (g == space.ColumnIndex(2)) ++second_first;
  }
  EXPECT_GT(second_first, 0);
  EXPECT_LT(second_first, 40);
}

TEST(Oracle, MatchesTeacherForcingOnceTheModelIsCorrect) {
  const TableSchema s = ProcessorSchema();
  const auto q = ProcessorQuestion();
  ModelConfig cfg = Tiny();
  cfg.label_smoothing_eps = 0;
  PtrGenModel<double> model(cfg, VocabOf(q), 11);
  const Example ex = ProcessorExample();
  tensor::AdamConfig ac;
  ac.learning_rate = 0.01;
  tensor::Adam<double> adam(ac);
  // Train until every teacher-forced step has the gold token as argmax.
  bool correct = false;
  for (int step = 0; step < 2000 && !correct; ++step) {
    model.params().ZeroGrad();
    Tape<double> tape;
    auto ep = TeacherForcingEpisode(model, tape, ex, s, OrderPolicy::Original(), nullptr);
    tape.Backward(ep.loss);
    adam.Step(model.params());
    Tape<double> probe(false);
    const OutputSpace space(s.num_columns(), q);
    detail::Unrolled<double> u(model, probe, s, q, nullptr, false);
    correct = true;
    for (int id : ep.trace.supervision) {
      auto st = u.Step(model, probe, nullptr);
      correct = correct && detail::Argmax(st.log_probs->value) == id;
      u.prev = id;
    }
  }
  ASSERT_TRUE(correct);
  Tape<double> tape(false);
  Rng rng(0);
  auto tf = TeacherForcingEpisode(model, tape, ex, s, OrderPolicy::Original(), nullptr, false);
  auto oracle = OracleEpisode(model, tape, ex, s, rng, false);
  EXPECT_EQ(oracle.trace.inputs, oracle.trace.supervision);
  EXPECT_EQ(oracle.trace.inputs, tf.trace.inputs);
  EXPECT_NEAR(oracle.loss->scalar(), tf.loss->scalar(), 1e-12);
}

TEST(Reinforce, EpisodesParseAndRewardIsQueryMatch) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    RandomCase c = MakeCase(seed);
    Table table{c.schema, {}};
    Rng rng(seed);
    Tape<double> tape;
    auto ep = ReinforceEpisode(*c.model, tape, c.ex, table, rng);
    const auto& tr = ep.trace;
    ASSERT_LE(tr.inputs.size(), ReinforceStepBound(c.schema, c.ex.question));
    for (std::size_t t = 0; t < tr.inputs.size(); ++t) ASSERT_TRUE(tr.masks[t].Allows(tr.inputs[t]));
    EXPECT_EQ(tr.inputs, tr.supervision);
    const OutputSpace space(c.schema.num_columns(), c.ex.question);
    const QueryTree pred = Delinearize(TokensOf(tr.inputs, space), c.schema);
    EXPECT_EQ(tr.reward, QueryEqual(pred, c.ex.gold) ? 1.0 : 0.0);
    if (tr.reward == 0.0) {
      c.model->params().ZeroGrad();
      tape.Backward(ep.loss);
      for (const auto& p : c.model->params().params())
        for (double g : p.node->grad) ASSERT_EQ(g, 0.0) << p.name;
    }
  }
}

// Two-step toy policy: a1 ~ softmax(theta1), a2 ~ softmax(theta2[a1]);
// reward 1 on the single sequence (0, 0).
TEST(Reinforce, SampledGradientMatchesExactEnumeration) {
  const std::vector<double> th1 = {2.6, 0.2, -0.6};
  const std::vector<double> th2 = {2.4, 0.1, -0.4, 0.3, -0.2, 0.5, 0.0, 0.4, -0.3};
  auto softmax = [](const double* x) {
    const double m = std::max({x[0], x[1], x[2]});
    std::vector<double> e = {std::exp(x[0] - m), std::exp(x[1] - m), std::exp(x[2] - m)};
    const double z = e[0] + e[1] + e[2];
    for (auto& v : e) v /= z;
    return e;
  };
  // Exact: sum over all 9 sequences of p * R * grad log p.
  const auto p1 = softmax(th1.data());
  std::vector<double> exact(12, 0.0);
  double second_moment = 0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      const auto p2 = softmax(th2.data() + 3 * a);
      const double p = p1[a] * p2[b];
      const double r = (a == 0 && b == 0) ? 1.0 : 0.0;
      std::vector<double> g(12, 0.0);
      for (int j = 0; j < 3; ++j) {
        g[j] = (j == a) - p1[j];
        g[3 + 3 * a + j] = (j == b) - p2[j];
      }
      for (int j = 0; j < 12; ++j) exact[j] += p * r * g[j];
      double gg = 0;
      for (double v : g) gg += v * v;
      second_moment += p * r * r * gg;
    }
  double exact_norm2 = 0;
  for (double v : exact) exact_norm2 += v * v;
  constexpr int kSamples = 1000;
  // Design check: the estimator's standard relative error is well inside 5%.
  const double expected_rel = std::sqrt((second_moment - exact_norm2) / kSamples / exact_norm2);
  ASSERT_LT(expected_rel, 0.02);

  tensor::ParamStore<double> store;
  Var<double> t1 = store.AddZeros("theta1", 3, 1);
  Var<double> t2 = store.AddZeros("theta2", 3, 3);
  t1->value = th1;
  t2->value = th2;
  Rng rng(2026);
  for (int i = 0; i < kSamples; ++i) {
    Tape<double> tape;
    auto draw = [&](Var<double> logp) {
      double u = rng.Uniform(), acc = 0;
      for (int k = 0; k < 3; ++k) {
        acc += std::exp(logp->value[k]);
        if (u < acc) return k;
      }
      return 2;
    };
    auto lp1 = tensor::LogSoftmax(tape, t1);
    const int a = draw(lp1);
    auto lp2 = tensor::LogSoftmax(tape, tensor::Row(tape, t2, a));
    const int b = draw(lp2);
    const double reward = (a == 0 && b == 0) ? 1.0 : 0.0;
    auto loss = ReinforceSurrogate(tape, {tensor::Pick(tape, lp1, a), tensor::Pick(tape, lp2, b)}, reward);
    tape.Backward(loss, 1.0 / kSamples);
  }
  // The pseudo-loss is -A log p, so its gradient is minus the ascent direction.
  double err2 = 0;
  for (int j = 0; j < 3; ++j) err2 += std::pow(-t1->grad[j] - exact[j], 2);
  for (int j = 0; j < 9; ++j) err2 += std::pow(-t2->grad[j] - exact[3 + j], 2);
  EXPECT_LT(std::sqrt(err2 / exact_norm2), 0.05);
}

// Training-loop tests use a small synthetic corpus built by hand.
struct MiniCorpus {
  TableMap tables;
  std::vector<Example> train, dev;
};

MiniCorpus Mini() {
  MiniCorpus m;
  Table t;
  t.schema = ProcessorSchema();
  m.tables["processors"] = t;
  Rng rng(5);
  for (int i = 0; i < 12; ++i) {
    Example ex;
    ex.table_id = "processors";
    ex.question = testing::RandomQuestion(rng, 3, 7, 6);
    ex.gold = testing::RandomTree(rng, t.schema, ex.question, 2);
    (i < 9 ? m.train : m.dev).push_back(ex);
  }
  return m;
}

Vocabulary MiniVocab(const MiniCorpus& m) { return Vocabulary::Build(m.train, m.tables, 1); }

TEST(Train, StopsEarlyAndRestoresBestCheckpoint) {
  const MiniCorpus m = Mini();
  PtrGenModel<double> model(Tiny(), MiniVocab(m), 1);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.max_epochs = 10;
  cfg.patience = 1;
  cfg.learning_rate = 0.01;
  std::vector<std::vector<std::vector<double>>> snaps;
  int calls = 0;
  DevScorer<double> scorer = [&](const PtrGenModel<double>& mdl) {
    snaps.push_back(mdl.params().Snapshot());
    EvalReport r;
    r.n = 1;
    r.acc_qm = 0.5 - 0.1 * calls++;
    return r;
  };
  const TrainResult res = Train(model, m.train, m.dev, m.tables, cfg, scorer);
  ASSERT_EQ(res.history.size(), 2u);
  EXPECT_EQ(res.best_epoch, 1);
  EXPECT_TRUE(res.stopped_early);
  EXPECT_DOUBLE_EQ(res.best_acc_qm, 0.5);
  EXPECT_NE(snaps[0], snaps[1]);
  EXPECT_EQ(model.params().Snapshot(), snaps[0]);
}

TEST(Train, PatienceCountsEpochsWithoutStrictImprovement) {
  const MiniCorpus m = Mini();
  PtrGenModel<double> model(Tiny(), MiniVocab(m), 1);
  TrainConfig cfg;
  cfg.batch_size = 9;
  cfg.max_epochs = 10;
  cfg.patience = 3;
  const std::vector<double> qm = {0.1, 0.3, 0.3, 0.2, 0.3, 0.9};
  int calls = 0;
  DevScorer<double> scorer = [&](const PtrGenModel<double>&) {
    EvalReport r;
    r.acc_qm = qm.at(calls++);
    return r;
  };
  const TrainResult res = Train(model, m.train, m.dev, m.tables, cfg, scorer);
  EXPECT_EQ(res.history.size(), 5u);
  EXPECT_EQ(res.best_epoch, 2);
}

TEST(Train, IdenticalSeedsGiveIdenticalHistoriesAndParameters) {
  const MiniCorpus m = Mini();
  const auto dir = std::filesystem::temp_directory_path() / "ptrsql_trainer_test";
  std::filesystem::create_directories(dir);
  for (Regime regime : {Regime::kTeacherForcing, Regime::kOracle, Regime::kReinforce}) {
    std::vector<std::string> logs;
    std::vector<std::vector<std::vector<float>>> params;
    for (int run = 0; run < 2; ++run) {
      ModelConfig mc = Tiny();
      mc.input_dropout = 0.2;
      mc.recurrent_dropout = 0.2;
      PtrGenModel<float> model(mc, MiniVocab(m), 9);
      TrainConfig cfg;
      cfg.regime = regime;
      cfg.order = OrderPolicy::Arbitrary(4);
      cfg.batch_size = 4;
      cfg.max_epochs = 3;
      cfg.patience = 3;
      cfg.metrics_path = (dir / ("run" + std::to_string(run) + ".jsonl")).string();
      Train(model, m.train, m.dev, m.tables, cfg);
      std::ifstream in(cfg.metrics_path);
      std::stringstream ss;
      ss << in.rdbuf();
      logs.push_back(ss.str());
      params.push_back(model.params().Snapshot());
    }
    EXPECT_EQ(logs[0], logs[1]) << RegimeName(regime);
    EXPECT_EQ(std::count(logs[0].begin(), logs[0].end(), '\n'), 3);
    EXPECT_EQ(params[0], params[1]) << RegimeName(regime);
  }
  std::filesystem::remove_all(dir);
}

TEST(Train, DifferentSeedsDiffer) {
  const MiniCorpus m = Mini();
  std::vector<std::vector<std::vector<double>>> params;
  for (std::uint64_t seed : {1u, 2u}) {
    PtrGenModel<double> model(Tiny(), MiniVocab(m), 9);
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.max_epochs = 1;
    cfg.seed = seed;
    Train(model, m.train, m.dev, m.tables, cfg);
    params.push_back(model.params().Snapshot());
  }
  EXPECT_NE(params[0], params[1]);
}

TEST(Train, RejectsBadConfigAndEmptyInput) {
  const MiniCorpus m = Mini();
  PtrGenModel<double> model(Tiny(), MiniVocab(m), 1);
  TrainConfig cfg;
  cfg.batch_size = 0;
  EXPECT_THROW(Train(model, m.train, m.dev, m.tables, cfg), ConfigError);
  cfg = TrainConfig{};
  cfg.patience = 0;
  EXPECT_THROW(Train(model, m.train, m.dev, m.tables, cfg), ConfigError);
  cfg = TrainConfig{};
  cfg.learning_rate = 0;
  EXPECT_THROW(Train(model, m.train, m.dev, m.tables, cfg), ConfigError);
  cfg = TrainConfig{};
  EXPECT_THROW(Train(model, {}, m.dev, m.tables, cfg), EmptyInput);
  EXPECT_THROW(Train(model, m.train, {}, m.tables, cfg), EmptyInput);
}

}  // namespace
}  // namespace ptrsql
