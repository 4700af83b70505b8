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
#include "ptrsql/model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "gradcheck.hpp"
#include "test_util.hpp"

namespace ptrsql {
namespace {

using tensor::Tape;
using tensor::Var;

Vocabulary VocabOf(const std::vector<std::vector<std::string>>& texts) {
  Vocabulary v;
  for (const auto& t : texts)
    for (const auto& w : t) v.Add(w);
  return v;
}

ModelConfig Tiny(CopyHead head = CopyHead::kSharedSoftmax) {
  ModelConfig cfg;
  cfg.d_emb = 8;
  cfg.d_dec = 12;
  cfg.copy_head = head;
  return cfg;
}

TableSchema TwoColumns() {
  TableSchema s;
  s.table_id = "two";
  s.column_names = {{"name"}, {"clock", "speed"}};
  s.column_types = {ColumnType::kText, ColumnType::kFloat};
  return s;
}

template <class T>
Var<T> TeacherForcedLoss(const PtrGenModel<T>& model, Tape<T>& tape, const TableSchema& schema,
                         const std::vector<std::string>& q, const QueryTree& gold, Rng* rng, bool masked) {
  const OutputSpace space(schema.num_columns(), q);
  auto enc = model.EncodeQuestion(tape, q, rng, rng != nullptr);
  auto cols = model.EncodeColumns(tape, schema);
  auto state = model.InitDecoder(tape, rng, rng != nullptr);
  LinearQuery target = Linearize(gold, schema, OrderPolicy::Original());
  target.push_back(Token::Of(Sql::kEnd));
  GrammarState g = InitGrammar(schema, q);
  std::vector<TokenMask> masks;
  masks.reserve(target.size());
  std::vector<Var<T>> lps;
  std::vector<int> gold_ids;
  std::vector<const TokenMask*> supports;
  int prev = -1;
  for (const auto& tok : target) {
    masks.push_back(ValidNext(g));
    auto [step, next] = model.DecodeStep(tape, prev, state, enc, cols, space, masked ? &masks.back() : nullptr);
    state = next;
    prev = *space.IndexOf(tok);
    lps.push_back(step.log_probs);
    gold_ids.push_back(prev);
    supports.push_back(masked ? &masks.back() : nullptr);
    g = Advance(g, prev);
  }
  return model.SequenceLoss(tape, lps, gold_ids, T(0.2), supports);
}

TEST(ModelConfigTest, Validation) {
  EXPECT_NO_THROW(ModelConfig{}.Validate());
  ModelConfig c;
  c.d_dec = 13;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = ModelConfig{};
  c.input_dropout = 1.0;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = ModelConfig{};
  c.decoder_layers = 0;
  EXPECT_THROW(c.Validate(), ConfigError);
}

TEST(ModelTest, Shapes) {
  const TableSchema s = TwoColumns();
  const std::vector<std::string> q = {"what", "clock", "speed"};
  for (auto head : {CopyHead::kSharedSoftmax, CopyHead::kPointOrGenerate}) {
    PtrGenModel<double> m(Tiny(head), VocabOf({q, {"name"}}), 1);
    Tape<double> t;
    auto enc = m.EncodeQuestion(t, {"what"}, nullptr, false);
    EXPECT_EQ(enc.states->rows, 1);
    EXPECT_EQ(enc.states->cols, 12);
    enc = m.EncodeQuestion(t, q, nullptr, false);
    EXPECT_EQ(enc.states->rows, 3);
    auto cols = m.EncodeColumns(t, s);
    ASSERT_EQ(cols.emb_side.size(), 2u);
    EXPECT_EQ(cols.emb_side[0]->size(), 8);
    EXPECT_EQ(cols.out_side->rows, 2);
    EXPECT_EQ(cols.out_side->cols, 24);
    auto st = m.InitDecoder(t, nullptr, false);
    const OutputSpace space(2, q);
    auto [step, next] = m.DecodeStep(t, -1, st, enc, cols, space);
    EXPECT_EQ(step.log_probs->size(), space.size());
    EXPECT_EQ(step.alpha->size(), 3);
    EXPECT_THROW(m.EncodeQuestion(t, {}, nullptr, false), EmptyInput);
    EXPECT_THROW(m.DecodeStep(t, space.size(), st, enc, cols, space), IndexError);
  }
}

TEST(ModelTest, SkipConnectionIsolatesEmbeddings) {
  const std::vector<std::string> q = {"a", "b", "a", "c"};
  TableSchema s;
  s.column_names = {{"a", "b"}, {"c"}};
  s.column_types = {ColumnType::kFloat, ColumnType::kText};
  PtrGenModel<double> m(Tiny(), VocabOf({q}), 3);
  for (auto& p : m.params().params())
    if (p.name.rfind("enc", 0) == 0 || p.name.rfind("colout", 0) == 0)
      std::fill(p.node->value.begin(), p.node->value.end(), 0.0);
  Tape<double> t;
  auto enc = m.EncodeQuestion(t, q, nullptr, false);
  const Var<double> we = m.params().Get("W_E");
  for (int i = 0; i < 4; ++i) {
    const int id = m.vocab().Id(q[i]);
    for (int k = 0; k < 12; ++k) {
      const double expect = k < 8 ? we->value[id * 8 + k] : 0.0;
      EXPECT_EQ(enc.states->value[i * 12 + k], expect);
    }
  }
  auto cols = m.EncodeColumns(t, s);
  const int a = m.vocab().Id("a"), b = m.vocab().Id("b"), c = m.vocab().Id("c");
  for (int k = 0; k < 24; ++k) {
    const bool region = k >= 12 && k < 20;
    const double mean_ab = region ? 0.5 * (we->value[a * 8 + k - 12] + we->value[b * 8 + k - 12]) : 0.0;
    const double single_c = region ? we->value[c * 8 + k - 12] : 0.0;
    EXPECT_NEAR(cols.out_side->value[k], mean_ab, 1e-15);
    EXPECT_NEAR(cols.out_side->value[24 + k], single_c, 1e-15);
  }
  // Column logits are then a bilinear form with the context half of [y; h^].
  auto st = m.InitDecoder(t, nullptr, false);
  const OutputSpace space(2, q);
  auto [step, next] = m.DecodeStep(t, -1, st, enc, cols, space);
  std::vector<double> yc = step.y->value;
  yc.insert(yc.end(), step.context->value.begin(), step.context->value.end());
  double o0 = 0, o1 = 0;
  for (int k = 0; k < 24; ++k) {
    o0 += yc[k] * cols.out_side->value[k];
    o1 += yc[k] * cols.out_side->value[24 + k];
  }
  const auto& lp = step.log_probs->value;
  EXPECT_NEAR(lp[space.ColumnIndex(0)] - lp[space.ColumnIndex(1)], o0 - o1, 1e-12);
}

TEST(ModelTest, IdenticalColumnNamesEncodeIdentically) {
  TableSchema s;
  s.column_names = {{"speed"}, {"speed"}};
  s.column_types = {ColumnType::kFloat, ColumnType::kFloat};
  PtrGenModel<double> m(Tiny(), VocabOf({{"speed"}}), 4);
  Tape<double> t;
  auto cols = m.EncodeColumns(t, s);
  EXPECT_EQ(cols.emb_side[0]->value, cols.emb_side[1]->value);
  for (int k = 0; k < 24; ++k) EXPECT_EQ(cols.out_side->value[k], cols.out_side->value[24 + k]);
}

TEST(ModelTest, AttentionSymmetryAndFocus) {
  PtrGenModel<double> m(Tiny(), VocabOf({{"a"}}), 5);
  Tape<double> t;
  EncodedQuestion<double> enc;
  std::vector<double> same;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 12; ++k) same.push_back(0.1 * k);
  enc.states = t.Constant(same, 3, 12);
  auto r = m.Attention(t, t.Constant(std::vector<double>(12, 1.0), 12), enc);
  for (double a : r.alpha->value) EXPECT_NEAR(a, 1.0 / 3, 1e-12);
  for (int k = 0; k < 12; ++k) EXPECT_NEAR(r.context->value[k], 0.1 * k, 1e-12);
  std::vector<double> basis(36, 0.0);
  basis[0] = 1.0;
  basis[12 + 1] = 1.0;
  basis[24 + 2] = 1.0;
  enc.states = t.Constant(basis, 3, 12);
  std::vector<double> y(12, 0.0);
  y[1] = 50.0;
  r = m.Attention(t, t.Constant(y, 12), enc);
  EXPECT_GT(r.alpha->value[1], 1.0 - 1e-12);
  EXPECT_THROW(m.Attention(t, t.Constant({1.0}, 1), enc), ShapeError);
  // Random inputs against a long double reference.
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> h(36), yy(12);
    for (auto& v : h) v = rng.Normal();
    for (auto& v : yy) v = rng.Normal();
    enc.states = t.Constant(h, 3, 12);
    r = m.Attention(t, t.Constant(yy, 12), enc);
    long double sc[3], z = 0;
    for (int i = 0; i < 3; ++i) {
      sc[i] = 0;
      for (int k = 0; k < 12; ++k) sc[i] += static_cast<long double>(h[i * 12 + k]) * yy[k];
      z += std::exp(sc[i]);
    }
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(r.alpha->value[i], static_cast<double>(std::exp(sc[i]) / z), 1e-6);
  }
}

// Builds a distribution from hand-picked attention inputs.
struct HeadFixture {
  explicit HeadFixture(CopyHead head) : model(Tiny(head), VocabOf({{"a", "b", "x"}}), 6) {
    schema.column_names = {{"x"}};
    schema.column_types = {ColumnType::kFloat};
  }
  Var<double> Run(Tape<double>& t, const std::vector<double>& scores, const TokenMask* mask = nullptr) {
    auto cols = model.EncodeColumns(t, schema);
    std::vector<double> y(12), ctx(12);
    for (int k = 0; k < 12; ++k) {
      y[k] = std::sin(k + 1.0);
      ctx[k] = std::cos(k + 2.0);
    }
    yc = y;
    yc.insert(yc.end(), ctx.begin(), ctx.end());
    return model.OutputDistribution(t, t.Constant(y, 12), t.Constant(ctx, 12), t.Constant(scores, 3), cols, space,
                                    mask);
  }
  PtrGenModel<double> model;
  TableSchema schema;
  OutputSpace space{1, {"a", "b", "a"}};
  std::vector<double> yc;
};

TEST(OutputHeadTest, PointerSumsAttentionPerWord) {
  HeadFixture f(CopyHead::kPointOrGenerate);
  f.model.params().Get("gate.b2")->value[0] = 60.0;  // gamma = 1
  Tape<double> t;
  Var<double> lp = f.Run(t, {std::log(0.2), std::log(0.5), std::log(0.3)});
  const int a = f.space.word_begin(), b = a + 1;
  EXPECT_NEAR(std::exp(lp->value[a]), 0.5, 1e-12);
  EXPECT_NEAR(std::exp(lp->value[b]), 0.5, 1e-12);
  for (int i = 0; i < a; ++i) EXPECT_LT(std::exp(lp->value[i]), 1e-20);
}

TEST(OutputHeadTest, GateClosedGivesGenerationOnly) {
  HeadFixture f(CopyHead::kPointOrGenerate);
  f.model.params().Get("gate.b2")->value[0] = -60.0;  // gamma = 0
  Tape<double> t;
  Var<double> lp = f.Run(t, {0.3, -1.0, 2.0});
  // Reference softmax over [U_SQL yc; U_COL yc].
  auto cols = f.model.EncodeColumns(t, f.schema);
  std::vector<double> logits;
  const Var<double> u = f.model.params().Get("U_SQL");
  for (int r = 0; r < kNumSqlTokens; ++r) {
    double s = 0;
    for (int k = 0; k < 24; ++k) s += u->value[r * 24 + k] * f.yc[k];
    logits.push_back(s);
  }
  double sc = 0;
  for (int k = 0; k < 24; ++k) sc += cols.out_side->value[k] * f.yc[k];
  logits.push_back(sc);
  double z = 0;
  for (double l : logits) z += std::exp(l);
  for (int i = 0; i < f.space.word_begin(); ++i) EXPECT_NEAR(std::exp(lp->value[i]), std::exp(logits[i]) / z, 1e-12);
  for (int i = f.space.word_begin(); i < f.space.size(); ++i) EXPECT_LT(std::exp(lp->value[i]), 1e-20);
}

TEST(OutputHeadTest, SharedSoftmaxTakesMaxScore) {
  HeadFixture f(CopyHead::kSharedSoftmax);
  Tape<double> t;
  Var<double> lp = f.Run(t, {1.0, 0.5, 3.0});
  const int a = f.space.word_begin(), b = a + 1;
  EXPECT_NEAR(lp->value[a] - lp->value[b], 3.0 - 0.5, 1e-12);
}

TEST(OutputHeadTest, MaskedAndUnmaskedDistributionsAreNormalized) {
  Rng rng(21);
  for (auto head : {CopyHead::kSharedSoftmax, CopyHead::kPointOrGenerate}) {
    HeadFixture f(head);
    for (int trial = 0; trial < 100; ++trial) {
      Tape<double> t;
      std::vector<double> sc = {rng.Normal() * 3, rng.Normal() * 3, rng.Normal() * 3};
      TokenMask mask(f.space.size());
      for (auto& v : mask.allowed) v = rng.Bernoulli(0.4);
      mask.allowed[rng.UniformInt(f.space.size())] = 1;
      for (const TokenMask* m : {static_cast<const TokenMask*>(nullptr), static_cast<const TokenMask*>(&mask)}) {
        Var<double> lp = f.Run(t, sc, m);
        double total = 0;
        for (int i = 0; i < f.space.size(); ++i) {
          const double p = std::exp(lp->value[i]);
          if (m && !m->Allows(i)) {
            EXPECT_EQ(p, 0.0);
          }
          total += p;
        }
        EXPECT_NEAR(total, 1.0, 1e-5);
      }
    }
  }
}

TEST(ModelTest, DecodeStepIsPure) {
  const TableSchema s = TwoColumns();
  const std::vector<std::string> q = {"name", "of", "clock", "speed", "3"};
  PtrGenModel<float> m(Tiny(CopyHead::kPointOrGenerate), VocabOf({q}), 7);
  Tape<float> t;
  const OutputSpace space(2, q);
  auto enc = m.EncodeQuestion(t, q, nullptr, false);
  auto cols = m.EncodeColumns(t, s);
  auto st = m.InitDecoder(t, nullptr, false);
  auto a = m.DecodeStep(t, 0, st, enc, cols, space);
  auto b = m.DecodeStep(t, 0, st, enc, cols, space);
  EXPECT_EQ(a.first.log_probs->value, b.first.log_probs->value);
  EXPECT_EQ(a.second.h[1]->value, b.second.h[1]->value);
}

TEST(ModelTest, EndToEndGradcheck) {
  const TableSchema s = TwoColumns();
  const std::vector<std::string> q = {"clock", "of", "x9"};
  QueryTree gold;
  gold.select_col = 0;
  gold.select_agg = kAggCount;
  gold.conditions = {{1, kOpGt, {"x9"}}};
  for (auto head : {CopyHead::kSharedSoftmax, CopyHead::kPointOrGenerate}) {
    for (bool masked : {false, true}) {
      PtrGenModel<double> m(Tiny(head), VocabOf({q, {"name", "speed"}}), 11);
      std::vector<Var<double>> leaves;
      for (auto& p : m.params().params()) leaves.push_back(p.node.get());
      const double err = testing::MaxGradError(leaves, [&](Tape<double>& t) {
        Rng rng(5);  // same dropout masks on every evaluation
        return TeacherForcedLoss(m, t, s, q, gold, &rng, masked);
      });
      EXPECT_LT(err, 1e-3) << "head " << static_cast<int>(head) << " masked " << masked;
    }
  }
}

TEST(ModelTest, LossExamples) {
  PtrGenModel<double> m(Tiny(), VocabOf({}), 1);
  Tape<double> t;
  Var<double> sure = t.Constant({0.0, -1e9, -1e9}, 3);
  EXPECT_NEAR(m.SequenceLoss(t, {sure}, {0}, 0.0)->scalar(), 0.0, 1e-12);
  Var<double> uni = t.Constant(std::vector<double>(4, -std::log(4.0)), 4);
  EXPECT_NEAR(m.SequenceLoss(t, {uni, uni}, {1, 3}, 0.2)->scalar(), std::log(4.0), 1e-12);
  EXPECT_THROW(m.SequenceLoss(t, {uni}, {1, 2}, 0.2), LengthMismatch);
}

TEST(ModelTest, GreedyConstrainedDecodeAlwaysParses) {
  Rng rng(31);
  for (int i = 0; i < 200; ++i) {
    const TableSchema s = testing::RandomSchema(rng, 1, 5);
    const auto q = testing::RandomQuestion(rng, 1, 8, 6);
    std::vector<std::vector<std::string>> words = {q};
    for (const auto& n : s.column_names) words.push_back(n);
    PtrGenModel<float> m(Tiny(i % 2 ? CopyHead::kPointOrGenerate : CopyHead::kSharedSoftmax), VocabOf(words),
                         rng.NextU64());
    const Decoded d = GreedyDecode(m, s, q);
    ASSERT_TRUE(d.finished);
    ASSERT_TRUE(d.tree.has_value());
    EXPECT_NO_THROW(ValidateTree(*d.tree, s));
  }
}

TEST(ModelTest, PretrainedRowsAreLoadedAndFrozen) {
  PtrGenModel<float> m(Tiny(), VocabOf({{"alpha", "beta"}}), 2);
  const std::string path = ::testing::TempDir() + "/emb.txt";
  {
    std::ofstream out(path);
    out << "alpha 1 2 3 4 5 6 7 8\n";
    out << "gamma 1 1 1 1 1 1 1 1\n";
  }
  EXPECT_EQ(m.LoadPretrainedEmbeddings(path), 1);
  const int id = m.vocab().Id("alpha");
  EXPECT_EQ(m.params().Get("W_E")->value[id * 8 + 7], 8.0f);
  EXPECT_EQ(m.params().param("W_E").frozen_rows[id], 1);
  EXPECT_EQ(m.params().param("W_E").frozen_rows[m.vocab().Id("beta")], 0);
  {
    std::ofstream out(path);
    out << "alpha 1 2 3\n";
  }
  EXPECT_THROW(m.LoadPretrainedEmbeddings(path), FormatError);
}

}  // namespace
}  // namespace ptrsql
