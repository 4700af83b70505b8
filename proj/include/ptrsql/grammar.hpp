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

// Constrained-decoding automaton over the per-example output space. In free
// mode it enforces syntax, column-type rules and copy-span consistency; in
// oracle mode it further restricts each step to tokens from which the gold
// tree is still reachable (the valid-next-token set of the dynamic oracle).

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ptrsql/error.hpp"
#include "ptrsql/query_ast.hpp"
#include "ptrsql/schema.hpp"
#include "ptrsql/table_store.hpp"

namespace ptrsql {

// Local indexing of V^D for one example: SQL tokens first, then the
// schema's column ids, then the distinct question words in order of first
// occurrence. Words absent from the question can never be produced, so
// they are not represented.
class OutputSpace {
 public:
  OutputSpace() = default;
  OutputSpace(std::size_t num_columns, const std::vector<std::string>& question)
      : num_columns_(static_cast<int>(num_columns)) {
    std::unordered_map<std::string, int> seen;
    for (const auto& w : question) {
      auto [it, inserted] = seen.emplace(w, static_cast<int>(words_.size()));
      if (inserted) words_.push_back(w);
      position_word_.push_back(it->second);
    }
  }

  int size() const { return kNumSqlTokens + num_columns_ + static_cast<int>(words_.size()); }
  int num_columns() const { return num_columns_; }
  int num_words() const { return static_cast<int>(words_.size()); }
  int column_begin() const { return kNumSqlTokens; }
  int word_begin() const { return kNumSqlTokens + num_columns_; }

  static int SqlIndex(Sql s) { return static_cast<int>(s); }
  static int AggIndex(int agg) { return static_cast<int>(Sql::kAgg0) + agg; }
  static int OpIndex(int op) { return static_cast<int>(Sql::kOp0) + op; }
  int ColumnIndex(int col) const { return kNumSqlTokens + col; }
  int WordIndexAt(std::size_t position) const { return word_begin() + position_word_.at(position); }

  const std::vector<std::string>& words() const { return words_; }
  // Distinct-word slot of each question position.
  const std::vector<int>& position_word() const { return position_word_; }

  std::optional<int> IndexOf(const Token& t) const {
    switch (t.kind) {
      case TokenKind::kSql:
        if (t.index >= 0 && t.index < kNumSqlTokens) return t.index;
        return std::nullopt;
      case TokenKind::kColumn:
        if (t.index >= 0 && t.index < num_columns_) return ColumnIndex(t.index);
        return std::nullopt;
      case TokenKind::kWord: {
        auto it = std::find(words_.begin(), words_.end(), t.word);
        if (it == words_.end()) return std::nullopt;
        return word_begin() + static_cast<int>(it - words_.begin());
      }
    }
    return std::nullopt;
  }

  Token ToToken(int local) const {
    if (local < 0 || local >= size()) throw IndexError("output index out of range");
    if (local < kNumSqlTokens) return Token::Of(static_cast<Sql>(local));
    if (local < word_begin()) return Token::Column(local - kNumSqlTokens);
    return Token::Word(words_[local - word_begin()]);
  }

 private:
  int num_columns_ = 0;
  std::vector<std::string> words_;
  std::vector<int> position_word_;
};

struct TokenMask {
  std::vector<std::uint8_t> allowed;

  explicit TokenMask(std::size_t n = 0) : allowed(n, 0) {}
  bool Allows(int i) const { return i >= 0 && static_cast<std::size_t>(i) < allowed.size() && allowed[i]; }
  int Count() const { return static_cast<int>(std::count(allowed.begin(), allowed.end(), 1)); }
  bool Empty() const { return Count() == 0; }
  std::vector<int> Indices() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < allowed.size(); ++i)
      if (allowed[i]) out.push_back(static_cast<int>(i));
    return out;
  }
};

struct GrammarOptions {
  // Forbid two conditions on the same column.
  bool forbid_repeated_columns = true;
};

enum class Clause {
  kStart,
  kSelectCol,
  kSelectAgg,
  kAfterSelect,  // {WHERE, END}
  kWhereStart,   // {COND}
  kCondCol,
  kCondOp,
  kCondVal,
  kAfterCond,    // {COND, END}
  kDone,
};

class GrammarState {
 public:
  Clause clause() const { return clause_; }
  bool oracle() const { return ctx_->gold.has_value(); }
  const OutputSpace& space() const { return ctx_->space; }
  const TableSchema& schema() const { return *ctx_->schema; }
  const std::vector<std::string>& question() const { return ctx_->question; }
  const std::vector<int>& used_columns() const { return used_columns_; }
  const std::vector<Condition>& gold_remaining() const { return remaining_; }
  // Question positions that may continue the current copied span; empty
  // unless at least one value token was emitted.
  const std::vector<std::size_t>& copy_cursors() const { return cursors_; }
  bool done() const { return clause_ == Clause::kDone; }

 private:
  struct Context {
    const TableSchema* schema;
    std::vector<std::string> question;
    OutputSpace space;
    std::optional<QueryTree> gold;
    GrammarOptions options;
  };

  friend GrammarState InitGrammar(const TableSchema&, const std::vector<std::string>&,
                                  const std::optional<QueryTree>&, GrammarOptions);
  friend TokenMask ValidNext(const GrammarState&);
  friend GrammarState Advance(const GrammarState&, int);

  bool ColumnUsed(int col) const {
    return std::find(used_columns_.begin(), used_columns_.end(), col) != used_columns_.end();
  }
  bool CanOpenCondition() const {
    if (ctx_->question.empty()) return false;
    if (!ctx_->options.forbid_repeated_columns) return true;
    return used_columns_.size() < ctx_->schema->num_columns();
  }

  std::shared_ptr<const Context> ctx_;
  Clause clause_ = Clause::kStart;
  int select_col_ = -1;
  int cond_col_ = -1;
  int cond_op_ = -1;
  bool value_open_ = false;
  std::vector<std::string> value_;
  std::vector<std::size_t> cursors_;
  std::vector<int> used_columns_;
  std::vector<Condition> remaining_;
};

// Free mode when gold is empty, oracle mode otherwise. The schema must
// outlive every state derived from the result.
inline GrammarState InitGrammar(const TableSchema& schema, const std::vector<std::string>& question,
                                const std::optional<QueryTree>& gold = std::nullopt,
                                GrammarOptions options = {}) {
  auto ctx = std::make_shared<GrammarState::Context>();
  ctx->schema = &schema;
  ctx->question = question;
  ctx->space = OutputSpace(schema.num_columns(), question);
  ctx->options = options;
  GrammarState st;
  if (gold) {
    ValidateTree(*gold, schema);
    for (const auto& c : gold->conditions)
      if (!FindSpan(question, c.value))
        throw NotCopyable("gold value '" + JoinWords(c.value) + "' is not a span of the question");
    if (options.forbid_repeated_columns)
      for (std::size_t i = 0; i < gold->conditions.size(); ++i)
        for (std::size_t j = 0; j < i; ++j)
          if (gold->conditions[i].column == gold->conditions[j].column)
            throw InvalidTree("gold repeats a condition column while repeats are forbidden");
    ctx->gold = gold;
    st.remaining_ = gold->conditions;
  }
  st.ctx_ = std::move(ctx);
  return st;
}

inline TokenMask ValidNext(const GrammarState& st) {
  const auto& ctx = *st.ctx_;
  const OutputSpace& sp = ctx.space;
  const TableSchema& schema = *ctx.schema;
  const std::optional<QueryTree>& gold = ctx.gold;
  TokenMask m(sp.size());
  auto allow = [&](int i) { m.allowed[i] = 1; };
  auto allow_sql = [&](Sql s) { allow(OutputSpace::SqlIndex(s)); };

  // Oracle candidates for the condition currently being emitted.
  auto candidates = [&] {
    std::vector<const Condition*> out;
    for (const auto& c : st.remaining_) {
      if (c.column != st.cond_col_) continue;
      if (st.clause_ != Clause::kCondOp && c.op != st.cond_op_) continue;
      if (c.value.size() < st.value_.size() ||
          !std::equal(st.value_.begin(), st.value_.end(), c.value.begin()))
        continue;
      out.push_back(&c);
    }
    return out;
  };

  switch (st.clause_) {
    case Clause::kStart:
      allow_sql(Sql::kSelect);
      break;
    case Clause::kSelectCol:
      if (gold) allow(sp.ColumnIndex(gold->select_col));
      else
        for (int c = 0; c < sp.num_columns(); ++c) allow(sp.ColumnIndex(c));
      break;
    case Clause::kSelectAgg: {
      const ColumnType type = schema.column_types[st.select_col_];
      for (int a = 0; a < kNumAggregators; ++a)
        if (AggregatorAllowed(type, a) && (!gold || gold->select_agg == a)) allow(OutputSpace::AggIndex(a));
      break;
    }
    case Clause::kAfterSelect:
      if (gold) {
        allow_sql(gold->conditions.empty() ? Sql::kEnd : Sql::kWhere);
      } else {
        allow_sql(Sql::kEnd);
        if (st.CanOpenCondition()) allow_sql(Sql::kWhere);
      }
      break;
    case Clause::kWhereStart:
      allow_sql(Sql::kCond);
      break;
    case Clause::kCondCol:
      for (int c = 0; c < sp.num_columns(); ++c) {
        if (ctx.options.forbid_repeated_columns && st.ColumnUsed(c)) continue;
        if (gold && std::none_of(st.remaining_.begin(), st.remaining_.end(),
                                 [&](const Condition& r) { return r.column == c; }))
          continue;
        allow(sp.ColumnIndex(c));
      }
      break;
    case Clause::kCondOp: {
      const ColumnType type = schema.column_types[st.cond_col_];
      std::vector<const Condition*> cands;
      if (gold) cands = candidates();
      for (int o = 0; o < kNumOperators; ++o) {
        if (!OperatorAllowed(type, o)) continue;
        if (gold && std::none_of(cands.begin(), cands.end(), [&](const Condition* c) { return c->op == o; }))
          continue;
        allow(OutputSpace::OpIndex(o));
      }
      break;
    }
    case Clause::kCondVal: {
      if (!st.value_open_) {
        allow_sql(Sql::kVal);
        break;
      }
      // Free mask: any question word to start the span, then only the word
      // at a live cursor or ENDVAL.
      TokenMask free(sp.size());
      if (st.value_.empty()) {
        for (int w = 0; w < sp.num_words(); ++w) free.allowed[sp.word_begin() + w] = 1;
      } else {
        for (std::size_t p : st.cursors_)
          if (p < ctx.question.size()) free.allowed[sp.WordIndexAt(p)] = 1;
        free.allowed[OutputSpace::SqlIndex(Sql::kEndVal)] = 1;
      }
      if (!gold) {
        m = std::move(free);
        break;
      }
      for (const Condition* c : candidates()) {
        if (c->value.size() == st.value_.size()) {
          if (!st.value_.empty()) allow_sql(Sql::kEndVal);
        } else if (auto idx = sp.IndexOf(Token::Word(c->value[st.value_.size()]));
                   idx && free.Allows(*idx)) {
          allow(*idx);
        }
      }
      break;
    }
    case Clause::kAfterCond:
      if (gold) {
        allow_sql(st.remaining_.empty() ? Sql::kEnd : Sql::kCond);
      } else {
        allow_sql(Sql::kEnd);
        if (st.CanOpenCondition()) allow_sql(Sql::kCond);
      }
      break;
    case Clause::kDone:
      break;
  }
  return m;
}

// Deterministic transition; throws IllegalToken when token is not allowed.
inline GrammarState Advance(const GrammarState& st, int token) {
  const TokenMask mask = ValidNext(st);
  if (token < 0 || token >= st.space().size())
    throw IllegalToken("token index " + std::to_string(token) + " outside the output space");
  if (!mask.Allows(token))
    throw IllegalToken("token " + TokenToString(st.space().ToToken(token), &st.schema()) +
                       " not allowed here");
  const OutputSpace& sp = st.space();
  GrammarState next = st;
  switch (st.clause_) {
    case Clause::kStart:
      next.clause_ = Clause::kSelectCol;
      break;
    case Clause::kSelectCol:
      next.select_col_ = token - sp.column_begin();
      next.clause_ = Clause::kSelectAgg;
      break;
    case Clause::kSelectAgg:
      next.clause_ = Clause::kAfterSelect;
      break;
    case Clause::kAfterSelect:
      next.clause_ = token == OutputSpace::SqlIndex(Sql::kEnd) ? Clause::kDone : Clause::kWhereStart;
      break;
    case Clause::kWhereStart:
      next.clause_ = Clause::kCondCol;
      break;
    case Clause::kCondCol:
      next.cond_col_ = token - sp.column_begin();
      next.clause_ = Clause::kCondOp;
      break;
    case Clause::kCondOp:
      next.cond_op_ = token - OutputSpace::OpIndex(0);
      next.clause_ = Clause::kCondVal;
      break;
    case Clause::kCondVal: {
      if (!st.value_open_) {
        next.value_open_ = true;
        break;
      }
      if (token == OutputSpace::SqlIndex(Sql::kEndVal)) {
        Condition done{st.cond_col_, st.cond_op_, st.value_};
        if (st.oracle()) {
          auto it = std::find(next.remaining_.begin(), next.remaining_.end(), done);
          next.remaining_.erase(it);
        }
        next.used_columns_.push_back(st.cond_col_);
        next.value_.clear();
        next.cursors_.clear();
        next.value_open_ = false;
        next.cond_col_ = next.cond_op_ = -1;
        next.clause_ = Clause::kAfterCond;
        break;
      }
      const int slot = token - sp.word_begin();
      const auto& pw = sp.position_word();
      std::vector<std::size_t> cursors;
      if (st.value_.empty()) {
        for (std::size_t p = 0; p < pw.size(); ++p)
          if (pw[p] == slot) cursors.push_back(p + 1);
      } else {
        for (std::size_t p : st.cursors_)
          if (p < pw.size() && pw[p] == slot) cursors.push_back(p + 1);
      }
      next.cursors_ = std::move(cursors);
      next.value_.push_back(sp.words()[slot]);
      break;
    }
    case Clause::kAfterCond:
      next.clause_ = token == OutputSpace::SqlIndex(Sql::kEnd) ? Clause::kDone : Clause::kCondCol;
      break;
    case Clause::kDone:
      break;
  }
  return next;
}

inline GrammarState Advance(const GrammarState& st, const Token& token) {
  auto idx = st.space().IndexOf(token);
  if (!idx) throw IllegalToken("token " + TokenToString(token, &st.schema()) + " outside the output space");
  return Advance(st, *idx);
}

}  // namespace ptrsql
