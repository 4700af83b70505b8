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

// Query trees (one SELECT plus an unordered set of WHERE conditions), their
// token-sequence linearizations, strict delinearization, and order-insensitive
// equality.

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "ptrsql/error.hpp"
#include "ptrsql/rng.hpp"
#include "ptrsql/schema.hpp"

namespace ptrsql {

inline constexpr int kNumAggregators = 6;  // none, MAX, MIN, COUNT, SUM, AVG
inline constexpr int kNumOperators = 3;    // =, >, <

enum Aggregator : int { kAggNone = 0, kAggMax, kAggMin, kAggCount, kAggSum, kAggAvg };
enum Operator : int { kOpEq = 0, kOpGt, kOpLt };

// Fixed SQL vocabulary. Aggregator k is kAgg0 + k, operator k is kOp0 + k.
enum class Sql : std::int32_t {
  kSelect = 0,
  kWhere,
  kCond,
  kVal,
  kEndVal,
  kEnd,
  kAgg0,
  kOp0 = kAgg0 + kNumAggregators,
};
inline constexpr int kNumSqlTokens = static_cast<int>(Sql::kOp0) + kNumOperators;

inline constexpr std::array<std::string_view, kNumSqlTokens> kSqlNames = {
    "SELECT", "WHERE", "COND", "VAL", "ENDVAL", "END", "AGG0", "AGG1",
    "AGG2",   "AGG3",  "AGG4", "AGG5", "OP0",   "OP1", "OP2"};

inline bool AggregatorAllowed(ColumnType type, int agg) {
  if (agg < 0 || agg >= kNumAggregators) return false;
  return type == ColumnType::kFloat || agg == kAggNone || agg == kAggCount;
}

inline bool OperatorAllowed(ColumnType type, int op) {
  if (op < 0 || op >= kNumOperators) return false;
  return type == ColumnType::kFloat || op == kOpEq;
}

enum class TokenKind : std::uint8_t { kSql, kColumn, kWord };

// One output token from V^D = V^SQL u V^COL u V^E. Column tokens index the
// example's schema; word tokens carry the (tokenized) surface word.
struct Token {
  TokenKind kind = TokenKind::kSql;
  std::int32_t index = 0;
  std::string word;

  static Token Of(Sql s) { return {TokenKind::kSql, static_cast<std::int32_t>(s), {}}; }
  static Token Agg(int agg) { return Of(static_cast<Sql>(static_cast<int>(Sql::kAgg0) + agg)); }
  static Token Op(int op) { return Of(static_cast<Sql>(static_cast<int>(Sql::kOp0) + op)); }
  static Token Column(int col) { return {TokenKind::kColumn, col, {}}; }
  static Token Word(std::string w) { return {TokenKind::kWord, -1, std::move(w)}; }

  bool Is(Sql s) const { return kind == TokenKind::kSql && index == static_cast<std::int32_t>(s); }
  bool IsAgg() const {
    return kind == TokenKind::kSql && index >= static_cast<int>(Sql::kAgg0) &&
           index < static_cast<int>(Sql::kAgg0) + kNumAggregators;
  }
  bool IsOp() const {
    return kind == TokenKind::kSql && index >= static_cast<int>(Sql::kOp0) &&
           index < kNumSqlTokens;
  }
  int agg() const { return index - static_cast<int>(Sql::kAgg0); }
  int op() const { return index - static_cast<int>(Sql::kOp0); }

  friend bool operator==(const Token& a, const Token& b) {
    return a.kind == b.kind && a.index == b.index && a.word == b.word;
  }
};

using LinearQuery = std::vector<Token>;

struct Condition {
  int column = 0;
  int op = kOpEq;
  std::vector<std::string> value;

  friend bool operator==(const Condition&, const Condition&) = default;
  friend auto operator<=>(const Condition& a, const Condition& b) {
    return std::tie(a.column, a.op, a.value) <=> std::tie(b.column, b.op, b.value);
  }
};

struct QueryTree {
  int select_agg = kAggNone;
  int select_col = 0;
  std::vector<Condition> conditions;  // order carries no meaning

  friend bool operator==(const QueryTree&, const QueryTree&) = default;
};

struct OrderPolicy {
  enum class Variant { kOriginal, kReversed, kArbitraryPerTrial };
  Variant variant = Variant::kOriginal;
  std::uint64_t seed = 0;

  static OrderPolicy Original() { return {}; }
  static OrderPolicy Reversed() { return {Variant::kReversed, 0}; }
  static OrderPolicy Arbitrary(std::uint64_t seed) { return {Variant::kArbitraryPerTrial, seed}; }
};

// Throws InvalidTree describing the first violated invariant.
inline void ValidateTree(const QueryTree& tree, const TableSchema& schema) {
  const int ncols = static_cast<int>(schema.num_columns());
  if (tree.select_col < 0 || tree.select_col >= ncols)
    throw InvalidTree("select column " + std::to_string(tree.select_col) + " out of range");
  if (!AggregatorAllowed(schema.column_types[tree.select_col], tree.select_agg))
    throw InvalidTree("aggregator " + std::to_string(tree.select_agg) +
                      " not applicable to column " + std::to_string(tree.select_col));
  for (std::size_t i = 0; i < tree.conditions.size(); ++i) {
    const Condition& c = tree.conditions[i];
    if (c.column < 0 || c.column >= ncols)
      throw InvalidTree("condition column " + std::to_string(c.column) + " out of range");
    if (!OperatorAllowed(schema.column_types[c.column], c.op))
      throw InvalidTree("operator " + std::to_string(c.op) + " not applicable to column " +
                        std::to_string(c.column));
    if (c.value.empty()) throw InvalidTree("empty condition value");
    for (std::size_t j = 0; j < i; ++j)
      if (tree.conditions[j] == c) throw InvalidTree("duplicate condition");
  }
}

inline std::vector<std::size_t> ConditionOrder(std::size_t n, const OrderPolicy& policy) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  switch (policy.variant) {
    case OrderPolicy::Variant::kOriginal:
      break;
    case OrderPolicy::Variant::kReversed:
      std::reverse(order.begin(), order.end());
      break;
    case OrderPolicy::Variant::kArbitraryPerTrial: {
      Rng rng(policy.seed);
      rng.Shuffle(order);
      break;
    }
  }
  return order;
}

// SELECT <col> <agg> [WHERE (COND <col> <op> VAL <word>+ ENDVAL)+]
inline LinearQuery Linearize(const QueryTree& tree, const TableSchema& schema,
                             const OrderPolicy& policy = {}) {
  ValidateTree(tree, schema);
  LinearQuery out;
  out.push_back(Token::Of(Sql::kSelect));
  out.push_back(Token::Column(tree.select_col));
  out.push_back(Token::Agg(tree.select_agg));
  if (tree.conditions.empty()) return out;
  out.push_back(Token::Of(Sql::kWhere));
  for (std::size_t idx : ConditionOrder(tree.conditions.size(), policy)) {
    const Condition& c = tree.conditions[idx];
    out.push_back(Token::Of(Sql::kCond));
    out.push_back(Token::Column(c.column));
    out.push_back(Token::Op(c.op));
    out.push_back(Token::Of(Sql::kVal));
    for (const auto& w : c.value) out.push_back(Token::Word(w));
    out.push_back(Token::Of(Sql::kEndVal));
  }
  return out;
}

// Strict inverse of Linearize. A single trailing END is accepted.
inline QueryTree Delinearize(const LinearQuery& tokens, const TableSchema& schema) {
  const int ncols = static_cast<int>(schema.num_columns());
  std::size_t pos = 0;
  auto at_end = [&] { return pos >= tokens.size() || (pos + 1 == tokens.size() && tokens[pos].Is(Sql::kEnd)); };
  auto fail = [&](std::vector<std::string> expected, const std::string& detail = {}) -> void {
    throw ParseError(pos, std::move(expected), detail);
  };
  auto all_aggs = [] {
    std::vector<std::string> v;
    for (int a = 0; a < kNumAggregators; ++a) v.emplace_back(kSqlNames[static_cast<int>(Sql::kAgg0) + a]);
    return v;
  };
  auto all_ops = [] {
    std::vector<std::string> v;
    for (int o = 0; o < kNumOperators; ++o) v.emplace_back(kSqlNames[static_cast<int>(Sql::kOp0) + o]);
    return v;
  };
  auto expect_column = [&]() -> int {
    if (pos >= tokens.size() || tokens[pos].kind != TokenKind::kColumn) fail({"<column>"});
    int col = tokens[pos].index;
    if (col < 0 || col >= ncols) fail({"<column>"}, "column index out of range");
    ++pos;
    return col;
  };

  QueryTree tree;
  if (pos >= tokens.size() || !tokens[pos].Is(Sql::kSelect)) fail({"SELECT"});
  ++pos;
  tree.select_col = expect_column();
  if (pos >= tokens.size() || !tokens[pos].IsAgg()) fail(all_aggs());
  tree.select_agg = tokens[pos].agg();
  if (!AggregatorAllowed(schema.column_types[tree.select_col], tree.select_agg))
    fail({"AGG0", "AGG3"}, "aggregator not applicable to text column");
  ++pos;
  if (at_end()) return tree;
  if (!tokens[pos].Is(Sql::kWhere)) fail({"WHERE", "END"});
  ++pos;
  do {
    if (pos >= tokens.size() || !tokens[pos].Is(Sql::kCond)) fail({"COND"});
    const std::size_t cond_pos = pos;
    ++pos;
    Condition c;
    c.column = expect_column();
    if (pos >= tokens.size() || !tokens[pos].IsOp()) fail(all_ops());
    c.op = tokens[pos].op();
    if (!OperatorAllowed(schema.column_types[c.column], c.op))
      fail({"OP0"}, "operator not applicable to text column");
    ++pos;
    if (pos >= tokens.size() || !tokens[pos].Is(Sql::kVal)) fail({"VAL"});
    ++pos;
    while (pos < tokens.size() && tokens[pos].kind == TokenKind::kWord) {
      c.value.push_back(tokens[pos].word);
      ++pos;
    }
    if (c.value.empty()) fail({"<word>"});
    if (pos >= tokens.size() || !tokens[pos].Is(Sql::kEndVal)) fail({"<word>", "ENDVAL"});
    ++pos;
    for (const auto& prev : tree.conditions)
      if (prev == c) throw ParseError(cond_pos, {}, "duplicate condition");
    tree.conditions.push_back(std::move(c));
  } while (!at_end());
  return tree;
}

inline QueryTree Canonicalize(QueryTree tree) {
  std::sort(tree.conditions.begin(), tree.conditions.end());
  return tree;
}

inline bool QueryEqual(const QueryTree& a, const QueryTree& b) {
  if (a.select_agg != b.select_agg || a.select_col != b.select_col) return false;
  if (a.conditions.size() != b.conditions.size()) return false;
  return Canonicalize(a) == Canonicalize(b);
}

inline std::string TokenToString(const Token& t, const TableSchema* schema = nullptr) {
  switch (t.kind) {
    case TokenKind::kSql:
      return std::string(kSqlNames.at(t.index));
    case TokenKind::kColumn:
      if (schema && t.index >= 0 && static_cast<std::size_t>(t.index) < schema->num_columns())
        return schema->ColumnLabel(t.index);
      return "col" + std::to_string(t.index);
    case TokenKind::kWord:
      return t.word;
  }
  return {};
}

inline std::string ToString(const LinearQuery& q, const TableSchema* schema = nullptr) {
  std::string out;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (i) out += ' ';
    out += TokenToString(q[i], schema);
  }
  return out;
}

// Reads the space-separated display form back. Inside VAL ... ENDVAL every
// token is a word; elsewhere tokens are SQL keywords or column labels
// (or "col<k>").
inline LinearQuery ParseLinear(std::string_view text, const TableSchema& schema) {
  std::istringstream in{std::string(text)};
  std::string piece;
  LinearQuery out;
  bool in_value = false;
  while (in >> piece) {
    if (in_value && piece != "ENDVAL") {
      out.push_back(Token::Word(piece));
      continue;
    }
    auto sql = std::find(kSqlNames.begin(), kSqlNames.end(), piece);
    if (sql != kSqlNames.end()) {
      Token t = Token::Of(static_cast<Sql>(sql - kSqlNames.begin()));
      in_value = t.Is(Sql::kVal);
      out.push_back(std::move(t));
      continue;
    }
    std::optional<int> col;
    for (std::size_t c = 0; c < schema.num_columns(); ++c)
      if (schema.ColumnLabel(c) == piece) {
        col = static_cast<int>(c);
        break;
      }
    if (!col && piece.rfind("col", 0) == 0 && piece.size() > 3 &&
        piece.find_first_not_of("0123456789", 3) == std::string::npos)
      col = std::stoi(piece.substr(3));
    if (!col) throw ParseError(out.size(), {"<sql>", "<column>"}, "unknown token '" + piece + "'");
    out.push_back(Token::Column(*col));
  }
  return out;
}

}  // namespace ptrsql
