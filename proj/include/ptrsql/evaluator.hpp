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

// Sequence-match, query-match and execution accuracies plus the
// per-clause error breakdown.

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ptrsql/error.hpp"
#include "ptrsql/model.hpp"
#include "ptrsql/query_ast.hpp"
#include "ptrsql/table_store.hpp"

namespace ptrsql {

// A decoded sequence (without END). tokens is empty-optional when nothing
// usable was produced; tree is empty when the tokens do not parse.
struct Prediction {
  std::optional<LinearQuery> tokens;
  std::optional<QueryTree> tree;

  static Prediction FromTokens(LinearQuery tokens, const TableSchema& schema) {
    Prediction p;
    try {
      p.tree = Delinearize(tokens, schema);
    } catch (const ParseError&) {
    }
    p.tokens = std::move(tokens);
    return p;
  }
  static Prediction FromTree(const QueryTree& tree, const TableSchema& schema, const OrderPolicy& policy = {}) {
    return {Linearize(tree, schema, policy), tree};
  }
};

struct ErrorFlags {
  bool whole_query = false;
  bool select = false;
  bool select_agg = false;
  bool select_col = false;
  bool select_both = false;
  bool where = false;
  bool both_clauses = false;
};

inline ErrorFlags ClassifyErrors(const std::optional<QueryTree>& pred, const QueryTree& gold) {
  ErrorFlags f;
  if (!pred) {
    f = {true, true, true, true, true, true, true};
    return f;
  }
  f.whole_query = !QueryEqual(*pred, gold);
  f.select_agg = pred->select_agg != gold.select_agg;
  f.select_col = pred->select_col != gold.select_col;
  f.select = f.select_agg || f.select_col;
  f.select_both = f.select_agg && f.select_col;
  f.where = Canonicalize(*pred).conditions != Canonicalize(gold).conditions;
  f.both_clauses = f.select && f.where;
  return f;
}

struct ErrorBreakdown {
  int whole_query = 0;
  int select = 0;
  int select_agg = 0;
  int select_col = 0;
  int select_both = 0;
  int where = 0;
  int both_clauses = 0;

  void Add(const ErrorFlags& f) {
    whole_query += f.whole_query;
    select += f.select;
    select_agg += f.select_agg;
    select_col += f.select_col;
    select_both += f.select_both;
    where += f.where;
    both_clauses += f.both_clauses;
  }
};

struct EvalReport {
  int n = 0;
  double acc_lf = 0;
  double acc_qm = 0;
  double acc_ex = 0;
  int unparseable = 0;
  ErrorBreakdown errors;

  nlohmann::json ToJson() const {
    nlohmann::json j;
    j["n"] = n;
    j["acc_lf"] = acc_lf;
    j["acc_qm"] = acc_qm;
    j["acc_ex"] = acc_ex;
    j["unparseable"] = unparseable;
    j["errors"] = {{"whole_query", errors.whole_query}, {"select", errors.select},
                   {"select_agg", errors.select_agg},   {"select_col", errors.select_col},
                   {"select_both", errors.select_both}, {"where", errors.where},
                   {"both_clauses", errors.both_clauses}};
    return j;
  }

  // Accuracies as percentages, then the breakdown with each row relative
  // to its parent category.
  std::string ToText() const {
    auto pct = [](int a, int b) { return b > 0 ? 100.0 * a / b : 0.0; };
    char buf[1024];
    std::snprintf(buf, sizeof buf,
                  "examples      %d\n"
                  "Acc_LF        %.1f\n"
                  "Acc_QM        %.1f\n"
                  "Acc_EX        %.1f\n"
                  "\n"
                  "error                       count   %% of parent\n"
                  "whole query              %8d   %6.1f\n"
                  "  SELECT clause          %8d   %6.1f\n"
                  "    aggregator           %8d   %6.1f\n"
                  "    column               %8d   %6.1f\n"
                  "    (both)               %8d   %6.1f\n"
                  "  WHERE clause           %8d   %6.1f\n"
                  "  both clauses           %8d   %6.1f\n",
                  n, 100 * acc_lf, 100 * acc_qm, 100 * acc_ex, errors.whole_query, pct(errors.whole_query, n),
                  errors.select, pct(errors.select, errors.whole_query), errors.select_agg,
                  pct(errors.select_agg, errors.select), errors.select_col, pct(errors.select_col, errors.select),
                  errors.select_both, pct(errors.select_both, errors.select), errors.where,
                  pct(errors.where, errors.whole_query), errors.both_clauses,
                  pct(errors.both_clauses, errors.whole_query));
    return buf;
  }
};

inline const Table& TableFor(const TableMap& tables, const std::string& id) {
  auto it = tables.find(id);
  if (it == tables.end()) throw MissingTable("no table '" + id + "'");
  return it->second;
}

// Acc_LF compares against linearize(gold, policy); Acc_QM and Acc_EX are
// order-insensitive.
inline EvalReport Evaluate(const std::vector<Example>& examples, const std::vector<Prediction>& predictions,
                           const TableMap& tables, const OrderPolicy& policy = {}) {
  if (examples.size() != predictions.size()) throw LengthMismatch("one prediction per example required");
  EvalReport r;
  r.n = static_cast<int>(examples.size());
  int lf = 0, qm = 0, ex = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const Example& e = examples[i];
    const Prediction& p = predictions[i];
    const Table& table = TableFor(tables, e.table_id);
    if (!p.tree) ++r.unparseable;
    const bool seq = p.tokens && p.tree && *p.tokens == Linearize(e.gold, table.schema, policy);
    const bool query = p.tree && QueryEqual(*p.tree, e.gold);
    bool exec = query;
    if (!exec && p.tree) {
      try {
        exec = ResultEqual(Execute(*p.tree, table), Execute(e.gold, table));
      } catch (const ValueParseError&) {
        exec = false;
      } catch (const InvalidTree&) {
        exec = false;
      }
    }
    lf += seq;
    qm += query;
    ex += exec;
    r.errors.Add(ClassifyErrors(p.tree, e.gold));
  }
  if (r.n > 0) {
    r.acc_lf = static_cast<double>(lf) / r.n;
    r.acc_qm = static_cast<double>(qm) / r.n;
    r.acc_ex = static_cast<double>(ex) / r.n;
  }
  return r;
}

template <class T>
std::vector<Prediction> PredictAll(const PtrGenModel<T>& model, const std::vector<Example>& examples,
                                   const TableMap& tables, const DecodeOptions& opts = {}) {
  std::vector<Prediction> out;
  out.reserve(examples.size());
  for (const auto& e : examples) {
    const Table& table = TableFor(tables, e.table_id);
    Decoded d = GreedyDecode(model, table.schema, e.question, opts);
    Prediction p;
    if (d.finished) {
      p.tokens = std::move(d.tokens);
      p.tree = std::move(d.tree);
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace ptrsql
