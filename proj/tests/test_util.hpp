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

#include <string>
#include <vector>

#include "ptrsql/query_ast.hpp"
#include "ptrsql/rng.hpp"
#include "ptrsql/schema.hpp"
#include "ptrsql/table_store.hpp"

namespace ptrsql::testing {

// The processor table of the running example: L1 cache, FSB speed, clock
// speed, plus a text model column.
inline TableSchema ProcessorSchema() {
  TableSchema s;
  s.table_id = "processors";
  s.column_names = {{"l1", "cache"}, {"fsb", "speed"}, {"clock", "speed"}, {"model"}};
  s.column_types = {ColumnType::kFloat, ColumnType::kFloat, ColumnType::kFloat, ColumnType::kText};
  return s;
}

inline std::vector<std::string> ProcessorQuestion() {
  return Tokenize("How much L1 Cache can we get with an FSB speed of 800MHz and a clock speed of 1.0GHz?");
}

// SELECT L1_Cache WHERE FSB_Speed = 800 AND Clock_Speed = 1.0
inline QueryTree ProcessorQuery() {
  QueryTree t;
  t.select_col = 0;
  t.select_agg = kAggNone;
  t.conditions = {{1, kOpEq, {"800"}}, {2, kOpEq, {"1.0"}}};
  return t;
}

inline TableSchema RandomSchema(Rng& rng, int min_cols = 1, int max_cols = 6) {
  TableSchema s;
  s.table_id = "t" + std::to_string(rng.NextU64() % 100000);
  const int n = min_cols + static_cast<int>(rng.UniformInt(max_cols - min_cols + 1));
  for (int c = 0; c < n; ++c) {
    s.column_names.push_back({"c" + std::to_string(c)});
    s.column_types.push_back(rng.Bernoulli(0.5) ? ColumnType::kText : ColumnType::kFloat);
  }
  return s;
}

inline std::vector<std::string> RandomQuestion(Rng& rng, int min_len = 1, int max_len = 10, int alphabet = 8) {
  const int n = min_len + static_cast<int>(rng.UniformInt(max_len - min_len + 1));
  std::vector<std::string> q;
  for (int i = 0; i < n; ++i) q.push_back("w" + std::to_string(rng.UniformInt(alphabet)));
  return q;
}

// Random valid tree whose values are spans of question; distinct
// condition columns.
inline QueryTree RandomTree(Rng& rng, const TableSchema& s, const std::vector<std::string>& question,
                            int max_conds = 4) {
  QueryTree t;
  const int ncols = static_cast<int>(s.num_columns());
  t.select_col = static_cast<int>(rng.UniformInt(ncols));
  do {
    t.select_agg = static_cast<int>(rng.UniformInt(kNumAggregators));
  } while (!AggregatorAllowed(s.column_types[t.select_col], t.select_agg));
  std::vector<int> cols(ncols);
  for (int c = 0; c < ncols; ++c) cols[c] = c;
  rng.Shuffle(cols);
  const int k = static_cast<int>(rng.UniformInt(std::min(max_conds, ncols) + 1));
  for (int i = 0; i < k; ++i) {
    Condition c;
    c.column = cols[i];
    do {
      c.op = static_cast<int>(rng.UniformInt(kNumOperators));
    } while (!OperatorAllowed(s.column_types[c.column], c.op));
    const std::size_t start = rng.UniformInt(question.size());
    const std::size_t len = 1 + rng.UniformInt(std::min<std::size_t>(3, question.size() - start));
    c.value.assign(question.begin() + start, question.begin() + start + len);
    t.conditions.push_back(std::move(c));
  }
  return t;
}

}  // namespace ptrsql::testing
