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

// Seeded synthetic corpus: random tables with mixed column types, random
// gold trees whose values are drawn from table cells, and template
// questions that mention every value verbatim. Templates for two or three
// conditions often mention them in a different order than the gold tree
// lists them.

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "ptrsql/error.hpp"
#include "ptrsql/query_ast.hpp"
#include "ptrsql/rng.hpp"
#include "ptrsql/table_store.hpp"

namespace ptrsql {

struct SynthConfig {
  int n_train = 2000;
  int n_dev = 300;
  int n_test = 300;
  int n_tables = 50;
  int vocab_size = 300;  // rough target for distinct words overall
  int max_conditions = 3;
  std::uint64_t seed = 1;

  void Validate() const {
    if (n_train < 1 || n_dev < 0 || n_test < 0 || n_tables < 1)
      throw ConfigError("example and table counts must be positive");
    if (max_conditions < 0 || max_conditions > 3) throw ConfigError("max_conditions must be in [0, 3]");
    if (vocab_size < 1) throw ConfigError("vocab_size must be positive");
  }
};

struct SynthData {
  TableMap tables;
  std::vector<Example> train;
  std::vector<Example> dev;
  std::vector<Example> test;
};

namespace synth {

struct ColumnDef {
  std::vector<std::string> name;
  ColumnType type;
};

inline const std::vector<ColumnDef>& ColumnPool() {
  static const std::vector<ColumnDef> pool = [] {
    std::vector<ColumnDef> p;
    for (const char* n : {"name", "team", "city", "country", "player", "position", "club", "venue", "school",
                          "party", "director", "album", "color", "brand", "opponent", "region"})
      p.push_back({{n}, ColumnType::kText});
    p.push_back({{"home", "team"}, ColumnType::kText});
    p.push_back({{"away", "team"}, ColumnType::kText});
    for (const char* n : {"year", "score", "points", "rank", "goals", "games", "age", "height", "weight", "wins",
                          "losses", "attendance", "price", "round", "pick", "votes", "population", "area"})
      p.push_back({{n}, ColumnType::kFloat});
    p.push_back({{"clock", "speed"}, ColumnType::kFloat});
    p.push_back({{"fsb", "speed"}, ColumnType::kFloat});
    p.push_back({{"l1", "cache"}, ColumnType::kFloat});
    return p;
  }();
  return pool;
}

// Pronounceable pseudo-words for text cells.
inline std::vector<std::string> MakeValueWords(int n, Rng& rng) {
  static const char* onsets[] = {"b", "d", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "gr"};
  static const char* vowels[] = {"a", "e", "i", "o", "u"};
  std::set<std::string> seen;
  std::vector<std::string> out;
  while (static_cast<int>(out.size()) < n) {
    std::string w;
    const int syllables = 2 + static_cast<int>(rng.UniformInt(2));
    for (int s = 0; s < syllables; ++s) {
      w += onsets[rng.UniformInt(std::size(onsets))];
      w += vowels[rng.UniformInt(std::size(vowels))];
    }
    if (seen.insert(w).second) out.push_back(w);
  }
  return out;
}

template <std::size_t N>
const char* Pick(Rng& rng, const char* const (&options)[N]) {
  return options[rng.UniformInt(N)];
}

inline void Append(std::vector<std::string>& out, const std::vector<std::string>& words) {
  out.insert(out.end(), words.begin(), words.end());
}

inline void AppendText(std::vector<std::string>& out, const char* text) { Append(out, Tokenize(text)); }

inline std::vector<std::string> SelectPhrase(const QueryTree& q, const TableSchema& s, Rng& rng) {
  std::vector<std::string> out;
  const auto& col = s.column_names[q.select_col];
  static const char* const none[] = {"what is the", "which", "show the"};
  static const char* const max[] = {"what is the highest", "maximum", "largest"};
  static const char* const min[] = {"what is the lowest", "minimum", "smallest"};
  static const char* const count[] = {"how many", "count the", "number of"};
  static const char* const sum[] = {"total", "sum of the", "what is the total"};
  static const char* const avg[] = {"average", "mean", "what is the average"};
  switch (q.select_agg) {
    case kAggNone: AppendText(out, Pick(rng, none)); break;
    case kAggMax: AppendText(out, Pick(rng, max)); break;
    case kAggMin: AppendText(out, Pick(rng, min)); break;
    case kAggCount: AppendText(out, Pick(rng, count)); break;
    case kAggSum: AppendText(out, Pick(rng, sum)); break;
    case kAggAvg: AppendText(out, Pick(rng, avg)); break;
  }
  Append(out, col);
  return out;
}

// Text equalities sometimes drop the column name, leaving the value to
// identify it; numeric phrases sometimes put the value first.
inline std::vector<std::string> ConditionPhrase(const Condition& c, const TableSchema& s, Rng& rng) {
  std::vector<std::string> out;
  const auto& col = s.column_names[c.column];
  if (s.column_types[c.column] == ColumnType::kText) {
    if (!rng.Bernoulli(0.3)) {
      Append(out, col);
      static const char* const eq[] = {"is", "of", "equal to"};
      AppendText(out, Pick(rng, eq));
    }
    Append(out, c.value);
    return out;
  }
  const int form = static_cast<int>(rng.UniformInt(3));
  static const char* const eq[] = {"is", "of", ""};
  static const char* const gt[] = {"above", "greater than", "more than"};
  static const char* const lt[] = {"below", "less than", "fewer than"};
  const char* word = c.op == kOpEq ? eq[form] : c.op == kOpGt ? gt[form] : lt[form];
  if (form == 2) {
    AppendText(out, word);
    Append(out, c.value);
    Append(out, col);
  } else {
    Append(out, col);
    AppendText(out, word);
    Append(out, c.value);
  }
  return out;
}

// Template pieces: literal text or a slot. Slot 0 is the select phrase,
// slot k >= 1 the k-th gold condition.
struct Piece {
  const char* text;
  int slot;
};

inline const std::vector<std::vector<std::vector<Piece>>>& Templates() {
  static const std::vector<std::vector<std::vector<Piece>>> t = {
      {
          {{"", 0}},
          {{"tell me", -1}, {"", 0}},
          {{"", 0}, {"in the table", -1}},
      },
      {
          {{"", 0}, {"when", -1}, {"", 1}},
          {{"", 0}, {"for rows where", -1}, {"", 1}},
          {{"with", -1}, {"", 1}, {"", 0}},
      },
      {
          {{"", 0}, {"when", -1}, {"", 1}, {"and", -1}, {"", 2}},
          {{"", 0}, {"where", -1}, {"", 2}, {"and also", -1}, {"", 1}},
          {{"among entries with", -1}, {"", 2}, {"", 0}, {"if", -1}, {"", 1}},
      },
      {
          {{"", 0}, {"when", -1}, {"", 1}, {"", 2}, {"and", -1}, {"", 3}},
          {{"", 0}, {"where", -1}, {"", 3}, {"also", -1}, {"", 1}, {"and", -1}, {"", 2}},
          {{"given", -1}, {"", 2}, {"and", -1}, {"", 3}, {"", 0}, {"with", -1}, {"", 1}},
      },
  };
  return t;
}

inline std::vector<std::string> Question(const QueryTree& q, const TableSchema& s, Rng& rng) {
  const auto& options = Templates()[q.conditions.size()];
  const auto& tmpl = options[rng.UniformInt(options.size())];
  std::vector<std::string> out;
  for (const Piece& p : tmpl) {
    if (p.slot < 0) AppendText(out, p.text);
    else if (p.slot == 0) Append(out, SelectPhrase(q, s, rng));
    else Append(out, ConditionPhrase(q.conditions[p.slot - 1], s, rng));
  }
  return out;
}

inline std::string FormatNumber(double v) {
  const long long i = static_cast<long long>(v);
  return std::to_string(i);
}

inline Table MakeTable(int index, const std::vector<std::string>& value_words, Rng& rng) {
  const auto& pool = ColumnPool();
  std::vector<std::size_t> ids(pool.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  rng.Shuffle(ids);
  const int ncols = 4 + static_cast<int>(rng.UniformInt(4));
  Table t;
  t.schema.table_id = "t" + std::to_string(index);
  bool has_text = false, has_float = false;
  for (int c = 0; c < ncols; ++c) {
    const ColumnDef& d = pool[ids[c]];
    t.schema.column_names.push_back(d.name);
    t.schema.column_types.push_back(d.type);
    (d.type == ColumnType::kText ? has_text : has_float) = true;
  }
  // Keep at least one column of each type.
  if (!has_text || !has_float) {
    const ColumnType want = has_text ? ColumnType::kFloat : ColumnType::kText;
    for (std::size_t k = ncols; k < ids.size(); ++k)
      if (pool[ids[k]].type == want) {
        t.schema.column_names.back() = pool[ids[k]].name;
        t.schema.column_types.back() = want;
        break;
      }
  }
  const int nrows = 8 + static_cast<int>(rng.UniformInt(8));
  for (int r = 0; r < nrows; ++r) {
    std::vector<Cell> row;
    for (auto type : t.schema.column_types) {
      if (type == ColumnType::kFloat) {
        row.emplace_back(static_cast<double>(rng.UniformInt(100)));
      } else {
        std::string cell = value_words[rng.UniformInt(value_words.size())];
        if (rng.Bernoulli(0.3)) cell += " " + value_words[rng.UniformInt(value_words.size())];
        row.emplace_back(cell);
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline QueryTree MakeTree(const Table& t, int max_conditions, Rng& rng) {
  const TableSchema& s = t.schema;
  const int ncols = static_cast<int>(s.num_columns());
  QueryTree q;
  q.select_col = static_cast<int>(rng.UniformInt(ncols));
  if (s.column_types[q.select_col] == ColumnType::kText) {
    q.select_agg = rng.Bernoulli(0.75) ? kAggNone : kAggCount;
  } else {
    q.select_agg = rng.Bernoulli(0.5) ? kAggNone : 1 + static_cast<int>(rng.UniformInt(kNumAggregators - 1));
  }
  static const double weights[] = {0.15, 0.35, 0.30, 0.20};
  std::vector<int> others;
  for (int c = 0; c < ncols; ++c)
    if (c != q.select_col) others.push_back(c);
  rng.Shuffle(others);
  const int cap = std::min<int>(max_conditions, static_cast<int>(others.size()));
  double total = 0;
  for (int k = 0; k <= cap; ++k) total += weights[k];
  double u = rng.Uniform() * total;
  int k = 0;
  while (k < cap && u >= weights[k]) u -= weights[k++];
  const auto& row = t.rows[rng.UniformInt(t.rows.size())];
  for (int i = 0; i < k; ++i) {
    const int col = others[i];
    Condition c;
    c.column = col;
    if (s.column_types[col] == ColumnType::kText) {
      c.op = kOpEq;
      c.value = Tokenize(std::get<std::string>(row[col]));
    } else {
      c.op = static_cast<int>(rng.UniformInt(kNumOperators));
      c.value = {FormatNumber(std::get<double>(row[col]))};
    }
    q.conditions.push_back(std::move(c));
  }
  return q;
}

}  // namespace synth

inline SynthData GenerateSynthetic(const SynthConfig& cfg) {
  cfg.Validate();
  const Rng root(cfg.seed);
  Rng word_rng = root.Split(0);
  // Column, template and number words take roughly 200 slots.
  const auto value_words = synth::MakeValueWords(std::max(20, cfg.vocab_size - 200), word_rng);
  SynthData data;
  std::vector<const Table*> tables;
  for (int i = 0; i < cfg.n_tables; ++i) {
    Rng rng = root.Split(1).Split(i);
    Table t = synth::MakeTable(i, value_words, rng);
    const std::string id = t.schema.table_id;
    tables.push_back(&data.tables.emplace(id, std::move(t)).first->second);
  }
  auto make = [&](int n, std::uint64_t stream) {
    std::vector<Example> out;
    for (int i = 0; i < n; ++i) {
      Rng rng = root.Split(2 + stream).Split(i);
      const Table& t = *tables[rng.UniformInt(tables.size())];
      Example ex;
      ex.table_id = t.schema.table_id;
      ex.gold = synth::MakeTree(t, cfg.max_conditions, rng);
      ex.question = synth::Question(ex.gold, t.schema, rng);
      out.push_back(std::move(ex));
    }
    return out;
  };
  data.train = make(cfg.n_train, 0);
  data.dev = make(cfg.n_dev, 1);
  data.test = make(cfg.n_test, 2);
  return data;
}

// Writes tables.jsonl, train.jsonl, dev.jsonl and test.jsonl into dir.
inline void WriteSynthetic(const SynthData& data, const std::string& dir) {
  auto open = [&](const std::string& name) {
    std::ofstream out(dir + "/" + name, std::ios::trunc);
    if (!out) throw IoError("cannot write " + dir + "/" + name);
    return out;
  };
  {
    auto out = open("tables.jsonl");
    for (const auto& [id, t] : data.tables) out << TableToJson(t).dump() << '\n';
  }
  const std::pair<const char*, const std::vector<Example>*> splits[] = {
      {"train.jsonl", &data.train}, {"dev.jsonl", &data.dev}, {"test.jsonl", &data.test}};
  for (const auto& [name, examples] : splits) {
    auto out = open(name);
    for (const auto& ex : *examples) out << ExampleToJson(ex).dump() << '\n';
    if (!out) throw IoError(std::string("write failure on ") + name);
  }
}

}  // namespace ptrsql
