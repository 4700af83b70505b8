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

// WikiSQL-style JSON Lines loaders and an in-memory executor used for
// execution accuracy.

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "ptrsql/error.hpp"
#include "ptrsql/query_ast.hpp"
#include "ptrsql/schema.hpp"
#include "ptrsql/tokenizer.hpp"

namespace ptrsql {

using Cell = std::variant<std::string, double>;

struct Table {
  TableSchema schema;
  std::vector<std::vector<Cell>> rows;
};

using TableMap = std::map<std::string, Table>;

struct Example {
  std::vector<std::string> question;
  std::string table_id;
  QueryTree gold;
};

enum class RejectReason { kNotCopyable, kUnknownTable, kInvalidTree, kNonNumericValue };

inline const char* RejectReasonName(RejectReason r) {
  switch (r) {
    case RejectReason::kNotCopyable: return "NotCopyable";
    case RejectReason::kUnknownTable: return "UnknownTable";
    case RejectReason::kInvalidTree: return "InvalidTree";
    case RejectReason::kNonNumericValue: return "NonNumericValue";
  }
  return "?";
}

struct Reject {
  std::size_t line = 0;
  RejectReason reason = RejectReason::kNotCopyable;
  std::string detail;
};

struct Dataset {
  std::vector<Example> examples;
  std::vector<Reject> rejects;
};

// Position of the first occurrence of needle as a contiguous run of haystack.
inline std::optional<std::size_t> FindSpan(const std::vector<std::string>& haystack,
                                           const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > haystack.size()) return std::nullopt;
  auto it = std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end());
  if (it == haystack.end()) return std::nullopt;
  return static_cast<std::size_t>(it - haystack.begin());
}

// Parses a whole string as a finite number, ignoring surrounding spaces.
inline std::optional<double> ParseNumber(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return std::nullopt;
  std::size_t e = s.find_last_not_of(" \t");
  std::string trimmed = s.substr(b, e - b + 1);
  const char* begin = trimmed.c_str();
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(begin, &end);
  if (end != begin + trimmed.size() || errno == ERANGE || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::string NormalizeText(const std::string& s) { return JoinWords(Tokenize(s)); }

namespace detail {

inline std::string JsonScalarText(const nlohmann::json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<long long>());
  if (j.is_number()) return j.dump();
  throw TypeError("expected string or number, got " + j.dump());
}

template <class Fn>
void ForEachJsonLine(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(e.what(), lineno);
    }
    fn(j, lineno);
  }
  if (in.bad()) throw IoError("read failure on " + path);
}

}  // namespace detail

inline Table ParseTable(const nlohmann::json& j, std::size_t lineno = 0) {
  Table t;
  try {
    t.schema.table_id = j.at("id").get<std::string>();
    const auto& header = j.at("header");
    const auto& types = j.at("types");
    if (!header.is_array() || !types.is_array() || header.size() != types.size() || header.empty())
      throw FormatError("header/types must be equal-length non-empty arrays", lineno);
    for (const auto& h : header) t.schema.column_names.push_back(Tokenize(h.get<std::string>()));
    for (const auto& ty : types) {
      std::string s = ty.get<std::string>();
      if (s == "text") t.schema.column_types.push_back(ColumnType::kText);
      else if (s == "real" || s == "float") t.schema.column_types.push_back(ColumnType::kFloat);
      else throw FormatError("unknown column type '" + s + "'", lineno);
    }
    for (const auto& row : j.at("rows")) {
      if (!row.is_array() || row.size() != header.size())
        throw FormatError("row width does not match header", lineno);
      std::vector<Cell> cells;
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (t.schema.column_types[c] == ColumnType::kFloat) {
          std::optional<double> v;
          if (row[c].is_number()) v = row[c].get<double>();
          else if (row[c].is_string()) v = ParseNumber(row[c].get<std::string>());
          if (!v || !std::isfinite(*v))
            throw TypeError("line " + std::to_string(lineno) + ": non-numeric cell " + row[c].dump() +
                            " in real column " + std::to_string(c));
          cells.emplace_back(*v);
        } else {
          cells.emplace_back(detail::JsonScalarText(row[c]));
        }
      }
      t.rows.push_back(std::move(cells));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(e.what(), lineno);
  }
  for (auto& name : t.schema.column_names)
    if (name.empty()) name.push_back("column");
  return t;
}

inline TableMap LoadTables(const std::string& path) {
  TableMap tables;
  detail::ForEachJsonLine(path, [&](const nlohmann::json& j, std::size_t lineno) {
    Table t = ParseTable(j, lineno);
    std::string id = t.schema.table_id;
    if (!tables.emplace(id, std::move(t)).second)
      throw FormatError("duplicate table id '" + id + "'", lineno);
  });
  return tables;
}

// Checks an example against copyability and, when a schema is available,
// tree validity and numeric literals on float columns.
inline std::optional<Reject> CheckExample(const Example& ex, const TableSchema* schema) {
  for (const auto& c : ex.gold.conditions)
    if (!FindSpan(ex.question, c.value))
      return Reject{0, RejectReason::kNotCopyable,
                    "value '" + JoinWords(c.value) + "' is not a span of the question"};
  if (!schema) return std::nullopt;
  try {
    ValidateTree(ex.gold, *schema);
  } catch (const InvalidTree& e) {
    return Reject{0, RejectReason::kInvalidTree, e.what()};
  }
  for (const auto& c : ex.gold.conditions)
    if (schema->column_types[c.column] == ColumnType::kFloat && !ParseNumber(JoinWords(c.value)))
      return Reject{0, RejectReason::kNonNumericValue, "value '" + JoinWords(c.value) + "'"};
  return std::nullopt;
}

// Loads examples; lines that fail the checks go to rejects with a reason.
// Pass tables to also validate against the referenced schemas.
inline Dataset LoadDataset(const std::string& path, const TableMap* tables = nullptr) {
  Dataset ds;
  detail::ForEachJsonLine(path, [&](const nlohmann::json& j, std::size_t lineno) {
    Example ex;
    try {
      ex.question = Tokenize(j.at("question").get<std::string>());
      ex.table_id = j.at("table_id").get<std::string>();
      const auto& sql = j.at("sql");
      ex.gold.select_col = sql.at("sel").get<int>();
      ex.gold.select_agg = sql.at("agg").get<int>();
      for (const auto& cond : sql.at("conds")) {
        if (!cond.is_array() || cond.size() != 3) throw FormatError("condition must be [col, op, value]", lineno);
        Condition c;
        c.column = cond[0].get<int>();
        c.op = cond[1].get<int>();
        c.value = Tokenize(detail::JsonScalarText(cond[2]));
        ex.gold.conditions.push_back(std::move(c));
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(e.what(), lineno);
    } catch (const TypeError& e) {
      throw FormatError(e.what(), lineno);
    }
    const TableSchema* schema = nullptr;
    if (tables) {
      auto it = tables->find(ex.table_id);
      if (it == tables->end()) {
        ds.rejects.push_back({lineno, RejectReason::kUnknownTable, ex.table_id});
        return;
      }
      schema = &it->second.schema;
    }
    if (auto rej = CheckExample(ex, schema)) {
      rej->line = lineno;
      ds.rejects.push_back(std::move(*rej));
      return;
    }
    ds.examples.push_back(std::move(ex));
  });
  return ds;
}

inline nlohmann::json TableToJson(const Table& t) {
  nlohmann::json j;
  j["id"] = t.schema.table_id;
  j["header"] = nlohmann::json::array();
  j["types"] = nlohmann::json::array();
  for (std::size_t c = 0; c < t.schema.num_columns(); ++c) {
    j["header"].push_back(JoinWords(t.schema.column_names[c]));
    j["types"].push_back(t.schema.column_types[c] == ColumnType::kText ? "text" : "real");
  }
  j["rows"] = nlohmann::json::array();
  for (const auto& row : t.rows) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& cell : row) {
      if (const auto* s = std::get_if<std::string>(&cell)) r.push_back(*s);
      else r.push_back(std::get<double>(cell));
    }
    j["rows"].push_back(std::move(r));
  }
  return j;
}

inline nlohmann::json ExampleToJson(const Example& ex) {
  nlohmann::json j;
  j["question"] = JoinWords(ex.question);
  j["table_id"] = ex.table_id;
  nlohmann::json conds = nlohmann::json::array();
  for (const auto& c : ex.gold.conditions) conds.push_back({c.column, c.op, JoinWords(c.value)});
  j["sql"] = {{"sel", ex.gold.select_col}, {"agg", ex.gold.select_agg}, {"conds", conds}};
  return j;
}

struct ResultSet {
  enum class Kind { kRows, kScalar, kEmpty };
  Kind kind = Kind::kRows;
  std::vector<Cell> rows;  // kRows: projected cells, as a multiset
  double scalar = 0.0;     // kScalar
};

namespace detail {

struct CompiledCondition {
  int column;
  int op;
  ColumnType type;
  std::string text;
  double number = 0.0;
};

inline bool Holds(const CompiledCondition& c, const Cell& cell) {
  if (c.type == ColumnType::kText) {
    const auto* s = std::get_if<std::string>(&cell);
    return s && NormalizeText(*s) == c.text;
  }
  const double v = std::get<double>(cell);
  switch (c.op) {
    case kOpEq: return v == c.number;
    case kOpGt: return v > c.number;
    case kOpLt: return v < c.number;
  }
  return false;
}

}  // namespace detail

// Filters rows by all conditions, projects the select column and applies
// the aggregator. Throws ValueParseError for a non-numeric literal on a
// float column.
inline ResultSet Execute(const QueryTree& tree, const Table& table) {
  ValidateTree(tree, table.schema);
  std::vector<detail::CompiledCondition> conds;
  for (const auto& c : tree.conditions) {
    detail::CompiledCondition cc{c.column, c.op, table.schema.column_types[c.column], {}, 0.0};
    const std::string joined = JoinWords(c.value);
    if (cc.type == ColumnType::kText) {
      cc.text = NormalizeText(joined);
    } else {
      auto v = ParseNumber(joined);
      if (!v) throw ValueParseError("'" + joined + "' is not numeric");
      cc.number = *v;
    }
    conds.push_back(std::move(cc));
  }
  std::vector<const Cell*> selected;
  for (const auto& row : table.rows) {
    bool ok = true;
    for (const auto& c : conds)
      if (!detail::Holds(c, row[c.column])) {
        ok = false;
        break;
      }
    if (ok) selected.push_back(&row[tree.select_col]);
  }
  ResultSet rs;
  if (tree.select_agg == kAggNone) {
    for (const Cell* c : selected) rs.rows.push_back(*c);
    return rs;
  }
  if (tree.select_agg == kAggCount) {
    rs.kind = ResultSet::Kind::kScalar;
    rs.scalar = static_cast<double>(selected.size());
    return rs;
  }
  if (selected.empty()) {
    rs.kind = ResultSet::Kind::kEmpty;
    return rs;
  }
  rs.kind = ResultSet::Kind::kScalar;
  double acc = std::get<double>(*selected.front());
  if (tree.select_agg == kAggSum || tree.select_agg == kAggAvg) acc = 0.0;
  for (const Cell* c : selected) {
    const double v = std::get<double>(*c);
    switch (tree.select_agg) {
      case kAggMax: acc = std::max(acc, v); break;
      case kAggMin: acc = std::min(acc, v); break;
      default: acc += v; break;
    }
  }
  if (tree.select_agg == kAggAvg) acc /= static_cast<double>(selected.size());
  rs.scalar = acc;
  return rs;
}

inline bool ScalarClose(double a, double b, double rel_tol = 1e-6) {
  if (a == b) return true;
  return std::fabs(a - b) <= rel_tol * std::max(std::fabs(a), std::fabs(b));
}

// Multiset equality for row results, relative-tolerance equality for scalars.
inline bool ResultEqual(const ResultSet& a, const ResultSet& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case ResultSet::Kind::kEmpty: return true;
    case ResultSet::Kind::kScalar: return ScalarClose(a.scalar, b.scalar);
    case ResultSet::Kind::kRows: break;
  }
  if (a.rows.size() != b.rows.size()) return false;
  auto key = [](const Cell& c) -> std::pair<int, std::variant<std::string, double>> {
    if (const auto* s = std::get_if<std::string>(&c)) return {0, NormalizeText(*s)};
    return {1, std::get<double>(c)};
  };
  std::vector<std::pair<int, std::variant<std::string, double>>> ka, kb;
  for (const auto& c : a.rows) ka.push_back(key(c));
  for (const auto& c : b.rows) kb.push_back(key(c));
  std::sort(ka.begin(), ka.end());
  std::sort(kb.begin(), kb.end());
  return ka == kb;
}

}  // namespace ptrsql
