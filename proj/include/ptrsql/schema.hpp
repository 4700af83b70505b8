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

#include <cstddef>
#include <string>
#include <vector>

#include "ptrsql/tokenizer.hpp"

namespace ptrsql {

enum class ColumnType { kText, kFloat };

struct TableSchema {
  std::string table_id;
  // Each column name is a sequence of (tokenized) words.
  std::vector<std::vector<std::string>> column_names;
  std::vector<ColumnType> column_types;

  std::size_t num_columns() const { return column_types.size(); }

  // Display form of a column id token, e.g. "fsb_speed".
  std::string ColumnLabel(std::size_t col) const {
    return JoinWords(column_names.at(col), "_");
  }
};

}  // namespace ptrsql
