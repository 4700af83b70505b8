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

#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "ptrsql/error.hpp"
#include "ptrsql/table_store.hpp"

namespace ptrsql {

// Encoder vocabulary V^E. Id 0 is the shared rare-word representation.
class Vocabulary {
 public:
  static constexpr int kRare = 0;
  static constexpr const char* kRareWord = "<rare>";

  Vocabulary() { Add(kRareWord); }

  // Words seen fewer than min_count times (and absent from keep) map to
  // the rare id. Question words and column-name words are both counted.
  static Vocabulary Build(const std::vector<Example>& examples, const TableMap& tables, int min_count = 2,
                          const std::set<std::string>& keep = {}) {
    std::map<std::string, int> counts;
    for (const auto& ex : examples)
      for (const auto& w : ex.question) ++counts[w];
    for (const auto& [id, t] : tables)
      for (const auto& name : t.schema.column_names)
        for (const auto& w : name) ++counts[w];
    Vocabulary v;
    for (const auto& [w, n] : counts)
      if (n >= min_count || keep.count(w)) v.Add(w);
    return v;
  }

  int Add(const std::string& w) {
    auto [it, inserted] = index_.emplace(w, static_cast<int>(words_.size()));
    if (inserted) words_.push_back(w);
    return it->second;
  }

  int Id(const std::string& w) const {
    auto it = index_.find(w);
    return it == index_.end() ? kRare : it->second;
  }

  std::vector<int> Ids(const std::vector<std::string>& words) const {
    std::vector<int> out;
    out.reserve(words.size());
    for (const auto& w : words) out.push_back(Id(w));
    return out;
  }

  bool Contains(const std::string& w) const { return index_.count(w) > 0; }
  int size() const { return static_cast<int>(words_.size()); }
  const std::string& Word(int id) const { return words_.at(id); }

  // One word per line; the line number is the id.
  void Save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    for (const auto& w : words_) out << w << '\n';
  }

  static Vocabulary Load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    Vocabulary v;
    v.words_.clear();
    v.index_.clear();
    std::string line;
    while (std::getline(in, line)) v.Add(line);
    if (v.words_.empty() || v.words_[0] != kRareWord) throw FormatError("vocabulary must start with <rare>", 1);
    return v;
  }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace ptrsql
