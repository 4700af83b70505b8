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

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace ptrsql {

// Lowercases, splits on whitespace and punctuation, and keeps numeric
// literals ("800", "1.0", "-3.5") as single tokens. A number glued to a unit
// ("800mhz") splits into "800" and "mhz"; punctuation is dropped.
inline std::vector<std::string> Tokenize(std::string_view text) {
  std::vector<std::string> out;
  const std::size_t n = text.size();
  auto is_digit = [&](std::size_t i) {
    return i < n && std::isdigit(static_cast<unsigned char>(text[i]));
  };
  auto is_alpha = [&](std::size_t i) {
    if (i >= n) return false;
    unsigned char c = static_cast<unsigned char>(text[i]);
    // Bytes >= 0x80 belong to UTF-8 sequences; keep them inside words.
    return std::isalpha(c) || c >= 0x80;
  };
  std::size_t i = 0;
  while (i < n) {
    if (is_digit(i) ||
        (text[i] == '-' && is_digit(i + 1) &&
         (i == 0 || std::isspace(static_cast<unsigned char>(text[i - 1]))))) {
      std::size_t j = i + 1;
      while (is_digit(j)) ++j;
      if (j + 1 < n && text[j] == '.' && is_digit(j + 1)) {
        j += 1;
        while (is_digit(j)) ++j;
      }
      std::string tok(text.substr(i, j - i));
      for (auto& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      out.push_back(std::move(tok));
      i = j;
    } else if (is_alpha(i)) {
      std::size_t j = i;
      while (is_alpha(j) || is_digit(j)) ++j;
      std::string tok(text.substr(i, j - i));
      for (auto& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      out.push_back(std::move(tok));
      i = j;
    } else {
      ++i;
    }
  }
  return out;
}

inline std::string JoinWords(const std::vector<std::string>& words,
                             std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += sep;
    out += words[i];
  }
  return out;
}

}  // namespace ptrsql
