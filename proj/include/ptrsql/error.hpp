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
#include <stdexcept>
#include <string>
#include <vector>

namespace ptrsql {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define PTRSQL_DEFINE_ERROR(Name)          \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  }

PTRSQL_DEFINE_ERROR(InvalidTree);
PTRSQL_DEFINE_ERROR(IoError);
PTRSQL_DEFINE_ERROR(TypeError);
PTRSQL_DEFINE_ERROR(ValueParseError);
PTRSQL_DEFINE_ERROR(NotCopyable);
PTRSQL_DEFINE_ERROR(IllegalToken);
PTRSQL_DEFINE_ERROR(ShapeError);
PTRSQL_DEFINE_ERROR(IndexError);
PTRSQL_DEFINE_ERROR(AllMasked);
PTRSQL_DEFINE_ERROR(EmptyInput);
PTRSQL_DEFINE_ERROR(LengthMismatch);
PTRSQL_DEFINE_ERROR(ConfigError);
PTRSQL_DEFINE_ERROR(MissingTable);

#undef PTRSQL_DEFINE_ERROR

// Malformed input file; line is 1-based, 0 when unknown.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t line)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Strict delinearization failure.
class ParseError : public Error {
 public:
  ParseError(std::size_t position, std::vector<std::string> expected,
             const std::string& detail = {})
      : Error(Describe(position, expected, detail)),
        position_(position),
        expected_(std::move(expected)) {}

  std::size_t position() const { return position_; }
  const std::vector<std::string>& expected() const { return expected_; }

 private:
  static std::string Describe(std::size_t position,
                              const std::vector<std::string>& expected,
                              const std::string& detail) {
    std::string msg = "parse error at position " + std::to_string(position);
    if (!expected.empty()) {
      msg += ": expected one of {";
      for (std::size_t i = 0; i < expected.size(); ++i) {
        if (i) msg += ", ";
        msg += expected[i];
      }
      msg += "}";
    }
    if (!detail.empty()) msg += " (" + detail + ")";
    return msg;
  }

  std::size_t position_;
  std::vector<std::string> expected_;
};

}  // namespace ptrsql
