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

// Experiment configuration as "key = value" text. Every model and
// training field has a key; the command line overrides file values.

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ptrsql/error.hpp"
#include "ptrsql/model.hpp"
#include "ptrsql/trainer.hpp"

namespace ptrsql {

struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  int min_count = 2;           // rarer words share the rare embedding
  std::string embeddings;      // optional pretrained vectors
  std::string init_checkpoint; // optional warm start

  void Validate() const {
    model.Validate();
    train.Validate();
    if (min_count < 1) throw ConfigError("min_count must be positive");
  }
};

namespace config_detail {

inline std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool ParseBool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

template <class N>
N ParseNum(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  N x{};
  in >> x;
  if (in.fail() || !in.eof()) throw ConfigError(key + ": cannot parse '" + v + "'");
  return x;
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class N>
std::string Num(N x) {
  std::ostringstream out;
  out.precision(17);
  out << x;
  return out.str();
}

inline const std::map<std::string, Field>& Fields() {
  static const std::map<std::string, Field> fields = [] {
    std::map<std::string, Field> f;
    auto int_field = [&](const std::string& k, auto member) {
      f[k] = {[k, member](ExperimentConfig& c, const std::string& v) { member(c) = ParseNum<int>(k, v); },
              [member](const ExperimentConfig& c) { return Num(member(const_cast<ExperimentConfig&>(c))); }};
    };
    auto real_field = [&](const std::string& k, auto member) {
      f[k] = {[k, member](ExperimentConfig& c, const std::string& v) { member(c) = ParseNum<double>(k, v); },
              [member](const ExperimentConfig& c) { return Num(member(const_cast<ExperimentConfig&>(c))); }};
    };
    auto bool_field = [&](const std::string& k, auto member) {
      f[k] = {[k, member](ExperimentConfig& c, const std::string& v) { member(c) = ParseBool(k, v); },
              [member](const ExperimentConfig& c) {
                return std::string(member(const_cast<ExperimentConfig&>(c)) ? "true" : "false");
              }};
    };
    auto string_field = [&](const std::string& k, auto member) {
      f[k] = {[member](ExperimentConfig& c, const std::string& v) { member(c) = v; },
              [member](const ExperimentConfig& c) { return member(const_cast<ExperimentConfig&>(c)); }};
    };
    int_field("d_emb", [](ExperimentConfig& c) -> int& { return c.model.d_emb; });
    int_field("d_dec", [](ExperimentConfig& c) -> int& { return c.model.d_dec; });
    int_field("encoder_layers", [](ExperimentConfig& c) -> int& { return c.model.encoder_layers; });
    int_field("decoder_layers", [](ExperimentConfig& c) -> int& { return c.model.decoder_layers; });
    real_field("input_dropout", [](ExperimentConfig& c) -> double& { return c.model.input_dropout; });
    real_field("recurrent_dropout", [](ExperimentConfig& c) -> double& { return c.model.recurrent_dropout; });
    real_field("label_smoothing_eps", [](ExperimentConfig& c) -> double& { return c.model.label_smoothing_eps; });
    bool_field("constraints_in_training",
               [](ExperimentConfig& c) -> bool& { return c.model.constraints_in_training; });
    bool_field("skip_connections", [](ExperimentConfig& c) -> bool& { return c.model.skip_connections; });
    bool_field("input_feeding", [](ExperimentConfig& c) -> bool& { return c.model.input_feeding; });
    real_field("init_scale", [](ExperimentConfig& c) -> double& { return c.model.init_scale; });
    int_field("batch_size", [](ExperimentConfig& c) -> int& { return c.train.batch_size; });
    int_field("max_epochs", [](ExperimentConfig& c) -> int& { return c.train.max_epochs; });
    real_field("learning_rate", [](ExperimentConfig& c) -> double& { return c.train.learning_rate; });
    int_field("patience", [](ExperimentConfig& c) -> int& { return c.train.patience; });
    bool_field("execution_reward", [](ExperimentConfig& c) -> bool& { return c.train.execution_reward; });
    bool_field("test_constraints", [](ExperimentConfig& c) -> bool& { return c.train.test_constraints; });
    int_field("min_count", [](ExperimentConfig& c) -> int& { return c.min_count; });
    string_field("embeddings", [](ExperimentConfig& c) -> std::string& { return c.embeddings; });
    string_field("init_checkpoint", [](ExperimentConfig& c) -> std::string& { return c.init_checkpoint; });
    f["seed"] = {[](ExperimentConfig& c, const std::string& v) { c.train.seed = ParseNum<std::uint64_t>("seed", v); },
                 [](const ExperimentConfig& c) { return Num(c.train.seed); }};
    f["copy_head"] = {[](ExperimentConfig& c, const std::string& v) {
                        if (v == "shared") c.model.copy_head = CopyHead::kSharedSoftmax;
                        else if (v == "porg") c.model.copy_head = CopyHead::kPointOrGenerate;
                        else throw ConfigError("copy_head: expected shared or porg, got '" + v + "'");
                      },
                      [](const ExperimentConfig& c) {
                        return std::string(c.model.copy_head == CopyHead::kSharedSoftmax ? "shared" : "porg");
                      }};
    f["regime"] = {[](ExperimentConfig& c, const std::string& v) {
                     if (v == "tf") c.train.regime = Regime::kTeacherForcing;
                     else if (v == "oracle") c.train.regime = Regime::kOracle;
                     else if (v == "rl") c.train.regime = Regime::kReinforce;
                     else throw ConfigError("regime: expected tf, oracle or rl, got '" + v + "'");
                   },
                   [](const ExperimentConfig& c) { return std::string(RegimeName(c.train.regime)); }};
    f["order"] = {[](ExperimentConfig& c, const std::string& v) {
                    if (v == "original") c.train.order = OrderPolicy::Original();
                    else if (v == "reversed") c.train.order = OrderPolicy::Reversed();
                    else if (v == "arbitrary") c.train.order = OrderPolicy::Arbitrary(0);
                    else throw ConfigError("order: expected original, reversed or arbitrary, got '" + v + "'");
                  },
                  [](const ExperimentConfig& c) {
                    switch (c.train.order.variant) {
                      case OrderPolicy::Variant::kOriginal: return std::string("original");
                      case OrderPolicy::Variant::kReversed: return std::string("reversed");
                      case OrderPolicy::Variant::kArbitraryPerTrial: return std::string("arbitrary");
                    }
                    return std::string("original");
                  }};
    return f;
  }();
  return fields;
}

}  // namespace config_detail

inline std::vector<std::string> ConfigKeys() {
  std::vector<std::string> keys;
  for (const auto& [k, f] : config_detail::Fields()) keys.push_back(k);
  return keys;
}

inline void SetConfigValue(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const auto& fields = config_detail::Fields();
  auto it = fields.find(key);
  if (it == fields.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(cfg, value);
}

inline std::string GetConfigValue(const ExperimentConfig& cfg, const std::string& key) {
  const auto& fields = config_detail::Fields();
  auto it = fields.find(key);
  if (it == fields.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second.get(cfg);
}

// Lines are "key = value"; blank lines and '#' comments are skipped.
inline void ParseConfigText(ExperimentConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = config_detail::Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("expected key = value", lineno);
    try {
      SetConfigValue(cfg, config_detail::Trim(line.substr(0, eq)), config_detail::Trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw FormatError(e.what(), lineno);
    }
  }
}

inline ExperimentConfig LoadConfigFile(const std::string& path, ExperimentConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  ParseConfigText(base, buf.str());
  return base;
}

inline std::string ConfigToText(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& key : ConfigKeys()) out += key + " = " + GetConfigValue(cfg, key) + "\n";
  return out;
}

}  // namespace ptrsql
