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
// Command-line driver: gen-data, train, eval, predict, repro-order.
// Exit status 2 marks usage errors and 1 runtime failures.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ptrsql/config.hpp"
#include "ptrsql/evaluator.hpp"
#include "ptrsql/pipeline.hpp"
#include "ptrsql/synth.hpp"

namespace {

using namespace ptrsql;

struct UsageError : Error {
  using Error::Error;
};

// One flag per config key, spelled with dashes, plus --config.
struct ExperimentFlags {
  std::string config_path;
  bool no_constraints = false;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void Register(CLI::App* app) {
    app->add_option("--config", config_path, "key = value experiment file")->check(CLI::ExistingFile);
    for (const auto& key : ConfigKeys()) {
      std::string flag = "--" + key;
      for (auto& ch : flag)
        if (ch == '_') ch = '-';
      const std::string current = GetConfigValue(ExperimentConfig{}, key);
      if (current == "true" || current == "false")
        options[key] = app->add_flag(flag + "{true}", values[key], "config key " + key);
      else
        options[key] = app->add_option(flag, values[key], "config key " + key);
    }
    app->add_flag("--no-constraints", no_constraints, "decode without grammar constraints");
  }

  ExperimentConfig Build() const {
    ExperimentConfig cfg;
    try {
      if (!config_path.empty()) cfg = LoadConfigFile(config_path);
      for (const auto& [key, opt] : options)
        if (opt->count() > 0) SetConfigValue(cfg, key, values.at(key));
      if (no_constraints) cfg.train.test_constraints = false;
      cfg.Validate();
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    } catch (const FormatError& e) {
      throw UsageError(std::string(config_path) + ": " + e.what());
    }
    return cfg;
  }
};

OrderPolicy ParseOrder(const std::string& s) {
  if (s == "original") return OrderPolicy::Original();
  if (s == "reversed") return OrderPolicy::Reversed();
  throw UsageError("order for Acc_LF must be original or reversed");
}

void WriteText(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

void PrintEpoch(const EpochMetrics& m) {
  std::printf("epoch %3d  loss %.4f  dev lf %.3f  qm %.3f  ex %.3f\n", m.epoch, m.train_loss, m.acc_lf, m.acc_qm,
              m.acc_ex);
  std::fflush(stdout);
}

nlohmann::json TreeJson(const QueryTree& t) {
  nlohmann::json conds = nlohmann::json::array();
  for (const auto& c : t.conditions) conds.push_back({c.column, c.op, JoinWords(c.value)});
  return {{"sel", t.select_col}, {"agg", t.select_agg}, {"conds", conds}};
}

// ---------------------------------------------------------------------------

int GenData(const SynthConfig& cfg, const std::string& out) {
  std::filesystem::create_directories(out);
  const SynthData data = GenerateSynthetic(cfg);
  WriteSynthetic(data, out);
  std::printf("wrote %zu tables, %zu/%zu/%zu examples to %s\n", data.tables.size(), data.train.size(),
              data.dev.size(), data.test.size(), out.c_str());
  return 0;
}

int TrainCmd(const ExperimentFlags& flags, const std::string& data_dir, const std::string& out) {
  ExperimentConfig cfg = flags.Build();
  std::filesystem::create_directories(out);
  if (cfg.train.metrics_path.empty()) cfg.train.metrics_path = out + "/metrics.jsonl";
  const Corpus corpus = LoadCorpus(data_dir);
  if (!corpus.rejects.empty()) std::fprintf(stderr, "skipped %zu unusable examples\n", corpus.rejects.size());
  TrainedModel trained = TrainModel(cfg, corpus, PrintEpoch);
  cfg.train.metrics_path.clear();
  SaveModelDir(out, cfg, *trained.model);
  const EvalReport dev = EvaluateModel(*trained.model, corpus.dev, corpus.tables, cfg.train.test_constraints);
  WriteText(out + "/dev_report.json", dev.ToJson().dump(2) + "\n");
  std::printf("best epoch %d\n%s", trained.result.best_epoch, dev.ToText().c_str());
  return 0;
}

std::vector<Prediction> ReadPredictions(const std::string& path, const std::vector<Example>& examples,
                                        const TableMap& tables) {
  std::vector<Prediction> preds;
  detail::ForEachJsonLine(path, [&](const nlohmann::json& j, std::size_t line) {
    if (preds.size() >= examples.size()) throw FormatError("more predictions than examples", line);
    const TableSchema& schema = TableFor(tables, examples[preds.size()].table_id).schema;
    Prediction p;
    if (j.contains("query") && j["query"].is_string()) {
      try {
        p = Prediction::FromTokens(ParseLinear(j["query"].get<std::string>(), schema), schema);
      } catch (const ParseError&) {
      }
    } else if (j.contains("sql") && j["sql"].is_object()) {
      QueryTree t;
      t.select_col = j["sql"].at("sel").get<int>();
      t.select_agg = j["sql"].at("agg").get<int>();
      for (const auto& c : j["sql"].at("conds"))
        t.conditions.push_back({c.at(0).get<int>(), c.at(1).get<int>(), Tokenize(detail::JsonScalarText(c.at(2)))});
      try {
        p = Prediction::FromTree(t, schema);
      } catch (const InvalidTree&) {
      }
    }
    preds.push_back(std::move(p));
  });
  if (preds.size() != examples.size()) throw FormatError("fewer predictions than examples", preds.size());
  return preds;
}

int EvalCmd(const std::string& model_dir, const std::string& predictions, const std::string& data,
            const std::string& tables_path, const std::string& order, bool no_constraints, const std::string& json_out) {
  const TableMap tables = LoadTables(tables_path);
  const Dataset ds = LoadDataset(data, &tables);
  if (!ds.rejects.empty()) std::fprintf(stderr, "skipped %zu unusable examples\n", ds.rejects.size());
  std::vector<Prediction> preds;
  if (!predictions.empty()) {
    preds = ReadPredictions(predictions, ds.examples, tables);
  } else {
    auto model = LoadModelDir(model_dir);
    DecodeOptions opts;
    opts.constrained = !no_constraints;
    preds = PredictAll(*model, ds.examples, tables, opts);
  }
  const EvalReport report = Evaluate(ds.examples, preds, tables, ParseOrder(order));
  std::printf("%s", report.ToText().c_str());
  if (!json_out.empty()) WriteText(json_out, report.ToJson().dump(2) + "\n");
  return 0;
}

int PredictCmd(const std::string& model_dir, const std::string& tables_path, const std::string& input,
               const std::string& out_path, bool no_constraints) {
  const TableMap tables = LoadTables(tables_path);
  auto model = LoadModelDir(model_dir);
  DecodeOptions opts;
  opts.constrained = !no_constraints;
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path, std::ios::trunc);
    if (!file) throw IoError("cannot write " + out_path);
  }
  std::ostream& out = out_path.empty() ? std::cout : file;
  detail::ForEachJsonLine(input, [&](const nlohmann::json& j, std::size_t line) {
    if (!j.contains("question") || !j.contains("table_id")) throw FormatError("need question and table_id", line);
    const std::string table_id = j["table_id"].get<std::string>();
    const Table& table = TableFor(tables, table_id);
    const auto question = Tokenize(j["question"].get<std::string>());
    nlohmann::json o = {{"question", j["question"]}, {"table_id", table_id}};
    if (question.empty()) {
      o["query"] = nullptr;
      o["sql"] = nullptr;
    } else {
      const Decoded d = GreedyDecode(*model, table.schema, question, opts);
      o["query"] = d.finished ? nlohmann::json(ToString(d.tokens, &table.schema)) : nlohmann::json(nullptr);
      o["sql"] = d.tree ? TreeJson(*d.tree) : nlohmann::json(nullptr);
    }
    out << o.dump() << '\n';
  });
  return 0;
}

int ReproOrder(const ExperimentFlags& flags, const std::string& data_dir, int seeds, const std::string& out) {
  const ExperimentConfig base = flags.Build();
  const Corpus corpus = LoadCorpus(data_dir);
  struct Row {
    const char* name;
    Regime regime;
    OrderPolicy order;
  };
  const Row rows[] = {{"original", Regime::kTeacherForcing, OrderPolicy::Original()},
                      {"reversed", Regime::kTeacherForcing, OrderPolicy::Reversed()},
                      {"arbitrary", Regime::kTeacherForcing, OrderPolicy::Arbitrary(0)},
                      {"oracle", Regime::kOracle, OrderPolicy::Original()},
                      {"reinforce", Regime::kReinforce, OrderPolicy::Original()}};
  nlohmann::json results = nlohmann::json::array();
  std::printf("%-10s %8s %8s %8s %8s\n", "regime", "dev_lf", "dev_qm", "test_lf", "test_qm");
  for (const Row& row : rows) {
    double sums[4] = {0, 0, 0, 0};
    for (int s = 0; s < seeds; ++s) {
      ExperimentConfig cfg = base;
      cfg.train.regime = row.regime;
      cfg.train.order = row.order;
      cfg.train.seed = base.train.seed + s;
      cfg.train.metrics_path.clear();
      TrainedModel trained = TrainModel(cfg, corpus);
      const EvalReport dev = EvaluateModel(*trained.model, corpus.dev, corpus.tables, cfg.train.test_constraints);
      const EvalReport test = corpus.test.empty()
                                  ? EvalReport{}
                                  : EvaluateModel(*trained.model, corpus.test, corpus.tables,
                                                  cfg.train.test_constraints);
      sums[0] += dev.acc_lf;
      sums[1] += dev.acc_qm;
      sums[2] += test.acc_lf;
      sums[3] += test.acc_qm;
      results.push_back({{"regime", row.name}, {"seed", cfg.train.seed}, {"dev", dev.ToJson()},
                         {"test", test.ToJson()}, {"best_epoch", trained.result.best_epoch}});
    }
    std::printf("%-10s %8.1f %8.1f %8.1f %8.1f\n", row.name, 100 * sums[0] / seeds, 100 * sums[1] / seeds,
                100 * sums[2] / seeds, 100 * sums[3] / seeds);
    std::fflush(stdout);
  }
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    WriteText(out + "/repro_order.json", results.dump(2) + "\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pointer-generator NL-to-SQL parser"};
  app.require_subcommand(1, 1);

  SynthConfig synth;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-data", "write a seeded synthetic corpus");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--n-train", synth.n_train)->capture_default_str();
  gen->add_option("--n-dev", synth.n_dev)->capture_default_str();
  gen->add_option("--n-test", synth.n_test)->capture_default_str();
  gen->add_option("--n-tables", synth.n_tables)->capture_default_str();
  gen->add_option("--vocab-size", synth.vocab_size)->capture_default_str();
  gen->add_option("--max-conditions", synth.max_conditions)->capture_default_str();
  gen->add_option("--seed", synth.seed)->capture_default_str();

  ExperimentFlags train_flags;
  std::string train_data, train_out;
  auto* train = app.add_subcommand("train", "train a model on a corpus directory");
  train->add_option("--data", train_data, "directory with tables/train/dev .jsonl")->required()->check(
      CLI::ExistingDirectory);
  train->add_option("--out", train_out, "model output directory")->required();
  train_flags.Register(train);

  std::string eval_model, eval_preds, eval_data, eval_tables, eval_order = "original", eval_json;
  bool eval_nc = false;
  auto* eval = app.add_subcommand("eval", "score a model or a prediction file");
  auto* eval_model_opt = eval->add_option("--model", eval_model, "model directory");
  auto* eval_pred_opt = eval->add_option("--predictions", eval_preds, "JSON lines with query or sql per example");
  eval_model_opt->excludes(eval_pred_opt);
  eval->add_option("--data", eval_data, "examples .jsonl")->required()->check(CLI::ExistingFile);
  eval->add_option("--tables", eval_tables, "tables .jsonl")->required()->check(CLI::ExistingFile);
  eval->add_option("--order", eval_order, "reference order for Acc_LF")->check(
      CLI::IsMember({"original", "reversed"}));
  eval->add_flag("--no-constraints", eval_nc, "decode without grammar constraints");
  eval->add_option("--json", eval_json, "also write the report as JSON");

  std::string pred_model, pred_tables, pred_input, pred_out;
  bool pred_nc = false;
  auto* predict = app.add_subcommand("predict", "decode questions to queries");
  predict->add_option("--model", pred_model, "model directory")->required();
  predict->add_option("--tables", pred_tables, "tables .jsonl")->required()->check(CLI::ExistingFile);
  predict->add_option("--input", pred_input, "JSON lines with question and table_id")->required()->check(
      CLI::ExistingFile);
  predict->add_option("--out", pred_out, "output file (default stdout)");
  predict->add_flag("--no-constraints", pred_nc, "decode without grammar constraints");

  ExperimentFlags repro_flags;
  std::string repro_data, repro_out;
  int repro_seeds = 3;
  auto* repro = app.add_subcommand("repro-order", "compare training regimes and linearization orders");
  repro->add_option("--data", repro_data, "corpus directory")->required()->check(CLI::ExistingDirectory);
  repro->add_option("--out", repro_out, "directory for repro_order.json");
  repro->add_option("--seeds", repro_seeds, "runs per regime")->check(CLI::PositiveNumber)->capture_default_str();
  repro_flags.Register(repro);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) return GenData(synth, gen_out);
    if (*train) return TrainCmd(train_flags, train_data, train_out);
    if (*eval) {
      if (eval_model.empty() == eval_preds.empty()) throw UsageError("eval needs exactly one of --model, --predictions");
      return EvalCmd(eval_model, eval_preds, eval_data, eval_tables, eval_order, eval_nc, eval_json);
    }
    if (*predict) return PredictCmd(pred_model, pred_tables, pred_input, pred_out, pred_nc);
    if (*repro) return ReproOrder(repro_flags, repro_data, repro_seeds, repro_out);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
