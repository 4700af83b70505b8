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

// Glue shared by the command-line tool and the experiment tests: corpus
// directories, model directories, and a one-call training run.

#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ptrsql/config.hpp"
#include "ptrsql/evaluator.hpp"
#include "ptrsql/model.hpp"
#include "ptrsql/params.hpp"
#include "ptrsql/table_store.hpp"
#include "ptrsql/trainer.hpp"
#include "ptrsql/vocab.hpp"

namespace ptrsql {

struct Corpus {
  TableMap tables;
  std::vector<Example> train;
  std::vector<Example> dev;
  std::vector<Example> test;
  std::vector<Reject> rejects;
};

// Reads tables.jsonl plus whichever of train/dev/test.jsonl exist.
inline Corpus LoadCorpus(const std::string& dir) {
  namespace fs = std::filesystem;
  Corpus c;
  c.tables = LoadTables(dir + "/tables.jsonl");
  const std::pair<const char*, std::vector<Example>*> splits[] = {
      {"train.jsonl", &c.train}, {"dev.jsonl", &c.dev}, {"test.jsonl", &c.test}};
  for (const auto& [name, dest] : splits) {
    const std::string path = dir + "/" + name;
    if (!fs::exists(path)) continue;
    Dataset ds = LoadDataset(path, &c.tables);
    *dest = std::move(ds.examples);
    c.rejects.insert(c.rejects.end(), ds.rejects.begin(), ds.rejects.end());
  }
  return c;
}

using Model = PtrGenModel<float>;

struct TrainedModel {
  std::unique_ptr<Model> model;
  TrainResult result;
};

inline std::unique_ptr<Model> NewModel(const ExperimentConfig& cfg, const Corpus& corpus) {
  Vocabulary vocab = Vocabulary::Build(corpus.train, corpus.tables, cfg.min_count);
  auto model = std::make_unique<Model>(cfg.model, std::move(vocab), cfg.train.seed);
  if (!cfg.embeddings.empty()) model->LoadPretrainedEmbeddings(cfg.embeddings);
  if (!cfg.init_checkpoint.empty()) tensor::LoadCheckpoint(cfg.init_checkpoint, model->params());
  return model;
}

inline TrainedModel TrainModel(const ExperimentConfig& cfg, const Corpus& corpus,
                               const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
  cfg.Validate();
  TrainedModel out;
  out.model = NewModel(cfg, corpus);
  out.result = Train(*out.model, corpus.train, corpus.dev, corpus.tables, cfg.train, {}, on_epoch);
  return out;
}

inline EvalReport EvaluateModel(const Model& model, const std::vector<Example>& examples, const TableMap& tables,
                                bool constrained = true, const OrderPolicy& policy = {}) {
  DecodeOptions opts;
  opts.constrained = constrained;
  return Evaluate(examples, PredictAll(model, examples, tables, opts), tables, policy);
}

// A model directory holds config.txt, vocab.txt and model.ckpt.
inline void SaveModelDir(const std::string& dir, const ExperimentConfig& cfg, const Model& model) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir + "/config.txt", std::ios::trunc);
  if (!out) throw IoError("cannot write " + dir + "/config.txt");
  out << ConfigToText(cfg);
  model.vocab().Save(dir + "/vocab.txt");
  tensor::SaveCheckpoint(dir + "/model.ckpt", model.params());
}

inline std::unique_ptr<Model> LoadModelDir(const std::string& dir, ExperimentConfig* cfg_out = nullptr) {
  ExperimentConfig cfg = LoadConfigFile(dir + "/config.txt");
  auto model = std::make_unique<Model>(cfg.model, Vocabulary::Load(dir + "/vocab.txt"), cfg.train.seed);
  tensor::LoadCheckpoint(dir + "/model.ckpt", model->params());
  if (cfg_out) *cfg_out = cfg;
  return model;
}

}  // namespace ptrsql
