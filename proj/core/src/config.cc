/*
 * Copyright 2026 The xmodal Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "xmodal/config.h"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace xmodal {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string ReadText(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json ParseJson(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("malformed JSON config: ") + e.what());
  }
}

fs::path Resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

template <typename T>
void Read(const json& j, const char* key, T& into) {
  if (j.contains(key)) {
    try {
      into = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw Error(std::string("config field '") + key + "': " + e.what());
    }
  }
}

DataSource ParseData(const json& j, const fs::path& base) {
  DataSource data;
  if (j.contains("synthetic")) {
    const json& s = j.at("synthetic");
    SyntheticSpec spec;
    uint64_t seed = 0;
    Read(s, "classes", spec.classes);
    Read(s, "pairs_per_class", spec.pairs_per_class);
    Read(s, "dim", spec.dim);
    Read(s, "noise_sigma", spec.noise_sigma);
    Read(s, "seed", seed);
    Read(s, "test_pairs_per_class", data.test_pairs_per_class);
    spec.rotation_seed = seed;
    spec.sample_seed = seed;
    data.synthetic = spec;
    return data;
  }
  if (!j.contains("train") || !j.contains("test")) {
    throw Error("data needs either 'synthetic' or both 'train' and 'test'");
  }
  try {
    data.train_images = Resolve(base, j.at("train").at("images").get<std::string>());
    data.train_texts = Resolve(base, j.at("train").at("texts").get<std::string>());
    data.test_images = Resolve(base, j.at("test").at("images").get<std::string>());
    data.test_texts = Resolve(base, j.at("test").at("texts").get<std::string>());
  } catch (const json::exception& e) {
    throw Error(std::string("data manifests: ") + e.what());
  }
  return data;
}

json DataToJson(const DataSource& data) {
  if (data.synthetic) {
    const SyntheticSpec& s = *data.synthetic;
    return {{"synthetic",
             {{"classes", s.classes},
              {"pairs_per_class", s.pairs_per_class},
              {"test_pairs_per_class", data.test_pairs_per_class},
              {"dim", s.dim},
              {"noise_sigma", s.noise_sigma},
              {"seed", s.rotation_seed}}}};
  }
  return {{"train", {{"images", data.train_images.string()}, {"texts", data.train_texts.string()}}},
          {"test", {{"images", data.test_images.string()}, {"texts", data.test_texts.string()}}}};
}

void ParseModel(const json& j, ModelConfig& model, bool& in_dim_from_data) {
  if (j.contains("in_dim")) in_dim_from_data = false;
  Read(j, "in_dim", model.in_dim);
  Read(j, "hidden_dim", model.hidden_dim);
  Read(j, "out_dim", model.out_dim);
  Read(j, "dropout_rate", model.dropout_rate);
}

json ModelToJson(const ModelConfig& m, bool in_dim_from_data) {
  json j = {{"hidden_dim", m.hidden_dim}, {"out_dim", m.out_dim}, {"dropout_rate", m.dropout_rate}};
  if (!in_dim_from_data) j["in_dim"] = m.in_dim;
  return j;
}

void ParseTraining(const json& j, TrainingConfig& t) {
  Read(j, "learning_rate", t.learning_rate);
  Read(j, "batch_size", t.batch_size);
  Read(j, "max_epochs", t.max_epochs);
  Read(j, "early_stop_patience", t.early_stop_patience);
  Read(j, "adam_beta1", t.adam_beta1);
  Read(j, "adam_beta2", t.adam_beta2);
  Read(j, "adam_epsilon", t.adam_epsilon);
  Read(j, "seed", t.seed);
  Read(j, "validation_fraction", t.validation_fraction);
  Read(j, "route_unpaired", t.route_unpaired);
}

json TrainingToJson(const TrainingConfig& t) {
  return {{"learning_rate", t.learning_rate},
          {"batch_size", t.batch_size},
          {"max_epochs", t.max_epochs},
          {"early_stop_patience", t.early_stop_patience},
          {"adam_beta1", t.adam_beta1},
          {"adam_beta2", t.adam_beta2},
          {"adam_epsilon", t.adam_epsilon},
          {"validation_fraction", t.validation_fraction},
          {"route_unpaired", t.route_unpaired}};
}

ObjectiveConfig ParseObjective(const json& j) {
  std::string loss = "PCL";
  Read(j, "loss", loss);
  ObjectiveConfig cfg = ObjectiveConfig::Parse(loss);
  Read(j, "margin", cfg.margin);
  Read(j, "lambda", cfg.lambda);
  Read(j, "gamma", cfg.gamma);
  return cfg;
}

json ObjectiveToJson(const ObjectiveConfig& o) {
  return {{"loss", o.Name()}, {"margin", o.margin}, {"lambda", o.lambda}, {"gamma", o.gamma}};
}

}  // namespace

LoadedData LoadData(const DataSource& source) {
  if (source.synthetic) {
    SyntheticSpec train_spec = *source.synthetic;
    train_spec.sample_seed = DeriveSeed(source.synthetic->sample_seed, 1);
    SyntheticSpec test_spec = *source.synthetic;
    test_spec.pairs_per_class = source.test_pairs_per_class;
    test_spec.sample_seed = DeriveSeed(source.synthetic->sample_seed, 2);
    return {GenerateSynthetic(train_spec), GenerateSynthetic(test_spec)};
  }
  return {MakeCompleteDataset(LoadFeatureBank(source.train_images),
                              LoadFeatureBank(source.train_texts)),
          MakeCompleteDataset(LoadFeatureBank(source.test_images),
                              LoadFeatureBank(source.test_texts))};
}

std::string_view StudyName(Study study) {
  switch (study) {
    case Study::kLossComparison: return "loss_comparison";
    case Study::kHybridGammaSweep: return "hybrid_gamma_sweep";
    case Study::kImbalance: return "imbalance";
    case Study::kDimensionSweep: return "dimension_sweep";
    case Study::kLambdaSweep: return "lambda_sweep";
  }
  return "?";
}

Study ParseStudy(std::string_view name) {
  for (Study s : {Study::kLossComparison, Study::kHybridGammaSweep, Study::kImbalance,
                  Study::kDimensionSweep, Study::kLambdaSweep}) {
    if (StudyName(s) == name) return s;
  }
  throw Error("unknown study: " + std::string(name));
}

void ExperimentSpec::Validate() const {
  training.Validate();
  objective.Validate();
  if (seeds.empty()) throw Error("experiment needs at least one seed");
  switch (study) {
    case Study::kLossComparison:
      if (losses.empty()) throw Error("loss_comparison needs a nonempty loss list");
      for (const std::string& l : losses) ObjectiveConfig::Parse(l);
      break;
    case Study::kHybridGammaSweep:
      if (class_wise.empty() || pair_wise.empty() || gammas.empty()) {
        throw Error("hybrid_gamma_sweep needs class-wise, pair-wise and gamma grids");
      }
      for (double g : gammas) {
        if (!(g >= 0.0)) throw Error("gamma values must be >= 0");
      }
      break;
    case Study::kImbalance:
      if (imbalance.empty()) throw Error("imbalance study needs a nonempty ratio grid");
      for (const ImbalanceSpec& s : imbalance) {
        if (s.image_keep_fraction <= 0.0 && s.text_keep_fraction <= 0.0) {
          throw Error("imbalance ratio keeps neither modality");
        }
      }
      break;
    case Study::kDimensionSweep:
      if (dims.empty()) throw Error("dimension_sweep needs a nonempty d grid");
      for (int d : dims) {
        if (d < 1) throw Error("dimension grid values must be >= 1");
      }
      break;
    case Study::kLambdaSweep:
      if (lambdas.empty()) throw Error("lambda_sweep needs a nonempty lambda grid");
      for (double l : lambdas) {
        if (!(l > 0.0)) throw Error("lambda grid values must be > 0");
      }
      break;
  }
}

void ApplyStudyDefaults(ExperimentSpec& spec) {
  switch (spec.study) {
    case Study::kLossComparison:
      if (spec.losses.empty()) spec.losses = {"LRL", "CEL", "PCL", "ML", "CL", "TL"};
      break;
    case Study::kHybridGammaSweep:
      if (spec.class_wise.empty()) spec.class_wise.assign(std::begin(kAllClassWise), std::end(kAllClassWise));
      if (spec.pair_wise.empty()) spec.pair_wise.assign(std::begin(kAllPairWise), std::end(kAllPairWise));
      if (spec.gammas.empty()) spec.gammas = {0.0, 0.01, 0.1, 1.0};
      break;
    case Study::kImbalance:
      if (spec.imbalance.empty()) {
        const std::pair<double, double> rows[] = {{1.0, 0.5}, {0.5, 1.0}, {1.0, 0.3},
                                                  {0.3, 1.0}, {1.0, 0.1}, {0.1, 1.0},
                                                  {1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}};
        for (const auto& [img, txt] : rows) spec.imbalance.push_back({img, txt, 0, false, false});
      }
      break;
    case Study::kDimensionSweep:
      if (spec.dims.empty()) spec.dims = {64, 128, 256, 512, 1024, 2048};
      break;
    case Study::kLambdaSweep:
      if (spec.lambdas.empty()) spec.lambdas = {0.01, 0.1, 1.0, 10.0};
      break;
  }
  for (ImbalanceSpec& s : spec.imbalance) {
    if (s.image_keep_fraction <= 0.0 || s.text_keep_fraction <= 0.0) s.allow_empty_modality = true;
  }
  if (spec.seeds.empty()) {
    const int n = spec.study == Study::kImbalance ? 5 : 3;
    for (int s = 0; s < n; ++s) spec.seeds.push_back(static_cast<uint64_t>(s));
  }
}

ExperimentSpec ParseExperimentSpec(std::string_view json_text, const fs::path& base_dir) {
  const json j = ParseJson(json_text);
  ExperimentSpec spec;
  try {
    spec.name = j.value("name", std::string("experiment"));
    spec.study = ParseStudy(j.at("study").get<std::string>());
  } catch (const json::exception& e) {
    throw Error(std::string("experiment spec: ") + e.what());
  }
  if (!j.contains("data")) throw Error("experiment spec needs a 'data' section");
  spec.data = ParseData(j.at("data"), base_dir);
  if (j.contains("model")) ParseModel(j.at("model"), spec.model, spec.model_in_dim_from_data);
  if (j.contains("training")) ParseTraining(j.at("training"), spec.training);
  spec.objective = ParseObjective(j.value("objective", json::object()));
  if (j.contains("grid")) {
    const json& g = j.at("grid");
    Read(g, "losses", spec.losses);
    Read(g, "gammas", spec.gammas);
    Read(g, "dims", spec.dims);
    Read(g, "lambdas", spec.lambdas);
    if (g.contains("class_wise")) {
      for (const auto& name : g.at("class_wise")) {
        const ObjectiveConfig o = ObjectiveConfig::Parse(name.get<std::string>());
        if (!o.class_wise || o.pair_wise) throw Error("class_wise grid entry is not class-wise");
        spec.class_wise.push_back(*o.class_wise);
      }
    }
    if (g.contains("pair_wise")) {
      for (const auto& name : g.at("pair_wise")) {
        const ObjectiveConfig o = ObjectiveConfig::Parse(name.get<std::string>());
        if (!o.pair_wise || o.class_wise) throw Error("pair_wise grid entry is not pair-wise");
        spec.pair_wise.push_back(*o.pair_wise);
      }
    }
    if (g.contains("imbalance")) {
      bool stratified = false;
      Read(j, "stratified_imbalance", stratified);
      for (const auto& row : g.at("imbalance")) {
        if (!row.is_array() || row.size() != 2) {
          throw Error("imbalance grid rows are [image_fraction, text_fraction]");
        }
        spec.imbalance.push_back({row[0].get<double>(), row[1].get<double>(), 0, stratified, false});
      }
    }
  }
  Read(j, "seeds", spec.seeds);
  Read(j, "check_hybrid_identity", spec.check_hybrid_identity);
  Read(j, "diagnostics", spec.diagnostics);
  ApplyStudyDefaults(spec);
  spec.Validate();
  return spec;
}

ExperimentSpec LoadExperimentSpec(const fs::path& path) {
  return ParseExperimentSpec(ReadText(path), path.parent_path());
}

TrainJob ParseTrainJob(std::string_view json_text, const fs::path& base_dir) {
  const json j = ParseJson(json_text);
  TrainJob job;
  if (!j.contains("data")) throw Error("train config needs a 'data' section");
  job.data = ParseData(j.at("data"), base_dir);
  if (j.contains("model")) ParseModel(j.at("model"), job.model, job.model_in_dim_from_data);
  if (j.contains("training")) ParseTraining(j.at("training"), job.training);
  job.objective = ParseObjective(j.value("objective", json::object()));
  uint64_t seed = job.training.seed;
  Read(j, "seed", seed);
  job.training.seed = seed;
  job.model.init_seed = seed;
  std::string out = "xmodal_run";
  Read(j, "out", out);
  job.out_dir = Resolve(base_dir, out);
  job.training.Validate();
  job.objective.Validate();
  return job;
}

TrainJob LoadTrainJob(const fs::path& path) {
  return ParseTrainJob(ReadText(path), path.parent_path());
}

std::string CanonicalSpecJson(const ExperimentSpec& spec) {
  json j;
  j["name"] = spec.name;
  j["study"] = std::string(StudyName(spec.study));
  j["data"] = DataToJson(spec.data);
  j["model"] = ModelToJson(spec.model, spec.model_in_dim_from_data);
  j["training"] = TrainingToJson(spec.training);
  j["objective"] = ObjectiveToJson(spec.objective);
  json grid;
  grid["losses"] = spec.losses;
  grid["gammas"] = spec.gammas;
  grid["dims"] = spec.dims;
  grid["lambdas"] = spec.lambdas;
  grid["class_wise"] = json::array();
  for (ClassWiseKind k : spec.class_wise) grid["class_wise"].push_back(std::string(ShortName(k)));
  grid["pair_wise"] = json::array();
  for (PairWiseKind k : spec.pair_wise) grid["pair_wise"].push_back(std::string(ShortName(k)));
  grid["imbalance"] = json::array();
  bool stratified = false;
  for (const ImbalanceSpec& s : spec.imbalance) {
    grid["imbalance"].push_back({s.image_keep_fraction, s.text_keep_fraction});
    stratified = stratified || s.stratified;
  }
  j["grid"] = grid;
  j["stratified_imbalance"] = stratified;
  j["seeds"] = spec.seeds;
  j["check_hybrid_identity"] = spec.check_hybrid_identity;
  j["diagnostics"] = spec.diagnostics;
  return j.dump();
}

std::string ConfigHash(const ExperimentSpec& spec) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : CanonicalSpecJson(spec)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace xmodal
