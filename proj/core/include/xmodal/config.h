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

#ifndef XMODAL_CONFIG_H_
#define XMODAL_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xmodal/dataio.h"
#include "xmodal/objectives.h"
#include "xmodal/projection.h"
#include "xmodal/training.h"

namespace xmodal {

// Where train/test data comes from: a synthetic generator or four manifests.
struct DataSource {
  std::optional<SyntheticSpec> synthetic;  // pairs_per_class is the train size
  int test_pairs_per_class = 50;
  std::filesystem::path train_images;
  std::filesystem::path train_texts;
  std::filesystem::path test_images;
  std::filesystem::path test_texts;
};

struct LoadedData {
  PairedDataset train;
  PairedDataset test;
};

// Synthetic train and test sets share class geometry and differ in noise.
LoadedData LoadData(const DataSource& source);

// Configuration of `xmodal train`.
struct TrainJob {
  DataSource data;
  ModelConfig model;
  ObjectiveConfig objective;
  TrainingConfig training;
  std::filesystem::path out_dir;
  bool model_in_dim_from_data = true;
};

enum class Study { kLossComparison, kHybridGammaSweep, kImbalance, kDimensionSweep, kLambdaSweep };

std::string_view StudyName(Study study);
Study ParseStudy(std::string_view name);

struct ExperimentSpec {
  std::string name;
  Study study = Study::kLossComparison;
  DataSource data;
  ModelConfig model;
  bool model_in_dim_from_data = true;
  TrainingConfig training;
  ObjectiveConfig objective;  // base objective (margin, lambda, gamma, default loss)

  std::vector<std::string> losses;           // loss_comparison
  std::vector<ClassWiseKind> class_wise;     // hybrid_gamma_sweep
  std::vector<PairWiseKind> pair_wise;       // hybrid_gamma_sweep
  std::vector<double> gammas;                // hybrid_gamma_sweep
  std::vector<ImbalanceSpec> imbalance;      // imbalance (seed field unused)
  std::vector<int> dims;                     // dimension_sweep
  std::vector<double> lambdas;               // lambda_sweep
  std::vector<uint64_t> seeds;

  // Also train pure class-wise runs and compare them with the gamma = 0 cells.
  bool check_hybrid_identity = false;
  // Emit distance histograms and heatmaps for the first seed of each cell.
  bool diagnostics = false;

  void Validate() const;
};

// Fills study-specific defaults for grids and seeds left empty.
void ApplyStudyDefaults(ExperimentSpec& spec);

// JSON parsing; relative data paths resolve against `base_dir`.
ExperimentSpec ParseExperimentSpec(std::string_view json_text,
                                   const std::filesystem::path& base_dir = {});
ExperimentSpec LoadExperimentSpec(const std::filesystem::path& path);
TrainJob ParseTrainJob(std::string_view json_text, const std::filesystem::path& base_dir = {});
TrainJob LoadTrainJob(const std::filesystem::path& path);

// Deterministic JSON rendering of a spec (sorted keys), used for hashing.
std::string CanonicalSpecJson(const ExperimentSpec& spec);
// FNV-1a 64 of CanonicalSpecJson, hex encoded.
std::string ConfigHash(const ExperimentSpec& spec);

}  // namespace xmodal

#endif  // XMODAL_CONFIG_H_
