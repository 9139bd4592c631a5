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

#ifndef XMODAL_TRAINING_H_
#define XMODAL_TRAINING_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xmodal/dataio.h"
#include "xmodal/evaluation.h"
#include "xmodal/numeric.h"
#include "xmodal/objectives.h"
#include "xmodal/projection.h"

namespace xmodal {

struct TrainingConfig {
  double learning_rate = 1e-4;
  int batch_size = 300;
  int max_epochs = 200;
  int early_stop_patience = 20;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  uint64_t seed = 0;
  // Stratified holdout used by the single-dataset Train overload.
  double validation_fraction = 0.1;
  // Feed unpaired samples to the class-wise term. Pair-wise terms only ever
  // see complete pairs.
  bool route_unpaired = true;

  void Validate() const;
};

struct ParamSlot {
  std::string name;
  Matrix* value = nullptr;
  const Matrix* grad = nullptr;
};

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  int64_t step = 0;
};

// Bias-corrected Adam. Moments are allocated on the first call; later calls
// must pass slots of the same shapes in the same order. Throws, naming the
// parameter, on a non-finite gradient.
void AdamStep(std::span<const ParamSlot> params, AdamState& state, const AdamOptions& options);

struct TrainedModel {
  ProjectionHead image_head;
  ProjectionHead text_head;
  std::optional<ClassProxyParams> proxies;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_map_i2t = 0.0;
  double val_map_t2i = 0.0;
  double val_map_avg = 0.0;
  int steps = 0;
  int warnings = 0;
  double wall_seconds = 0.0;
};

struct TrainRecord {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_map_avg = 0.0;
  std::string stop_reason;
};

struct TrainResult {
  TrainedModel best;
  TrainedModel last;
  TrainRecord record;
};

// The returned `best` model is the argmax of validation average mAP over the
// executed epochs (first epoch wins ties).
TrainResult Train(const PairedDataset& train, const PairedDataset& validation,
                  const ModelConfig& model, const ObjectiveConfig& objective,
                  const TrainingConfig& training);

// Splits `dataset` with training.validation_fraction first.
TrainResult Train(const PairedDataset& dataset, const ModelConfig& model,
                  const ObjectiveConfig& objective, const TrainingConfig& training);

// Eval-mode embeddings of every test image and text, then full retrieval.
RetrievalReport EvaluateCheckpoint(const TrainedModel& model, const PairedDataset& test);

// <dir>/image_head.bin, text_head.bin and (if present) proxies.bin.
void SaveModel(const TrainedModel& model, const std::filesystem::path& dir);
TrainedModel LoadModel(const std::filesystem::path& dir);

// best/, last/ and train_record.json under `dir`.
void SaveTrainingRun(const TrainResult& result, const std::filesystem::path& dir);
std::string TrainRecordJson(const TrainRecord& record, bool include_wall_clock = true);

}  // namespace xmodal

#endif  // XMODAL_TRAINING_H_
