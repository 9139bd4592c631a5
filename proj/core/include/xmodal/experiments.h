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

#ifndef XMODAL_EXPERIMENTS_H_
#define XMODAL_EXPERIMENTS_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xmodal/config.h"
#include "xmodal/evaluation.h"

namespace xmodal {

// One grid point of a study: everything except the seed.
struct CellSpec {
  std::string label;
  std::vector<std::pair<std::string, std::string>> coords;
  ModelConfig model;
  ObjectiveConfig objective;
  TrainingConfig training;
  std::optional<ImbalanceSpec> imbalance;
  // Reference cells back the hybrid identity check and are reported apart.
  bool reference = false;
};

struct RunResult {
  uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double map_i2t = 0.0;
  double map_t2i = 0.0;
  double map_avg = 0.0;
  int best_epoch = 0;
  int epochs_run = 0;
  double wall_seconds = 0.0;
  std::optional<DistanceDistribution> distances;
  std::optional<DistanceHeatmap> heatmap;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single run
};

MeanStd Summarize(const std::vector<double>& values);

struct CellResult {
  CellSpec spec;
  std::vector<RunResult> runs;  // one per seed, in seed order
  MeanStd map_i2t;
  MeanStd map_t2i;
  MeanStd map_avg;
  int ok_runs = 0;
  int failed_runs = 0;
};

struct HybridIdentityCheck {
  bool checked = false;
  bool holds = true;
  std::vector<std::string> violations;
};

struct AggregateResult {
  std::string name;
  Study study = Study::kLossComparison;
  std::string config_hash;
  std::string spec_json;
  std::vector<CellResult> cells;
  HybridIdentityCheck hybrid_identity;
  double wall_clock_seconds = 0.0;

  int total_runs() const;
  int failed_runs() const;
};

std::vector<CellSpec> ExpandCells(const ExperimentSpec& spec);

using ProgressCallback = std::function<void(const CellSpec&, const RunResult&)>;

// Trains and evaluates every (cell, seed) pair, up to `jobs` at a time.
// Per-run failures are recorded; throws only when every run failed.
AggregateResult RunExperiment(const ExperimentSpec& spec, int jobs = 1,
                              const ProgressCallback& progress = {});

// RunExperiment for a hybrid_gamma_sweep spec; rejects other studies and
// gamma grids without 0.
AggregateResult GammaSweep(const ExperimentSpec& spec, int jobs = 1,
                           const ProgressCallback& progress = {});

std::string ResultsCsv(const AggregateResult& result);
// Cell labels/coords and statistics recovered from ResultsCsv output.
AggregateResult ParseResultsCsv(const std::string& csv);
std::string ResultsJson(const AggregateResult& result, bool include_wall_clock = true);
std::string ReportMarkdown(const AggregateResult& result);

// Writes results.csv, results.json, report.md and plotdata/*.csv.
void EmitReport(const AggregateResult& result, const std::filesystem::path& out_dir);

}  // namespace xmodal

#endif  // XMODAL_EXPERIMENTS_H_
