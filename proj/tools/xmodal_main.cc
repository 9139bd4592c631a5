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

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "xmodal/config.h"
#include "xmodal/dataio.h"
#include "xmodal/evaluation.h"
#include "xmodal/experiments.h"
#include "xmodal/training.h"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw xmodal::Error("cannot write " + path.string());
  out << text;
}

ordered_json ReportJson(const xmodal::RetrievalReport& r) {
  return {{"map_i2t", r.map_i2t}, {"map_t2i", r.map_t2i}, {"map_avg", r.map_avg},
          {"image_count", r.image_count}, {"text_count", r.text_count}};
}

int Ingest(const std::string& manifest, bool check) {
  const xmodal::FeatureBank bank = xmodal::LoadFeatureBank(manifest);
  if (check) bank.Validate();
  std::map<int, int> per_class;
  for (int y : bank.labels) ++per_class[y];
  std::printf("modality=%s count=%d dim=%d classes=%d\n",
              std::string(xmodal::ModalityName(bank.modality)).c_str(), bank.count(), bank.dim,
              bank.class_count);
  for (const auto& [label, n] : per_class) std::printf("  class %d: %d\n", label, n);
  if (check) std::printf("OK\n");
  return 0;
}

int Synth(const xmodal::SyntheticSpec& spec, int test_per_class, const fs::path& out) {
  xmodal::DataSource source;
  source.synthetic = spec;
  source.test_pairs_per_class = test_per_class;
  const xmodal::LoadedData data = xmodal::LoadData(source);
  for (const auto& [name, ds] : {std::pair{"train", &data.train}, std::pair{"test", &data.test}}) {
    const fs::path dir = out / name;
    fs::create_directories(dir);
    xmodal::WriteFeatureBank(ds->images, dir, "images");
    xmodal::WriteFeatureBank(ds->texts, dir, "texts");
    std::printf("%s: %d pairs -> %s\n", name, ds->images.count(), dir.string().c_str());
  }
  return 0;
}

int TrainCommand(const fs::path& config) {
  xmodal::TrainJob job = xmodal::LoadTrainJob(config);
  const xmodal::LoadedData data = xmodal::LoadData(job.data);
  if (job.model_in_dim_from_data) job.model.in_dim = data.train.images.dim;
  const xmodal::TrainResult result =
      xmodal::Train(data.train, job.model, job.objective, job.training);
  for (const xmodal::EpochRecord& e : result.record.epochs) {
    std::printf("epoch %3d  loss %.6f  val mAP %.4f\n", e.epoch, e.train_loss, e.val_map_avg);
  }
  xmodal::SaveTrainingRun(result, job.out_dir);
  const xmodal::RetrievalReport test = xmodal::EvaluateCheckpoint(result.best, data.test);
  ordered_json metrics = ReportJson(test);
  metrics["best_epoch"] = result.record.best_epoch;
  metrics["stop_reason"] = result.record.stop_reason;
  WriteText(job.out_dir / "test_metrics.json", metrics.dump(2) + "\n");
  std::printf("best epoch %d (%s); test mAP i2t %.4f t2i %.4f avg %.4f\n",
              result.record.best_epoch, result.record.stop_reason.c_str(), test.map_i2t,
              test.map_t2i, test.map_avg);
  return 0;
}

int Eval(const fs::path& checkpoint, const std::vector<std::string>& test, const fs::path& out,
         int heatmap_per_class) {
  // A training run directory holds best/ and last/; default to best/.
  const bool run_dir = !fs::exists(checkpoint / "image_head.bin") && fs::is_directory(checkpoint / "best");
  const xmodal::TrainedModel model = xmodal::LoadModel(run_dir ? checkpoint / "best" : checkpoint);
  const xmodal::PairedDataset ds = xmodal::MakeCompleteDataset(
      xmodal::LoadFeatureBank(test.at(0)), xmodal::LoadFeatureBank(test.at(1)));
  const xmodal::RetrievalReport report = xmodal::EvaluateCheckpoint(model, ds);
  std::printf("mAP i2t %.6f t2i %.6f avg %.6f\n", report.map_i2t, report.map_t2i, report.map_avg);
  if (out.empty()) return 0;
  fs::create_directories(out);
  WriteText(out / "metrics.json", ReportJson(report).dump(2) + "\n");
  const xmodal::Matrix v = xmodal::Embed(model.image_head, ds.images.vectors);
  const xmodal::Matrix t = xmodal::Embed(model.text_head, ds.texts.vectors);
  const xmodal::DistanceDistribution dist = xmodal::ComputeDistanceDistributions(
      v, ds.images.labels, t, ds.texts.labels);
  xmodal::WriteHistogramCsv(dist, out / "distances.csv");
  std::printf("distances: %zu intra-class, %zu inter-class\n", dist.intra_class.size(),
              dist.inter_class.size());
  if (heatmap_per_class > 0) {
    xmodal::WriteHeatmapCsv(
        xmodal::ComputeDistanceHeatmap(heatmap_per_class, v, t, ds.images.labels, 0),
        out / "heatmap.csv");
  }
  return 0;
}

int Run(const fs::path& spec_path, const fs::path& out, int jobs) {
  const xmodal::ExperimentSpec spec = xmodal::LoadExperimentSpec(spec_path);
  const auto cells = xmodal::ExpandCells(spec);
  std::printf("%s: %zu cells x %zu seeds\n", spec.name.c_str(), cells.size(), spec.seeds.size());
  const xmodal::AggregateResult result = xmodal::RunExperiment(
      spec, jobs, [](const xmodal::CellSpec& cell, const xmodal::RunResult& run) {
        if (run.ok) {
          std::printf("  %-28s seed %llu  avg mAP %.4f  (%.1fs)\n", cell.label.c_str(),
                      static_cast<unsigned long long>(run.seed), run.map_avg, run.wall_seconds);
        } else {
          std::printf("  %-28s seed %llu  FAILED: %s\n", cell.label.c_str(),
                      static_cast<unsigned long long>(run.seed), run.error.c_str());
        }
        std::fflush(stdout);
      });
  xmodal::EmitReport(result, out);
  std::printf("%d runs, %d failed; report in %s\n", result.total_runs(), result.failed_runs(),
              out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-modal retrieval: projection heads over frozen encoder features"};
  app.require_subcommand(1);

  auto* ingest = app.add_subcommand("ingest", "Load a feature-bank manifest");
  std::string manifest;
  bool check = false;
  ingest->add_option("--manifest", manifest, "Manifest JSON")->required();
  ingest->add_flag("--check", check, "Validate every invariant");

  auto* synth = app.add_subcommand("synth", "Write a synthetic train/test feature set");
  xmodal::SyntheticSpec sspec;
  uint64_t synth_seed = 0;
  int test_per_class = 50;
  std::string synth_out;
  synth->add_option("--classes", sspec.classes)->required();
  synth->add_option("--per-class", sspec.pairs_per_class, "Training pairs per class")->required();
  synth->add_option("--dim", sspec.dim)->required();
  synth->add_option("--sigma", sspec.noise_sigma)->required();
  synth->add_option("--seed", synth_seed)->required();
  synth->add_option("--test-per-class", test_per_class);
  synth->add_option("--out", synth_out)->required();

  auto* train = app.add_subcommand("train", "Train one model from a JSON config");
  std::string train_config;
  train->add_option("--config", train_config)->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint directory");
  std::string checkpoint;
  std::vector<std::string> test;
  std::string eval_out;
  int heatmap = 0;
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--test", test, "Image and text manifests")->required()->expected(2);
  eval->add_option("--out", eval_out, "Write metrics and distance diagnostics here");
  eval->add_option("--heatmap-per-class", heatmap);

  auto* run = app.add_subcommand("run", "Run an experiment spec");
  std::string spec_path;
  std::string run_out;
  int jobs = 1;
  run->add_option("--spec", spec_path)->required();
  run->add_option("--out", run_out)->required();
  run->add_option("--jobs", jobs)->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*ingest) return Ingest(manifest, check);
    if (*synth) {
      sspec.rotation_seed = synth_seed;
      sspec.sample_seed = synth_seed;
      return Synth(sspec, test_per_class, synth_out);
    }
    if (*train) return TrainCommand(train_config);
    if (*eval) return Eval(checkpoint, test, eval_out, heatmap);
    if (*run) return Run(spec_path, run_out, jobs);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "xmodal: %s\n", e.what());
    return 1;
  }
  return 0;
}
