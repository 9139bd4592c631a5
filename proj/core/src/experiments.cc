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

#include "xmodal/experiments.h"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "xmodal/training.h"

namespace xmodal {
namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string FormatNumber(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string FormatExact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string Percent(double f) {
  return std::to_string(static_cast<int>(std::lround(f * 100.0)));
}

std::string SettingLabel(const ImbalanceSpec& s) {
  return Percent(s.image_keep_fraction) + "%I, " + Percent(s.text_keep_fraction) + "%T";
}

std::string MeanStdText(const MeanStd& m, int ok_runs) {
  if (ok_runs == 0) return "failed";
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.3f±%.3f", m.mean, m.std);
  return buf;
}

std::string Coord(const CellSpec& cell, const std::string& key) {
  for (const auto& [k, v] : cell.coords) {
    if (k == key) return v;
  }
  return {};
}

std::string FileSafe(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  return out;
}

// Published reference values for shape comparison (Wikipedia columns).
struct Reference {
  const char* key;
  const char* text;
};

constexpr Reference kLossReference[] = {
    {"LRL", "0.592 / 0.585 / 0.588"}, {"CEL", "0.586 / 0.565 / 0.576"},
    {"PCL", "0.592 / 0.574 / 0.583"}, {"ML", "0.147 / 0.153 / 0.150"},
    {"CL", "0.516 / 0.498 / 0.507"},  {"TL", "0.550 / 0.536 / 0.543"},
};

constexpr Reference kImbalanceBaselineReference[] = {
    {"100%I, 50%T", "0.452±0.013"}, {"50%I, 100%T", "0.433±0.016"},
    {"100%I, 30%T", "0.425±0.021"}, {"30%I, 100%T", "0.417±0.019"},
    {"100%I, 100%T", "0.482±0.003"},
};

constexpr Reference kImbalanceModelReference[] = {
    {"100%I, 50%T", "0.578±0.001"}, {"50%I, 100%T", "0.573±0.003"},
    {"100%I, 30%T", "0.571±0.003"}, {"30%I, 100%T", "0.578±0.003"},
    {"100%I, 10%T", "0.564±0.002"}, {"10%I, 100%T", "0.577±0.004"},
    {"100%I, 0%T", "0.139±0.003"},  {"0%I, 100%T", "0.129±0.005"},
    {"100%I, 100%T", "0.576±0.002"},
};

constexpr Reference kDimensionReference[] = {
    {"64", "0.569"},  {"128", "0.576"},  {"256", "0.582"},
    {"512", "0.583"}, {"1024", "0.585"}, {"2048", "0.581"},
};

template <std::size_t N>
std::string LookupReference(const Reference (&table)[N], const std::string& key) {
  for (const Reference& r : table) {
    if (key == r.key) return r.text;
  }
  return "n/a";
}

RunResult RunOne(const ExperimentSpec& spec, const LoadedData& data, const CellSpec& cell,
                 uint64_t seed, bool with_diagnostics) {
  RunResult run;
  run.seed = seed;
  const auto started = std::chrono::steady_clock::now();
  try {
    ModelConfig model = cell.model;
    model.init_seed = seed;
    if (spec.model_in_dim_from_data) model.in_dim = data.train.images.dim;
    TrainingConfig training = cell.training;
    training.seed = seed;

    auto [train, validation] =
        SplitTrainValidation(data.train, training.validation_fraction, seed);
    if (cell.imbalance) {
      ImbalanceSpec imbalance = *cell.imbalance;
      imbalance.seed = seed;
      train = ApplyImbalance(train, imbalance);
    }
    const TrainResult trained = Train(train, validation, model, cell.objective, training);
    const RetrievalReport report = EvaluateCheckpoint(trained.best, data.test);
    run.map_i2t = report.map_i2t;
    run.map_t2i = report.map_t2i;
    run.map_avg = report.map_avg;
    run.best_epoch = trained.record.best_epoch;
    run.epochs_run = static_cast<int>(trained.record.epochs.size());
    run.ok = true;

    if (with_diagnostics) {
      const Matrix v = Embed(trained.best.image_head, data.test.images.vectors);
      const Matrix t = Embed(trained.best.text_head, data.test.texts.vectors);
      run.distances = ComputeDistanceDistributions(v, data.test.images.labels, t,
                                                   data.test.texts.labels);
      run.heatmap = ComputeDistanceHeatmap(2, v, t, data.test.images.labels, seed);
    }
  } catch (const std::exception& e) {
    run.ok = false;
    run.error = e.what();
  }
  run.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return run;
}

void FinalizeCell(CellResult& cell) {
  std::vector<double> i2t, t2i, avg;
  for (const RunResult& r : cell.runs) {
    if (!r.ok) {
      ++cell.failed_runs;
      continue;
    }
    ++cell.ok_runs;
    i2t.push_back(r.map_i2t);
    t2i.push_back(r.map_t2i);
    avg.push_back(r.map_avg);
  }
  cell.map_i2t = Summarize(i2t);
  cell.map_t2i = Summarize(t2i);
  cell.map_avg = Summarize(avg);
}

HybridIdentityCheck CheckHybridIdentity(const std::vector<CellResult>& cells) {
  HybridIdentityCheck check;
  check.checked = true;
  std::map<std::string, const CellResult*> references;
  for (const CellResult& c : cells) {
    if (c.spec.reference) references[c.spec.objective.Name()] = &c;
  }
  for (const CellResult& c : cells) {
    if (c.spec.reference || !c.spec.objective.is_hybrid() || c.spec.objective.gamma != 0.0) continue;
    const std::string class_name(ShortName(*c.spec.objective.class_wise));
    const auto found = references.find(class_name);
    if (found == references.end()) continue;
    const CellResult& ref = *found->second;
    for (std::size_t s = 0; s < c.runs.size(); ++s) {
      const RunResult& a = c.runs[s];
      const RunResult& b = ref.runs[s];
      if (a.ok != b.ok || a.map_i2t != b.map_i2t || a.map_t2i != b.map_t2i ||
          a.best_epoch != b.best_epoch || a.epochs_run != b.epochs_run) {
        check.holds = false;
        check.violations.push_back(c.spec.label + " seed " + std::to_string(a.seed) +
                                   " differs from " + class_name);
      }
    }
  }
  return check;
}

std::string CsvQuote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> CsvSplit(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string CoordsText(const CellSpec& cell) {
  std::string out;
  for (const auto& [k, v] : cell.coords) {
    if (!out.empty()) out += ';';
    out += k + "=" + v;
  }
  return out;
}

void WriteFile(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

std::string StatsRow(const CellResult& c) {
  return MeanStdText(c.map_i2t, c.ok_runs) + " | " + MeanStdText(c.map_t2i, c.ok_runs) + " | " +
         MeanStdText(c.map_avg, c.ok_runs);
}

}  // namespace

MeanStd Summarize(const std::vector<double>& values) {
  MeanStd out;
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return out;
}

int AggregateResult::total_runs() const {
  int n = 0;
  for (const CellResult& c : cells) n += static_cast<int>(c.runs.size());
  return n;
}

int AggregateResult::failed_runs() const {
  int n = 0;
  for (const CellResult& c : cells) n += c.failed_runs;
  return n;
}

std::vector<CellSpec> ExpandCells(const ExperimentSpec& spec) {
  std::vector<CellSpec> cells;
  auto base = [&]() {
    CellSpec c;
    c.model = spec.model;
    c.objective = spec.objective;
    c.training = spec.training;
    return c;
  };
  switch (spec.study) {
    case Study::kLossComparison:
      for (const std::string& loss : spec.losses) {
        CellSpec c = base();
        const ObjectiveConfig parsed = ObjectiveConfig::Parse(loss);
        c.objective.class_wise = parsed.class_wise;
        c.objective.pair_wise = parsed.pair_wise;
        c.label = c.objective.Name();
        c.coords = {{"loss", c.label}};
        cells.push_back(c);
      }
      break;
    case Study::kHybridGammaSweep:
      for (ClassWiseKind cw : spec.class_wise) {
        for (PairWiseKind pw : spec.pair_wise) {
          for (double g : spec.gammas) {
            CellSpec c = base();
            c.objective.class_wise = cw;
            c.objective.pair_wise = pw;
            c.objective.gamma = g;
            c.coords = {{"combination", c.objective.Name()}, {"gamma", FormatNumber(g)}};
            c.label = c.objective.Name() + " gamma=" + FormatNumber(g);
            cells.push_back(c);
          }
        }
      }
      if (spec.check_hybrid_identity) {
        for (ClassWiseKind cw : spec.class_wise) {
          CellSpec c = base();
          c.objective.class_wise = cw;
          c.objective.pair_wise.reset();
          c.reference = true;
          c.label = c.objective.Name();
          c.coords = {{"combination", c.label}, {"gamma", "-"}};
          cells.push_back(c);
        }
      }
      break;
    case Study::kImbalance:
      for (const ImbalanceSpec& s : spec.imbalance) {
        for (bool routed : {false, true}) {
          CellSpec c = base();
          c.imbalance = s;
          c.training.route_unpaired = routed;
          const std::string variant = routed ? "routed" : "pairs-only";
          c.coords = {{"setting", SettingLabel(s)}, {"variant", variant}};
          c.label = SettingLabel(s) + " " + variant;
          cells.push_back(c);
        }
      }
      break;
    case Study::kDimensionSweep:
      for (int d : spec.dims) {
        CellSpec c = base();
        c.model.out_dim = d;
        c.coords = {{"d", std::to_string(d)}};
        c.label = "d=" + std::to_string(d);
        cells.push_back(c);
      }
      break;
    case Study::kLambdaSweep:
      if (spec.objective.class_wise != ClassWiseKind::kPrototypeContrastive) {
        throw Error("lambda_sweep needs a PCL-based objective");
      }
      for (double l : spec.lambdas) {
        CellSpec c = base();
        c.objective.lambda = l;
        c.coords = {{"lambda", FormatNumber(l)}};
        c.label = "lambda=" + FormatNumber(l);
        cells.push_back(c);
      }
      break;
  }
  return cells;
}

AggregateResult RunExperiment(const ExperimentSpec& spec, int jobs,
                              const ProgressCallback& progress) {
  spec.Validate();
  const auto started = std::chrono::steady_clock::now();
  const LoadedData data = LoadData(spec.data);
  const std::vector<CellSpec> cell_specs = ExpandCells(spec);

  AggregateResult result;
  result.name = spec.name;
  result.study = spec.study;
  result.config_hash = ConfigHash(spec);
  result.spec_json = CanonicalSpecJson(spec);
  for (const CellSpec& c : cell_specs) {
    CellResult cell;
    cell.spec = c;
    cell.runs.resize(spec.seeds.size());
    result.cells.push_back(std::move(cell));
  }

  const std::size_t total = cell_specs.size() * spec.seeds.size();
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  auto worker = [&]() {
    for (std::size_t k = next++; k < total; k = next++) {
      const std::size_t c = k / spec.seeds.size();
      const std::size_t s = k % spec.seeds.size();
      RunResult run = RunOne(spec, data, cell_specs[c], spec.seeds[s], spec.diagnostics && s == 0);
      result.cells[c].runs[s] = std::move(run);
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        progress(cell_specs[c], result.cells[c].runs[s]);
      }
    }
  };
  const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(total)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  for (CellResult& cell : result.cells) FinalizeCell(cell);
  if (spec.study == Study::kHybridGammaSweep && spec.check_hybrid_identity) {
    result.hybrid_identity = CheckHybridIdentity(result.cells);
  }
  result.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (result.failed_runs() == result.total_runs()) {
    const std::string first = result.cells.empty() || result.cells[0].runs.empty()
                                  ? std::string("no runs")
                                  : result.cells[0].runs[0].error;
    throw Error("every run of experiment '" + spec.name + "' failed; first error: " + first);
  }
  return result;
}

AggregateResult GammaSweep(const ExperimentSpec& spec, int jobs, const ProgressCallback& progress) {
  if (spec.study != Study::kHybridGammaSweep) throw Error("GammaSweep needs a hybrid_gamma_sweep spec");
  bool has_zero = false;
  for (double g : spec.gammas) has_zero = has_zero || g == 0.0;
  if (!has_zero) throw Error("gamma grid must include 0");
  return RunExperiment(spec, jobs, progress);
}

std::string ResultsCsv(const AggregateResult& result) {
  std::ostringstream out;
  out << "label,reference,coords,runs,ok_runs,failed_runs,map_i2t_mean,map_i2t_std,"
         "map_t2i_mean,map_t2i_std,map_avg_mean,map_avg_std\n";
  for (const CellResult& c : result.cells) {
    out << CsvQuote(c.spec.label) << ',' << (c.spec.reference ? 1 : 0) << ','
        << CsvQuote(CoordsText(c.spec)) << ',' << c.runs.size() << ',' << c.ok_runs << ','
        << c.failed_runs << ',' << FormatExact(c.map_i2t.mean) << ',' << FormatExact(c.map_i2t.std)
        << ',' << FormatExact(c.map_t2i.mean) << ',' << FormatExact(c.map_t2i.std) << ','
        << FormatExact(c.map_avg.mean) << ',' << FormatExact(c.map_avg.std) << '\n';
  }
  return out.str();
}

AggregateResult ParseResultsCsv(const std::string& csv) {
  AggregateResult result;
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw Error("empty results csv");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = CsvSplit(line);
    if (f.size() != 12) throw Error("results csv row has " + std::to_string(f.size()) + " fields");
    CellResult cell;
    cell.spec.label = f[0];
    cell.spec.reference = f[1] == "1";
    std::istringstream coords(f[2]);
    std::string kv;
    while (std::getline(coords, kv, ';')) {
      const std::size_t eq = kv.find('=');
      if (eq == std::string::npos) throw Error("malformed coords field: " + f[2]);
      cell.spec.coords.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cell.runs.resize(std::stoul(f[3]));
    cell.ok_runs = std::stoi(f[4]);
    cell.failed_runs = std::stoi(f[5]);
    cell.map_i2t = {std::stod(f[6]), std::stod(f[7])};
    cell.map_t2i = {std::stod(f[8]), std::stod(f[9])};
    cell.map_avg = {std::stod(f[10]), std::stod(f[11])};
    result.cells.push_back(std::move(cell));
  }
  return result;
}

std::string ResultsJson(const AggregateResult& result, bool include_wall_clock) {
  ordered_json j;
  j["name"] = result.name;
  j["study"] = std::string(StudyName(result.study));
  j["config_hash"] = result.config_hash;
  j["spec"] = result.spec_json.empty() ? ordered_json() : ordered_json::parse(result.spec_json);
  j["cells"] = ordered_json::array();
  for (const CellResult& c : result.cells) {
    ordered_json cell;
    cell["label"] = c.spec.label;
    cell["reference"] = c.spec.reference;
    cell["coords"] = ordered_json::object();
    for (const auto& [k, v] : c.spec.coords) cell["coords"][k] = v;
    cell["stats"] = {
        {"map_i2t", {{"mean", c.map_i2t.mean}, {"std", c.map_i2t.std}}},
        {"map_t2i", {{"mean", c.map_t2i.mean}, {"std", c.map_t2i.std}}},
        {"map_avg", {{"mean", c.map_avg.mean}, {"std", c.map_avg.std}}},
    };
    cell["ok_runs"] = c.ok_runs;
    cell["failed_runs"] = c.failed_runs;
    cell["runs"] = ordered_json::array();
    for (const RunResult& r : c.runs) {
      ordered_json run = {{"seed", r.seed}, {"ok", r.ok}};
      if (!r.ok) run["error"] = r.error;
      run["map_i2t"] = r.map_i2t;
      run["map_t2i"] = r.map_t2i;
      run["map_avg"] = r.map_avg;
      run["best_epoch"] = r.best_epoch;
      run["epochs_run"] = r.epochs_run;
      if (include_wall_clock) run["wall_seconds"] = r.wall_seconds;
      cell["runs"].push_back(run);
    }
    j["cells"].push_back(cell);
  }
  if (result.hybrid_identity.checked) {
    j["hybrid_identity"] = {{"holds", result.hybrid_identity.holds},
                            {"violations", result.hybrid_identity.violations}};
  }
  j["retrieval_convention"] =
      "full-gallery ranking by squared Euclidean distance; relevance by class label; "
      "a query's own paired item stays in the gallery";
  if (include_wall_clock) j["wall_clock_seconds"] = result.wall_clock_seconds;
  return j.dump(2) + "\n";
}

std::string ReportMarkdown(const AggregateResult& result) {
  std::ostringstream md;
  md << "# " << result.name << "\n\n";
  md << "- study: `" << StudyName(result.study) << "`\n";
  md << "- config hash: `" << result.config_hash << "`\n";
  md << "- runs: " << result.total_runs() << " (" << result.failed_runs() << " failed)\n\n";
  md << "Cells show mAP mean±std over seeds. Reference columns are published numbers for the "
        "Wikipedia benchmark, transcribed for side-by-side shape comparison; they are not "
        "reproduced by this run.\n\n";

  switch (result.study) {
    case Study::kLossComparison: {
      md << "| Group | Loss | I2T | T2I | Avg. | Reference I2T / T2I / Avg. (transcribed) |\n";
      md << "|---|---|---|---|---|---|\n";
      for (const char* group : {"Class-wise loss", "Pair-wise loss", "Hybrid loss"}) {
        for (const CellResult& c : result.cells) {
          const ObjectiveConfig& o = c.spec.objective;
          const char* g = o.is_hybrid() ? "Hybrid loss"
                          : o.class_wise ? "Class-wise loss"
                                         : "Pair-wise loss";
          if (std::string(g) != group) continue;
          md << "| " << group << " | " << c.spec.label << " | " << StatsRow(c) << " | "
             << LookupReference(kLossReference, c.spec.label) << " |\n";
        }
      }
      break;
    }
    case Study::kHybridGammaSweep: {
      std::vector<std::string> gammas;
      std::vector<std::string> combos;
      for (const CellResult& c : result.cells) {
        if (c.spec.reference) continue;
        const std::string g = Coord(c.spec, "gamma");
        const std::string combo = Coord(c.spec, "combination");
        if (std::find(gammas.begin(), gammas.end(), g) == gammas.end()) gammas.push_back(g);
        if (std::find(combos.begin(), combos.end(), combo) == combos.end()) combos.push_back(combo);
      }
      md << "Average mAP per combination and combination weight gamma.\n\n| Combination |";
      for (const std::string& g : gammas) md << " γ=" << g << " |";
      md << "\n|---|";
      for (std::size_t k = 0; k < gammas.size(); ++k) md << "---|";
      md << "\n";
      for (const std::string& combo : combos) {
        md << "| " << combo << " |";
        for (const std::string& g : gammas) {
          for (const CellResult& c : result.cells) {
            if (!c.spec.reference && Coord(c.spec, "combination") == combo &&
                Coord(c.spec, "gamma") == g) {
              md << ' ' << MeanStdText(c.map_avg, c.ok_runs) << " |";
            }
          }
        }
        md << "\n";
      }
      bool any_reference = false;
      for (const CellResult& c : result.cells) {
        if (!c.spec.reference) continue;
        if (!any_reference) md << "\nClass-wise only:\n\n| Loss | Avg. |\n|---|---|\n";
        any_reference = true;
        md << "| " << c.spec.label << " | " << MeanStdText(c.map_avg, c.ok_runs) << " |\n";
      }
      if (result.hybrid_identity.checked) {
        md << "\nHybrid identity (gamma = 0 equals class-wise only): "
           << (result.hybrid_identity.holds ? "holds" : "VIOLATED") << "\n";
      }
      break;
    }
    case Study::kImbalance: {
      md << "| Percentage | Baseline-analog (complete pairs only) | Routed-analog (unpaired "
            "samples routed to class-wise term) | Reference baseline (transcribed) | "
            "Reference model (transcribed) |\n";
      md << "|---|---|---|---|---|\n";
      std::vector<std::string> settings;
      for (const CellResult& c : result.cells) {
        const std::string s = Coord(c.spec, "setting");
        if (std::find(settings.begin(), settings.end(), s) == settings.end()) settings.push_back(s);
      }
      for (const std::string& s : settings) {
        std::string pairs_only = "n/a";
        std::string routed = "n/a";
        for (const CellResult& c : result.cells) {
          if (Coord(c.spec, "setting") != s) continue;
          const std::string text = MeanStdText(c.map_avg, c.ok_runs);
          (Coord(c.spec, "variant") == "routed" ? routed : pairs_only) = text;
        }
        md << "| " << s << " | " << pairs_only << " | " << routed << " | "
           << LookupReference(kImbalanceBaselineReference, s) << " | "
           << LookupReference(kImbalanceModelReference, s) << " |\n";
      }
      break;
    }
    case Study::kDimensionSweep: {
      md << "| Parameter | I2T | T2I | Avg. | Reference Avg. (transcribed) |\n|---|---|---|---|---|\n";
      for (const CellResult& c : result.cells) {
        md << "| " << c.spec.label << " | " << StatsRow(c) << " | "
           << LookupReference(kDimensionReference, Coord(c.spec, "d")) << " |\n";
      }
      break;
    }
    case Study::kLambdaSweep: {
      md << "| Scaling factor | I2T | T2I | Avg. |\n|---|---|---|---|\n";
      for (const CellResult& c : result.cells) {
        md << "| " << c.spec.label << " | " << StatsRow(c) << " |\n";
      }
      break;
    }
  }

  bool header = false;
  for (const CellResult& c : result.cells) {
    for (const RunResult& r : c.runs) {
      if (r.ok) continue;
      if (!header) md << "\n## Failed runs\n\n";
      header = true;
      md << "- " << c.spec.label << " (seed " << r.seed << "): " << r.error << "\n";
    }
  }
  return md.str();
}

void EmitReport(const AggregateResult& result, const fs::path& out_dir) {
  if (result.cells.empty()) throw Error("nothing to report");
  fs::create_directories(out_dir / "plotdata");
  WriteFile(out_dir / "results.csv", ResultsCsv(result));
  WriteFile(out_dir / "results.json", ResultsJson(result));
  WriteFile(out_dir / "report.md", ReportMarkdown(result));

  std::ostringstream plot;
  plot.precision(17);
  std::string plot_name;
  switch (result.study) {
    case Study::kLossComparison:
      plot_name = "losses.csv";
      plot << "loss,map_avg_mean,map_avg_std\n";
      for (const CellResult& c : result.cells) {
        plot << c.spec.label << ',' << c.map_avg.mean << ',' << c.map_avg.std << '\n';
      }
      break;
    case Study::kHybridGammaSweep:
      plot_name = "gamma_sweep.csv";
      plot << "combination,gamma,map_avg_mean,map_avg_std\n";
      for (const CellResult& c : result.cells) {
        if (c.spec.reference) continue;
        plot << Coord(c.spec, "combination") << ',' << Coord(c.spec, "gamma") << ','
             << c.map_avg.mean << ',' << c.map_avg.std << '\n';
      }
      break;
    case Study::kImbalance:
      plot_name = "imbalance.csv";
      plot << "image_fraction,text_fraction,variant,map_avg_mean,map_avg_std\n";
      for (const CellResult& c : result.cells) {
        plot << c.spec.imbalance->image_keep_fraction << ','
             << c.spec.imbalance->text_keep_fraction << ',' << Coord(c.spec, "variant") << ','
             << c.map_avg.mean << ',' << c.map_avg.std << '\n';
      }
      break;
    case Study::kDimensionSweep:
      plot_name = "dimension.csv";
      plot << "d,map_avg_mean,map_avg_std\n";
      for (const CellResult& c : result.cells) {
        plot << Coord(c.spec, "d") << ',' << c.map_avg.mean << ',' << c.map_avg.std << '\n';
      }
      break;
    case Study::kLambdaSweep:
      plot_name = "lambda.csv";
      plot << "lambda,map_avg_mean,map_avg_std\n";
      for (const CellResult& c : result.cells) {
        plot << Coord(c.spec, "lambda") << ',' << c.map_avg.mean << ',' << c.map_avg.std << '\n';
      }
      break;
  }
  WriteFile(out_dir / "plotdata" / plot_name, plot.str());

  for (const CellResult& c : result.cells) {
    if (c.runs.empty()) continue;
    const RunResult& first = c.runs.front();
    if (first.distances) {
      WriteHistogramCsv(*first.distances, out_dir / "plotdata" / ("distances_" + FileSafe(c.spec.label) + ".csv"));
    }
    if (first.heatmap) {
      WriteHeatmapCsv(*first.heatmap, out_dir / "plotdata" / ("heatmap_" + FileSafe(c.spec.label) + ".csv"));
    }
  }
}

}  // namespace xmodal
