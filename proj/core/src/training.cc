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

#include "xmodal/training.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace xmodal {
namespace {

namespace fs = std::filesystem;

enum SeedTag : uint64_t {
  kImageHeadSeed = 1,
  kTextHeadSeed = 2,
  kProxySeed = 3,
  kShuffleSeed = 4,
  kDropoutSeed = 5,
};

struct SampleLayout {
  std::vector<int> pairs;          // indices into dataset.pairing
  std::vector<int> extra_images;   // unpaired image rows
  std::vector<int> extra_texts;    // unpaired text rows
};

SampleLayout BuildLayout(const PairedDataset& ds, bool use_extras) {
  SampleLayout layout;
  layout.pairs.resize(ds.pairing.size());
  std::iota(layout.pairs.begin(), layout.pairs.end(), 0);
  if (!use_extras) return layout;
  std::vector<bool> image_paired(static_cast<std::size_t>(ds.images.count()), false);
  std::vector<bool> text_paired(static_cast<std::size_t>(ds.texts.count()), false);
  for (const PairIndex& p : ds.pairing) {
    image_paired[static_cast<std::size_t>(p.image)] = true;
    text_paired[static_cast<std::size_t>(p.text)] = true;
  }
  for (int i = 0; i < ds.images.count(); ++i) {
    if (!image_paired[static_cast<std::size_t>(i)]) layout.extra_images.push_back(i);
  }
  for (int t = 0; t < ds.texts.count(); ++t) {
    if (!text_paired[static_cast<std::size_t>(t)]) layout.extra_texts.push_back(t);
  }
  return layout;
}

// Rows [begin, end) of `order` scaled onto `batches` near-equal chunks.
std::pair<std::size_t, std::size_t> Chunk(std::size_t total, int batches, int b) {
  const std::size_t nb = static_cast<std::size_t>(batches);
  const std::size_t ub = static_cast<std::size_t>(b);
  return {total * ub / nb, total * (ub + 1) / nb};
}

RetrievalReport Validate(const TrainedModel& model, const PairedDataset& validation) {
  return EvaluateRetrieval(Embed(model.image_head, validation.images.vectors),
                           validation.images.labels,
                           Embed(model.text_head, validation.texts.vectors),
                           validation.texts.labels);
}

}  // namespace

void TrainingConfig::Validate() const {
  if (!(learning_rate >= 0.0)) throw Error("learning_rate must be >= 0");
  if (batch_size < 1) throw Error("batch_size must be >= 1");
  if (max_epochs < 1) throw Error("max_epochs must be >= 1");
  if (early_stop_patience < 1) throw Error("early_stop_patience must be >= 1");
  if (early_stop_patience > max_epochs) throw Error("early_stop_patience exceeds max_epochs");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
    throw Error("adam betas must lie in (0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw Error("adam_epsilon must be > 0");
}

void AdamStep(std::span<const ParamSlot> params, AdamState& state, const AdamOptions& options) {
  if (state.first_moment.empty()) {
    for (const ParamSlot& slot : params) {
      state.first_moment.push_back(Matrix::Zero(slot.value->rows(), slot.value->cols()));
      state.second_moment.push_back(Matrix::Zero(slot.value->rows(), slot.value->cols()));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw Error("adam state tracks " + std::to_string(state.first_moment.size()) +
                " parameters, step received " + std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const ParamSlot& slot = params[k];
    if (slot.grad->rows() != slot.value->rows() || slot.grad->cols() != slot.value->cols() ||
        state.first_moment[k].rows() != slot.value->rows() ||
        state.first_moment[k].cols() != slot.value->cols()) {
      throw Error("shape mismatch for parameter " + slot.name);
    }
    if (!slot.grad->allFinite()) throw Error("non-finite gradient for parameter " + slot.name);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(options.beta1, t);
  const double correction2 = 1.0 - std::pow(options.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Matrix& g = *params[k].grad;
    Matrix& m = state.first_moment[k];
    Matrix& v = state.second_moment[k];
    m = options.beta1 * m + (1.0 - options.beta1) * g;
    v = options.beta2 * v + (1.0 - options.beta2) * g.cwiseAbs2();
    const Matrix m_hat = m / correction1;
    const Matrix v_hat = v / correction2;
    *params[k].value -= options.learning_rate *
                        (m_hat.array() / (v_hat.array().sqrt() + options.epsilon)).matrix();
  }
}

TrainResult Train(const PairedDataset& train, const PairedDataset& validation,
                  const ModelConfig& model, const ObjectiveConfig& objective,
                  const TrainingConfig& training) {
  model.Validate();
  objective.Validate();
  training.Validate();
  train.Validate(/*allow_empty_modality=*/true);
  validation.Validate();
  if (train.images.dim != model.in_dim || train.texts.dim != model.in_dim ||
      validation.images.dim != model.in_dim || validation.texts.dim != model.in_dim) {
    throw Error("dim mismatch: features do not match model in_dim " +
                std::to_string(model.in_dim));
  }

  const bool use_extras = training.route_unpaired && objective.class_wise.has_value();
  SampleLayout layout = BuildLayout(train, use_extras);
  const std::size_t extra_max = std::max(layout.extra_images.size(), layout.extra_texts.size());
  if (layout.pairs.empty() && extra_max == 0) {
    throw Error("no trainable samples for objective " + objective.Name());
  }
  const std::size_t units = layout.pairs.empty() ? extra_max : layout.pairs.size();
  const int batches = static_cast<int>((units + static_cast<std::size_t>(training.batch_size) - 1) /
                                       static_cast<std::size_t>(training.batch_size));

  ModelConfig image_cfg = model;
  image_cfg.init_seed = DeriveSeed(model.init_seed, kImageHeadSeed);
  ModelConfig text_cfg = model;
  text_cfg.init_seed = DeriveSeed(model.init_seed, kTextHeadSeed);
  TrainedModel current{InitHead(image_cfg), InitHead(text_cfg), std::nullopt};
  if (objective.class_wise) {
    current.proxies = InitClassProxies(*objective.class_wise, model.out_dim, train.class_count(),
                                       objective.lambda,
                                       DeriveSeed(model.init_seed, kProxySeed));
  }

  Rng shuffle_rng(DeriveSeed(training.seed, kShuffleSeed));
  Rng dropout_rng(DeriveSeed(training.seed, kDropoutSeed));
  AdamState adam;
  const AdamOptions adam_options{training.learning_rate, training.adam_beta1,
                                 training.adam_beta2, training.adam_epsilon};

  TrainResult result;
  int since_best = 0;
  bool have_best = false;
  for (int epoch = 1; epoch <= training.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::shuffle(layout.pairs.begin(), layout.pairs.end(), shuffle_rng);
    std::shuffle(layout.extra_images.begin(), layout.extra_images.end(), shuffle_rng);
    std::shuffle(layout.extra_texts.begin(), layout.extra_texts.end(), shuffle_rng);

    EpochRecord rec;
    rec.epoch = epoch;
    double loss_sum = 0.0;
    for (int b = 0; b < batches; ++b) {
      const auto [p0, p1] = Chunk(layout.pairs.size(), batches, b);
      const auto [i0, i1] = Chunk(layout.extra_images.size(), batches, b);
      const auto [t0, t1] = Chunk(layout.extra_texts.size(), batches, b);
      std::vector<int> image_rows;
      std::vector<int> text_rows;
      for (std::size_t k = p0; k < p1; ++k) {
        const PairIndex& p = train.pairing[static_cast<std::size_t>(layout.pairs[k])];
        image_rows.push_back(p.image);
        text_rows.push_back(p.text);
      }
      image_rows.insert(image_rows.end(), layout.extra_images.begin() + static_cast<std::ptrdiff_t>(i0),
                        layout.extra_images.begin() + static_cast<std::ptrdiff_t>(i1));
      text_rows.insert(text_rows.end(), layout.extra_texts.begin() + static_cast<std::ptrdiff_t>(t0),
                       layout.extra_texts.begin() + static_cast<std::ptrdiff_t>(t1));

      const FeatureBank image_batch = SelectRows(train.images, image_rows);
      const FeatureBank text_batch = SelectRows(train.texts, text_rows);
      ForwardResult image_fwd =
          Forward(current.image_head, image_batch.vectors, Mode::kTrain, &dropout_rng);
      ForwardResult text_fwd =
          Forward(current.text_head, text_batch.vectors, Mode::kTrain, &dropout_rng);

      Batch batch;
      batch.images = std::move(image_fwd.embeddings);
      batch.texts = std::move(text_fwd.embeddings);
      batch.image_labels = image_batch.labels;
      batch.text_labels = text_batch.labels;
      batch.pair_count = static_cast<int>(p1 - p0);
      const LossOutput loss = EvaluateObjective(
          batch, objective, current.proxies ? &*current.proxies : nullptr, use_extras);
      if (!std::isfinite(loss.value)) {
        throw Error("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                    ", step " + std::to_string(b));
      }
      loss_sum += loss.value;
      rec.warnings += loss.warning ? 1 : 0;

      const HeadGradients image_grads = Backward(current.image_head, image_fwd.cache, loss.grad_images);
      const HeadGradients text_grads = Backward(current.text_head, text_fwd.cache, loss.grad_texts);
      std::vector<ParamSlot> slots = {
          {"image.w1", &current.image_head.w1, &image_grads.w1},
          {"image.b1", &current.image_head.b1, &image_grads.b1},
          {"image.w2", &current.image_head.w2, &image_grads.w2},
          {"image.b2", &current.image_head.b2, &image_grads.b2},
          {"text.w1", &current.text_head.w1, &text_grads.w1},
          {"text.b1", &current.text_head.b1, &text_grads.b1},
          {"text.w2", &current.text_head.w2, &text_grads.w2},
          {"text.b2", &current.text_head.b2, &text_grads.b2},
      };
      if (current.proxies) {
        slots.push_back({"proxies.weight", &current.proxies->weight, &loss.grad_weight});
        if (current.proxies->kind == ClassWiseKind::kCrossEntropy) {
          slots.push_back({"proxies.bias", &current.proxies->bias, &loss.grad_bias});
        }
      }
      AdamStep(slots, adam, adam_options);
      ++rec.steps;
    }
    rec.train_loss = loss_sum / batches;

    const RetrievalReport val = Validate(current, validation);
    rec.val_map_i2t = val.map_i2t;
    rec.val_map_t2i = val.map_t2i;
    rec.val_map_avg = val.map_avg;
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.record.epochs.push_back(rec);

    if (!have_best || val.map_avg > result.record.best_val_map_avg) {
      have_best = true;
      result.record.best_val_map_avg = val.map_avg;
      result.record.best_epoch = epoch;
      result.best = current;
      since_best = 0;
    } else if (++since_best >= training.early_stop_patience) {
      result.record.stop_reason = "early_stop";
      break;
    }
  }
  if (result.record.stop_reason.empty()) result.record.stop_reason = "max_epochs";
  result.last = std::move(current);
  return result;
}

TrainResult Train(const PairedDataset& dataset, const ModelConfig& model,
                  const ObjectiveConfig& objective, const TrainingConfig& training) {
  auto [train, validation] =
      SplitTrainValidation(dataset, training.validation_fraction, training.seed);
  return Train(train, validation, model, objective, training);
}

RetrievalReport EvaluateCheckpoint(const TrainedModel& model, const PairedDataset& test) {
  test.Validate();
  if (test.images.dim != model.image_head.in_dim() || test.texts.dim != model.text_head.in_dim()) {
    throw Error("dim mismatch between test features and model heads");
  }
  if (model.image_head.out_dim() != model.text_head.out_dim()) {
    throw Error("image and text heads disagree on the common dimension");
  }
  return EvaluateRetrieval(Embed(model.image_head, test.images.vectors), test.images.labels,
                           Embed(model.text_head, test.texts.vectors), test.texts.labels);
}

void SaveModel(const TrainedModel& model, const fs::path& dir) {
  fs::create_directories(dir);
  SaveHead(model.image_head, dir / "image_head.bin");
  SaveHead(model.text_head, dir / "text_head.bin");
  if (model.proxies) {
    SaveClassProxies(*model.proxies, dir / "proxies.bin");
  } else {
    fs::remove(dir / "proxies.bin");
  }
}

TrainedModel LoadModel(const fs::path& dir) {
  TrainedModel model{LoadHead(dir / "image_head.bin"), LoadHead(dir / "text_head.bin"),
                     std::nullopt};
  if (fs::exists(dir / "proxies.bin")) model.proxies = LoadClassProxies(dir / "proxies.bin");
  return model;
}

std::string TrainRecordJson(const TrainRecord& record, bool include_wall_clock) {
  nlohmann::ordered_json j;
  j["best_epoch"] = record.best_epoch;
  j["best_val_map_avg"] = record.best_val_map_avg;
  j["stop_reason"] = record.stop_reason;
  j["epochs"] = nlohmann::ordered_json::array();
  for (const EpochRecord& e : record.epochs) {
    nlohmann::ordered_json row = {{"epoch", e.epoch},
                                  {"train_loss", e.train_loss},
                                  {"val_map_i2t", e.val_map_i2t},
                                  {"val_map_t2i", e.val_map_t2i},
                                  {"val_map_avg", e.val_map_avg},
                                  {"steps", e.steps},
                                  {"warnings", e.warnings}};
    if (include_wall_clock) row["wall_seconds"] = e.wall_seconds;
    j["epochs"].push_back(row);
  }
  return j.dump(2);
}

void SaveTrainingRun(const TrainResult& result, const fs::path& dir) {
  SaveModel(result.best, dir / "best");
  SaveModel(result.last, dir / "last");
  std::ofstream out(dir / "train_record.json");
  if (!out) throw Error("cannot write " + (dir / "train_record.json").string());
  out << TrainRecordJson(result.record) << '\n';
}

}  // namespace xmodal
