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

#ifndef XMODAL_PROJECTION_H_
#define XMODAL_PROJECTION_H_

#include <cstdint>
#include <filesystem>
#include <vector>

#include "xmodal/numeric.h"

namespace xmodal {

struct ModelConfig {
  int in_dim = 1024;
  // 0 means "same as in_dim".
  int hidden_dim = 0;
  int out_dim = 1024;
  double dropout_rate = 0.1;
  uint64_t init_seed = 0;

  int resolved_hidden_dim() const { return hidden_dim > 0 ? hidden_dim : in_dim; }
  void Validate() const;
};

// One modality's head: linear -> GeLU -> dropout -> linear -> L2 normalize.
// Biases are stored as 1 x n matrices so every trainable is a Matrix.
struct ProjectionHead {
  Matrix w1;  // hidden x in
  Matrix b1;  // 1 x hidden
  Matrix w2;  // out x hidden
  Matrix b2;  // 1 x out

  int in_dim() const { return static_cast<int>(w1.cols()); }
  int hidden_dim() const { return static_cast<int>(w1.rows()); }
  int out_dim() const { return static_cast<int>(w2.rows()); }
  double dropout_rate = 0.0;

  std::vector<Matrix*> parameters() { return {&w1, &b1, &w2, &b2}; }
  std::vector<const Matrix*> parameters() const { return {&w1, &b1, &w2, &b2}; }
};

enum class Mode { kTrain, kEval };

struct ForwardCache {
  Matrix input;
  Matrix pre_activation;
  Matrix dropout_mask;  // empty when dropout was not applied
  Matrix hidden;        // post-GeLU, post-dropout
  Normalized output;
};

struct ForwardResult {
  Matrix embeddings;
  ForwardCache cache;
};

struct HeadGradients {
  Matrix w1, b1, w2, b2;
  Matrix input;

  std::vector<const Matrix*> parameters() const { return {&w1, &b1, &w2, &b2}; }
};

// Fan-in scaled uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases.
ProjectionHead InitHead(const ModelConfig& config);

// In train mode with a positive dropout rate, `dropout_rng` must be non-null;
// kept hidden units are scaled by 1 / (1 - rate).
ForwardResult Forward(const ProjectionHead& head, const Matrix& x, Mode mode,
                      Rng* dropout_rng = nullptr);

// Eval-mode embeddings only.
Matrix Embed(const ProjectionHead& head, const Matrix& x);

HeadGradients Backward(const ProjectionHead& head, const ForwardCache& cache,
                       const Matrix& grad_embeddings);

// Checkpoint format: "XMPH" magic, u32 version, u32 in/hidden/out dims,
// f64 dropout rate, then W1, b1, W2, b2 as little-endian f64, row-major.
void SaveHead(const ProjectionHead& head, const std::filesystem::path& path);
ProjectionHead LoadHead(const std::filesystem::path& path);
// Also checks the stored dims against `expected`.
ProjectionHead LoadHead(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace xmodal

#endif  // XMODAL_PROJECTION_H_
