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

#ifndef XMODAL_OBJECTIVES_H_
#define XMODAL_OBJECTIVES_H_

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xmodal/numeric.h"

namespace xmodal {

// Pair-wise objectives compare image/text embeddings with each other.
enum class PairWiseKind { kModalityInvariant, kContrastive, kTriplet };
// Class-wise objectives compare embeddings with shared class proxies.
enum class ClassWiseKind { kLinearRegression, kCrossEntropy, kPrototypeContrastive };

std::string_view ShortName(PairWiseKind kind);   // ML, CL, TL
std::string_view ShortName(ClassWiseKind kind);  // LRL, CEL, PCL

inline constexpr PairWiseKind kAllPairWise[] = {
    PairWiseKind::kModalityInvariant, PairWiseKind::kContrastive, PairWiseKind::kTriplet};
inline constexpr ClassWiseKind kAllClassWise[] = {
    ClassWiseKind::kLinearRegression, ClassWiseKind::kCrossEntropy,
    ClassWiseKind::kPrototypeContrastive};

// A single objective ("PCL", "TL") or a hybrid ("PCL+TL") whose pair-wise
// term is weighted by gamma.
struct ObjectiveConfig {
  std::optional<ClassWiseKind> class_wise;
  std::optional<PairWiseKind> pair_wise;
  double gamma = 0.0;
  double margin = 0.2;
  double lambda = 1.0;

  bool is_hybrid() const { return class_wise.has_value() && pair_wise.has_value(); }
  std::string Name() const;
  void Validate() const;
  // Accepts "ML", "CL", "TL", "LRL", "CEL", "PCL" and "<class>+<pair>".
  static ObjectiveConfig Parse(std::string_view name);
};

// Embeddings for one step. The first `pair_count` rows of `images` and
// `texts` are aligned pairs; rows after that are unpaired extras.
struct Batch {
  Matrix images;
  Matrix texts;
  std::vector<int> image_labels;
  std::vector<int> text_labels;
  int pair_count = 0;

  static Batch Paired(Matrix images, Matrix texts, std::vector<int> labels);
  void Validate() const;
};

// Trainable class proxies. Layout of `weight` depends on the kind:
//   LRL: Q, dim x C        CEL: W, dim x C (plus bias 1 x C)
//   PCL: prototypes P, C x dim
struct ClassProxyParams {
  ClassWiseKind kind = ClassWiseKind::kPrototypeContrastive;
  Matrix weight;
  Matrix bias;
  double lambda = 1.0;

  int class_count() const;
  int dim() const;
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
};

// LRL/CEL: fan-in scaled uniform weights, zero bias. PCL: prototypes drawn
// uniformly on the unit sphere.
ClassProxyParams InitClassProxies(ClassWiseKind kind, int dim, int classes,
                                  double lambda, uint64_t seed);

struct LossOutput {
  double value = 0.0;
  Matrix grad_images;
  Matrix grad_texts;
  Matrix grad_weight;  // matches ClassProxyParams::weight, empty for pair-wise
  Matrix grad_bias;
  // Set when a term was defined as zero (no valid triplet, empty modality).
  bool warning = false;
  std::string warning_message;
  // Smallest |hinge argument| seen; +inf when the loss has no hinge.
  double min_hinge_gap = std::numeric_limits<double>::infinity();
};

LossOutput ModalityInvariantLoss(const Batch& batch);
LossOutput ContrastiveLoss(const Batch& batch, double margin);
LossOutput TripletLoss(const Batch& batch, double margin);
LossOutput PairWiseLoss(const Batch& batch, PairWiseKind kind, double margin);

// Class-wise losses over the paired rows: (1/n) sum_i (image_i + text_i).
LossOutput LinearRegressionLoss(const Batch& batch, const ClassProxyParams& params);
LossOutput CrossEntropyLoss(const Batch& batch, const ClassProxyParams& params);
LossOutput PrototypeContrastiveLoss(const Batch& batch, const ClassProxyParams& params);
LossOutput ClassWiseLoss(const Batch& batch, const ClassProxyParams& params);

// Class-wise loss over every row of each modality (paired and unpaired),
// each modality normalized by its own row count.
LossOutput PerSampleClassWise(const Batch& batch, const ClassProxyParams& params);

// class-wise + gamma * pair-wise over the paired rows. gamma == 0 skips the
// pair-wise term entirely.
LossOutput HybridLoss(const Batch& batch, const ObjectiveConfig& config,
                      const ClassProxyParams& params);

// Entry point used by the trainer. With `route_unpaired` the class-wise
// term sees every row; pair-wise terms only ever see paired rows.
LossOutput EvaluateObjective(const Batch& batch, const ObjectiveConfig& config,
                             const ClassProxyParams* params, bool route_unpaired);

// "XMOP" magic, u32 version, u32 kind, u32 rows/cols of weight, u32 bias
// cols, f64 lambda, then weight and bias as little-endian f64.
void SaveClassProxies(const ClassProxyParams& params, const std::filesystem::path& path);
ClassProxyParams LoadClassProxies(const std::filesystem::path& path);

}  // namespace xmodal

#endif  // XMODAL_OBJECTIVES_H_
