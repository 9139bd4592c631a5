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

#ifndef XMODAL_DATAIO_H_
#define XMODAL_DATAIO_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "xmodal/numeric.h"

namespace xmodal {

enum class Modality { kImage, kText };

std::string_view ModalityName(Modality m);
Modality ParseModality(std::string_view name);

// Labeled encoder outputs for one modality. Row k of `vectors` carries
// label `labels[k]`.
struct FeatureBank {
  Modality modality = Modality::kImage;
  int dim = 0;
  int class_count = 0;
  Matrix vectors;
  std::vector<int> labels;

  int count() const { return static_cast<int>(labels.size()); }
  // Throws Error on a broken invariant. An empty bank is rejected unless
  // `allow_empty` is set (used for the zero-percent imbalance settings).
  void Validate(bool allow_empty = false) const;
};

struct PairIndex {
  int image = 0;
  int text = 0;
  int label = 0;

  bool operator==(const PairIndex&) const = default;
};

struct PairedDataset {
  FeatureBank images;
  FeatureBank texts;
  std::vector<PairIndex> pairing;

  int class_count() const { return images.class_count; }
  // Balanced: both banks have |pairing| rows and pairing[k] == (k, k, y_k).
  bool IsComplete() const;
  void Validate(bool allow_empty_modality = false) const;
};

// Builds a complete dataset from two aligned banks.
PairedDataset MakeCompleteDataset(FeatureBank images, FeatureBank texts);

struct ImbalanceSpec {
  double image_keep_fraction = 1.0;
  double text_keep_fraction = 1.0;
  uint64_t seed = 0;
  // Keep ceil(f * n_c) per class instead of ceil(f * count) globally.
  bool stratified = false;
  bool allow_empty_modality = false;
};

// ceil(fraction * count), robust to representation error in the product.
int KeepCount(double fraction, int count);

// Subsamples each modality uniformly without replacement. Surviving
// unpaired samples stay in their bank; the pairing keeps only pairs whose
// image and text both survive.
PairedDataset ApplyImbalance(const PairedDataset& ds, const ImbalanceSpec& spec);

struct SyntheticSpec {
  int classes = 10;
  int pairs_per_class = 200;
  int dim = 64;
  // Seeds the class centers and the image-to-text rotation.
  uint64_t rotation_seed = 0;
  // Seeds the per-sample noise; vary it to draw a test set from the same
  // class geometry.
  uint64_t sample_seed = 0;
  double noise_sigma = 0.1;
};

// Orthonormal class centers; images are center + noise, texts are
// (rotation * center) + noise. Values are rounded to float precision so
// they survive an f32 round trip unchanged.
PairedDataset GenerateSynthetic(const SyntheticSpec& spec);

// Class-stratified split of a complete dataset into (train, validation).
std::pair<PairedDataset, PairedDataset> SplitTrainValidation(
    const PairedDataset& ds, double val_fraction, uint64_t seed);

// Rows `indices` of `bank`, in order.
FeatureBank SelectRows(const FeatureBank& bank, const std::vector<int>& indices);

// Manifest + payload I/O. The manifest is JSON:
//   {"modality", "count", "dim", "dtype": "f32le"|"f64le"|"csv",
//    "vectors": <path>, "labels": <path>, "classes": <optional C>}
// Payload paths are resolved relative to the manifest's directory.
FeatureBank LoadFeatureBank(const std::filesystem::path& manifest_path);

// Writes <dir>/<stem>.json, <stem>.<f32|f64> and <stem>.labels.
std::filesystem::path WriteFeatureBank(const FeatureBank& bank,
                                       const std::filesystem::path& dir,
                                       const std::string& stem,
                                       const std::string& dtype = "f32le");

}  // namespace xmodal

#endif  // XMODAL_DATAIO_H_
