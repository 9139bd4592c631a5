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

#ifndef XMODAL_EVALUATION_H_
#define XMODAL_EVALUATION_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "xmodal/numeric.h"

namespace xmodal {

// AP = (1/T) sum_r P_r * rel_r over a ranked 0/1 relevance list, where
// P_r is the precision of the top r items. Throws when T == 0.
double AveragePrecision(std::span<const int> relevance, int relevant_count);

// Gallery indices sorted by ascending squared Euclidean distance to the
// query; ties keep ascending index order.
std::vector<int> RankGallery(const Eigen::Ref<const RowVector>& query,
                             const Matrix& gallery);

struct DirectionReport {
  double map = 0.0;
  std::vector<double> per_query_ap;
};

// Full-gallery mAP. Relevance is label equality; every query's label must
// occur in the gallery.
DirectionReport MeanAveragePrecision(const Matrix& queries,
                                     const std::vector<int>& query_labels,
                                     const Matrix& gallery,
                                     const std::vector<int>& gallery_labels);

struct RetrievalReport {
  double map_i2t = 0.0;
  double map_t2i = 0.0;
  double map_avg = 0.0;
  std::vector<double> per_query_ap_i2t;
  std::vector<double> per_query_ap_t2i;
  int image_count = 0;
  int text_count = 0;
};

// I2T ranks texts for every image query, T2I ranks images for every text
// query.
RetrievalReport EvaluateRetrieval(const Matrix& image_embeddings,
                                  const std::vector<int>& image_labels,
                                  const Matrix& text_embeddings,
                                  const std::vector<int>& text_labels);

struct Histogram {
  double lower = 0.0;
  double upper = 0.0;
  std::vector<int64_t> counts;
};

struct DistanceDistribution {
  std::vector<double> intra_class;
  std::vector<double> inter_class;
  Histogram intra_histogram;
  Histogram inter_histogram;
};

inline constexpr int kDefaultHistogramBins = 50;

// Every (image, text) squared distance, split by label equality. Both
// histograms share bins spanning [0, max distance].
DistanceDistribution ComputeDistanceDistributions(const Matrix& image_embeddings,
                                                  const std::vector<int>& image_labels,
                                                  const Matrix& text_embeddings,
                                                  const std::vector<int>& text_labels,
                                                  int bins = kDefaultHistogramBins);

struct DistanceHeatmap {
  std::vector<int> text_labels;   // rows
  std::vector<int> image_labels;  // columns
  std::vector<int> pair_indices;  // sampled pair index per row/column
  Matrix distances;               // rows: texts, columns: images
};

// Samples `per_class` aligned pairs from every class (seeded) and returns
// their text-by-image distance matrix ordered by class, then index.
DistanceHeatmap ComputeDistanceHeatmap(int per_class, const Matrix& image_embeddings,
                                       const Matrix& text_embeddings,
                                       const std::vector<int>& labels, uint64_t seed);

void WriteHistogramCsv(const DistanceDistribution& dist, const std::filesystem::path& path);
void WriteHeatmapCsv(const DistanceHeatmap& heatmap, const std::filesystem::path& path);

}  // namespace xmodal

#endif  // XMODAL_EVALUATION_H_
