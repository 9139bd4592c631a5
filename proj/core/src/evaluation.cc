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

#include "xmodal/evaluation.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

namespace xmodal {
namespace {

std::vector<int> SortByDistance(const Eigen::Ref<const RowVector>& distances) {
  std::vector<int> order(static_cast<std::size_t>(distances.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return distances(a) < distances(b); });
  return order;
}

Histogram MakeHistogram(const std::vector<double>& values, double upper, int bins) {
  Histogram h{0.0, upper, std::vector<int64_t>(static_cast<std::size_t>(bins), 0)};
  for (double v : values) {
    int bin = upper > 0.0 ? static_cast<int>(v / upper * bins) : 0;
    bin = std::clamp(bin, 0, bins - 1);
    ++h.counts[static_cast<std::size_t>(bin)];
  }
  return h;
}

}  // namespace

double AveragePrecision(std::span<const int> relevance, int relevant_count) {
  if (relevant_count <= 0) throw Error("query with no relevant items");
  long double sum = 0.0L;
  int hits = 0;
  for (std::size_t r = 0; r < relevance.size(); ++r) {
    if (relevance[r] != 0) {
      ++hits;
      sum += static_cast<long double>(hits) / static_cast<long double>(r + 1);
    }
  }
  return static_cast<double>(sum / relevant_count);
}

std::vector<int> RankGallery(const Eigen::Ref<const RowVector>& query, const Matrix& gallery) {
  if (gallery.rows() == 0) throw Error("empty gallery");
  if (gallery.cols() != query.size()) throw Error("query and gallery dims differ");
  RowVector d(gallery.rows());
  for (Eigen::Index j = 0; j < gallery.rows(); ++j) d(j) = (gallery.row(j) - query).squaredNorm();
  return SortByDistance(d);
}

DirectionReport MeanAveragePrecision(const Matrix& queries,
                                     const std::vector<int>& query_labels,
                                     const Matrix& gallery,
                                     const std::vector<int>& gallery_labels) {
  if (queries.rows() != static_cast<Eigen::Index>(query_labels.size()) ||
      gallery.rows() != static_cast<Eigen::Index>(gallery_labels.size())) {
    throw Error("embedding rows do not match label counts");
  }
  if (queries.rows() == 0) throw Error("no queries");
  if (gallery.rows() == 0) throw Error("empty gallery");
  if (queries.cols() != gallery.cols()) throw Error("query and gallery dims differ");

  std::map<int, int> gallery_class_counts;
  for (int y : gallery_labels) ++gallery_class_counts[y];

  const Matrix distances = PairwiseSquaredDistances(queries, gallery);
  DirectionReport report;
  report.per_query_ap.reserve(query_labels.size());
  std::vector<int> relevance(gallery_labels.size());
  double sum = 0.0;
  for (Eigen::Index q = 0; q < queries.rows(); ++q) {
    const int label = query_labels[static_cast<std::size_t>(q)];
    const auto found = gallery_class_counts.find(label);
    if (found == gallery_class_counts.end()) {
      throw Error("query class " + std::to_string(label) + " absent from gallery");
    }
    const std::vector<int> order = SortByDistance(distances.row(q));
    for (std::size_t r = 0; r < order.size(); ++r) {
      relevance[r] = gallery_labels[static_cast<std::size_t>(order[r])] == label;
    }
    const double ap = AveragePrecision(relevance, found->second);
    report.per_query_ap.push_back(ap);
    sum += ap;
  }
  report.map = sum / static_cast<double>(queries.rows());
  return report;
}

RetrievalReport EvaluateRetrieval(const Matrix& image_embeddings,
                                  const std::vector<int>& image_labels,
                                  const Matrix& text_embeddings,
                                  const std::vector<int>& text_labels) {
  DirectionReport i2t =
      MeanAveragePrecision(image_embeddings, image_labels, text_embeddings, text_labels);
  DirectionReport t2i =
      MeanAveragePrecision(text_embeddings, text_labels, image_embeddings, image_labels);
  RetrievalReport report;
  report.map_i2t = i2t.map;
  report.map_t2i = t2i.map;
  report.map_avg = 0.5 * (i2t.map + t2i.map);
  report.per_query_ap_i2t = std::move(i2t.per_query_ap);
  report.per_query_ap_t2i = std::move(t2i.per_query_ap);
  report.image_count = static_cast<int>(image_embeddings.rows());
  report.text_count = static_cast<int>(text_embeddings.rows());
  return report;
}

DistanceDistribution ComputeDistanceDistributions(const Matrix& image_embeddings,
                                                  const std::vector<int>& image_labels,
                                                  const Matrix& text_embeddings,
                                                  const std::vector<int>& text_labels,
                                                  int bins) {
  if (bins < 1) throw Error("histogram needs at least one bin");
  if (image_embeddings.rows() != static_cast<Eigen::Index>(image_labels.size()) ||
      text_embeddings.rows() != static_cast<Eigen::Index>(text_labels.size())) {
    throw Error("embedding rows do not match label counts");
  }
  const Matrix d = PairwiseSquaredDistances(image_embeddings, text_embeddings);
  DistanceDistribution out;
  double upper = 0.0;
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      const bool same = image_labels[static_cast<std::size_t>(i)] ==
                        text_labels[static_cast<std::size_t>(j)];
      (same ? out.intra_class : out.inter_class).push_back(d(i, j));
      upper = std::max(upper, d(i, j));
    }
  }
  out.intra_histogram = MakeHistogram(out.intra_class, upper, bins);
  out.inter_histogram = MakeHistogram(out.inter_class, upper, bins);
  return out;
}

DistanceHeatmap ComputeDistanceHeatmap(int per_class, const Matrix& image_embeddings,
                                       const Matrix& text_embeddings,
                                       const std::vector<int>& labels, uint64_t seed) {
  if (per_class < 1) throw Error("per_class must be >= 1");
  if (image_embeddings.rows() != text_embeddings.rows() ||
      image_embeddings.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw Error("heatmap needs aligned image/text pairs");
  }
  std::map<int, std::vector<int>> by_class;
  for (std::size_t k = 0; k < labels.size(); ++k) by_class[labels[k]].push_back(static_cast<int>(k));

  Rng rng(DeriveSeed(seed, 51));
  DistanceHeatmap h;
  for (auto& [label, members] : by_class) {
    if (static_cast<int>(members.size()) < per_class) {
      throw Error("class " + std::to_string(label) + " has fewer than " +
                  std::to_string(per_class) + " pairs");
    }
    std::shuffle(members.begin(), members.end(), rng);
    std::vector<int> picked(members.begin(), members.begin() + per_class);
    std::sort(picked.begin(), picked.end());
    for (int k : picked) {
      h.pair_indices.push_back(k);
      h.text_labels.push_back(label);
      h.image_labels.push_back(label);
    }
  }
  const Eigen::Index m = static_cast<Eigen::Index>(h.pair_indices.size());
  Matrix images(m, image_embeddings.cols());
  Matrix texts(m, text_embeddings.cols());
  for (Eigen::Index r = 0; r < m; ++r) {
    images.row(r) = image_embeddings.row(h.pair_indices[static_cast<std::size_t>(r)]);
    texts.row(r) = text_embeddings.row(h.pair_indices[static_cast<std::size_t>(r)]);
  }
  h.distances = PairwiseSquaredDistances(texts, images);
  return h;
}

void WriteHistogramCsv(const DistanceDistribution& dist, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  out << "bin,lower,upper,intra_count,inter_count\n";
  const Histogram& intra = dist.intra_histogram;
  const std::size_t bins = intra.counts.size();
  const double width = (intra.upper - intra.lower) / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out << b << ',' << intra.lower + width * static_cast<double>(b) << ','
        << intra.lower + width * static_cast<double>(b + 1) << ',' << intra.counts[b] << ','
        << dist.inter_histogram.counts[b] << '\n';
  }
}

void WriteHeatmapCsv(const DistanceHeatmap& heatmap, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  out << "text_label\\image_label";
  for (int y : heatmap.image_labels) out << ',' << y;
  out << '\n';
  for (Eigen::Index r = 0; r < heatmap.distances.rows(); ++r) {
    out << heatmap.text_labels[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < heatmap.distances.cols(); ++c) out << ',' << heatmap.distances(r, c);
    out << '\n';
  }
}

}  // namespace xmodal
