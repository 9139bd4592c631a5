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
#include <numeric>

#include <gtest/gtest.h>

#include "test_support.h"

namespace xmodal {
namespace {

using testing::RandomLabels;
using testing::RandomUnitRows;

// Brute-force AP straight from the definition, with its own ranking.
double OracleAp(const Matrix& gallery, const std::vector<int>& glabels, const RowVector& q, int qlabel) {
  std::vector<std::pair<double, int>> order;
  for (Eigen::Index j = 0; j < gallery.rows(); ++j) {
    order.emplace_back((gallery.row(j) - q).squaredNorm(), static_cast<int>(j));
  }
  std::sort(order.begin(), order.end());
  double hits = 0.0, sum = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (glabels[order[r].second] == qlabel) {
      hits += 1.0;
      sum += hits / static_cast<double>(r + 1);
    }
  }
  return sum / hits;
}

double OracleMap(const Matrix& q, const std::vector<int>& ql, const Matrix& g, const std::vector<int>& gl) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < q.rows(); ++i) s += OracleAp(g, gl, q.row(i), ql[i]);
  return s / static_cast<double>(q.rows());
}

TEST(AveragePrecisionTest, HandExamples) {
  const std::vector<int> a = {1, 1, 0}, b = {0, 1}, c = {1, 0, 1};
  EXPECT_EQ(AveragePrecision(a, 2), 1.0);
  EXPECT_EQ(AveragePrecision(b, 1), 0.5);
  EXPECT_EQ(AveragePrecision(c, 2), 5.0 / 6.0);
  const std::vector<int> none = {0, 0};
  try {
    AveragePrecision(none, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("query with no relevant items"), std::string::npos);
  }
}

TEST(AveragePrecisionTest, InvariantBelowLastRelevant) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> rel(20);
    for (int& r : rel) r = std::uniform_int_distribution<int>(0, 1)(rng);
    rel[0] = 1;
    const int t = std::accumulate(rel.begin(), rel.end(), 0);
    const int last = static_cast<int>(std::find(rel.rbegin(), rel.rend(), 1).base() - rel.begin());
    std::vector<int> shuffled = rel;
    std::shuffle(shuffled.begin() + last, shuffled.end(), rng);
    EXPECT_EQ(AveragePrecision(rel, t), AveragePrecision(shuffled, t));
  }
}

TEST(RankGalleryTest, SelfFirstAndStableTies) {
  Rng rng(2);
  const Matrix g = RandomUnitRows(10, 4, rng);
  EXPECT_EQ(RankGallery(g.row(6), g)[0], 6);
  Matrix tie(3, 2);
  tie << 0, 1, 1, 0, 0, 1;
  RowVector q(2);
  q << 1, 1;
  const std::vector<int> r = RankGallery(q, tie);
  EXPECT_EQ(r, (std::vector<int>{0, 1, 2}));
  EXPECT_THROW(RankGallery(q, Matrix(0, 2)), Error);
}

TEST(RankGalleryTest, MatchesBruteForceSort) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix g = RandomUnitRows(20, 5, rng);
    const Matrix q = RandomUnitRows(1, 5, rng);
    std::vector<std::pair<double, int>> order;
    for (int j = 0; j < 20; ++j) order.emplace_back((g.row(j) - q.row(0)).squaredNorm(), j);
    std::sort(order.begin(), order.end());
    const std::vector<int> r = RankGallery(q.row(0), g);
    for (int j = 0; j < 20; ++j) EXPECT_EQ(r[j], order[j].second);
  }
}

TEST(RankGalleryTest, CosineOrderEquivalentOnUnitSphere) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix g = RandomUnitRows(30, 6, rng);
    const Matrix q = RandomUnitRows(1, 6, rng);
    std::vector<int> by_cos(30);
    std::iota(by_cos.begin(), by_cos.end(), 0);
    const Eigen::VectorXd cos = g * q.row(0).transpose();
    std::stable_sort(by_cos.begin(), by_cos.end(), [&](int a, int b) { return cos(a) > cos(b); });
    EXPECT_EQ(RankGallery(q.row(0), g), by_cos);
  }
}

TEST(MeanAveragePrecisionTest, SelfMatchDistinctClasses) {
  Rng rng(5);
  const Matrix g = RandomUnitRows(8, 4, rng);
  std::vector<int> labels(8);
  std::iota(labels.begin(), labels.end(), 0);
  const DirectionReport r = MeanAveragePrecision(g, labels, g, labels);
  EXPECT_EQ(r.map, 1.0);
  for (double ap : r.per_query_ap) EXPECT_EQ(ap, 1.0);
}

TEST(MeanAveragePrecisionTest, HandInstanceMatchesEnumeration) {
  Matrix q(5, 2), g(5, 2);
  q << 1, 0, 0.8, 0.6, 0, 1, -1, 0, 0.6, -0.8;
  g << 0.6, 0.8, 1, 0, -0.8, 0.6, 0, -1, 0.8, -0.6;
  const std::vector<int> ql = {0, 0, 1, 1, 0}, gl = {1, 0, 1, 0, 0};
  EXPECT_NEAR(MeanAveragePrecision(q, ql, g, gl).map, OracleMap(q, ql, g, gl), 1e-15);
}

TEST(MeanAveragePrecisionTest, RandomInstancesMatchOracle) {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = std::uniform_int_distribution<int>(5, 50)(rng);
    const int classes = std::uniform_int_distribution<int>(1, 5)(rng);
    const Matrix g = RandomUnitRows(n, 3, rng);
    const Matrix q = RandomUnitRows(n, 3, rng);
    const std::vector<int> gl = RandomLabels(n, classes, rng);
    std::vector<int> ql = gl;
    std::shuffle(ql.begin(), ql.end(), rng);
    EXPECT_NEAR(MeanAveragePrecision(q, ql, g, gl).map, OracleMap(q, ql, g, gl), 1e-12);
  }
}

TEST(MeanAveragePrecisionTest, PerfectRankingIsOne) {
  Matrix g(4, 2);
  g << 1, 0, 1, 0, 0, 1, 0, 1;
  const std::vector<int> l = {0, 0, 1, 1};
  EXPECT_EQ(MeanAveragePrecision(g, l, g, l).map, 1.0);
}

TEST(MeanAveragePrecisionTest, AbsentClassIsAnError) {
  Matrix g = Matrix::Identity(2, 2);
  try {
    MeanAveragePrecision(g, {0, 2}, g, {0, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("absent from gallery"), std::string::npos);
  }
}

// Expected AP of a uniformly random ranking with `relevant` hits among `n`.
double RandomRankingExpectation(const std::vector<int>& labels, int trials, Rng& rng) {
  double total = 0.0;
  for (int t = 0; t < trials; ++t) {
    const int query_label = labels[t % labels.size()];
    std::vector<int> order(labels.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double hits = 0.0, sum = 0.0;
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (labels[order[r]] == query_label) {
        hits += 1.0;
        sum += hits / static_cast<double>(r + 1);
      }
    }
    total += sum / hits;
  }
  return total / trials;
}

TEST(MeanAveragePrecisionTest, RandomEmbeddingsNearRandomRankingExpectation) {
  Rng rng(7);
  std::vector<int> labels;
  for (int c = 0; c < 10; ++c)
    for (int k = 0; k < 30; ++k) labels.push_back(c);
  const double expected = RandomRankingExpectation(labels, 20000, rng);
  const Matrix v = RandomUnitRows(300, 16, rng);
  const Matrix t = RandomUnitRows(300, 16, rng);
  const RetrievalReport r = EvaluateRetrieval(v, labels, t, labels);
  EXPECT_NEAR(r.map_avg, expected, 0.1);
  EXPECT_NEAR(r.map_avg, 0.5 * (r.map_i2t + r.map_t2i), 1e-12);
  for (double ap : r.per_query_ap_i2t) {
    EXPECT_GE(ap, 0.0);
    EXPECT_LE(ap, 1.0);
  }
}

TEST(DistanceDistributionTest, CountsFollowClassSizes) {
  const std::vector<int> sizes = {26, 28, 32, 37, 38, 46, 56, 59, 65, 75};
  std::vector<int> labels;
  for (int c = 0; c < 10; ++c) labels.insert(labels.end(), sizes[c], c);
  ASSERT_EQ(labels.size(), 462u);
  Rng rng(8);
  const Matrix v = RandomUnitRows(462, 8, rng);
  const Matrix t = RandomUnitRows(462, 8, rng);
  const DistanceDistribution d = ComputeDistanceDistributions(v, labels, t, labels);
  EXPECT_EQ(d.intra_class.size(), 23880u);
  EXPECT_EQ(d.inter_class.size(), 189564u);
  EXPECT_EQ(d.intra_class.size() + d.inter_class.size(), 213444u);
  const auto total = [](const Histogram& h) { return std::accumulate(h.counts.begin(), h.counts.end(), int64_t{0}); };
  EXPECT_EQ(total(d.intra_histogram), 23880);
  EXPECT_EQ(total(d.inter_histogram), 189564);
  EXPECT_EQ(d.intra_histogram.counts.size(), 50u);
}

TEST(DistanceDistributionTest, SingleClassHasNoInter) {
  Rng rng(9);
  const Matrix v = RandomUnitRows(4, 3, rng);
  const DistanceDistribution d = ComputeDistanceDistributions(v, {1, 1, 1, 1}, v, {1, 1, 1, 1});
  EXPECT_TRUE(d.inter_class.empty());
  EXPECT_EQ(d.intra_class.size(), 16u);
}

TEST(DistanceDistributionTest, HandInstanceMatchesEnumeration) {
  Matrix v(3, 2), t(3, 2);
  v << 1, 0, 0, 1, -1, 0;
  t << 0, 1, 1, 0, 0, -1;
  const std::vector<int> l = {0, 1, 0};
  const DistanceDistribution d = ComputeDistanceDistributions(v, l, t, l);
  std::vector<double> intra, inter;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      (l[i] == l[j] ? intra : inter).push_back((v.row(i) - t.row(j)).squaredNorm());
  auto sorted = [](std::vector<double> x) { std::sort(x.begin(), x.end()); return x; };
  EXPECT_EQ(sorted(d.intra_class), sorted(intra));
  EXPECT_EQ(sorted(d.inter_class), sorted(inter));
}

TEST(HeatmapTest, ShapeAndOrdering) {
  Rng rng(10);
  std::vector<int> labels;
  for (int c = 0; c < 10; ++c) labels.insert(labels.end(), 7, c);
  const Matrix v = RandomUnitRows(70, 5, rng);
  const Matrix t = RandomUnitRows(70, 5, rng);
  const DistanceHeatmap h = ComputeDistanceHeatmap(2, v, t, labels, 3);
  EXPECT_EQ(h.distances.rows(), 20);
  EXPECT_EQ(h.distances.cols(), 20);
  EXPECT_TRUE(std::is_sorted(h.text_labels.begin(), h.text_labels.end()));
  EXPECT_EQ(h.text_labels, h.image_labels);
  for (int r = 0; r < 20; ++r) EXPECT_EQ(labels[h.pair_indices[r]], h.text_labels[r]);
  const DistanceHeatmap again = ComputeDistanceHeatmap(2, v, t, labels, 3);
  EXPECT_EQ(again.pair_indices, h.pair_indices);
  EXPECT_EQ(again.distances, h.distances);
  EXPECT_THROW(ComputeDistanceHeatmap(8, v, t, labels, 3), Error);
}

TEST(HeatmapTest, BlockDiagonalZerosForClassConstantEmbeddings) {
  std::vector<int> labels;
  for (int c = 0; c < 4; ++c) labels.insert(labels.end(), 3, c);
  Matrix v(12, 4);
  for (int i = 0; i < 12; ++i) v.row(i) = RowVector::Unit(4, labels[i]);
  const DistanceHeatmap h = ComputeDistanceHeatmap(2, v, v, labels, 1);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) EXPECT_EQ(h.distances(r, c), r / 2 == c / 2 ? 0.0 : 2.0);
}

TEST(CsvOutputTest, HistogramAndHeatmapFilesWritten) {
  testing::TempDir dir;
  Rng rng(11);
  const Matrix v = RandomUnitRows(6, 3, rng);
  const std::vector<int> l = {0, 0, 0, 1, 1, 1};
  WriteHistogramCsv(ComputeDistanceDistributions(v, l, v, l, 5), dir.path() / "h.csv");
  WriteHeatmapCsv(ComputeDistanceHeatmap(1, v, v, l, 0), dir.path() / "m.csv");
  std::ifstream h(dir.path() / "h.csv");
  std::string line;
  int lines = 0;
  while (std::getline(h, line)) ++lines;
  EXPECT_EQ(lines, 6);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "m.csv"));
}

}  // namespace
}  // namespace xmodal
