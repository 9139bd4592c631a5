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

#include "xmodal/numeric.h"

#include <cmath>

#include <gtest/gtest.h>

#include "test_support.h"

namespace xmodal {
namespace {

using testing::RandomUnitRows;

TEST(GeluTest, KnownValues) {
  Matrix x(1, 3);
  x << 0.0, 10.0, 1.0;
  const Matrix y = Gelu(x);
  EXPECT_EQ(y(0, 0), 0.0);
  EXPECT_NEAR(y(0, 1), 10.0, 1e-6);
  // 1 * Phi(1) from erf directly.
  EXPECT_NEAR(y(0, 2), 0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0))), 1e-15);
  EXPECT_NEAR(y(0, 2), 0.841345, 1e-6);
}

TEST(GeluTest, BackwardMatchesFiniteDifferences) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = NormalMatrix(3, 4, 2.0, rng);
    const Matrix w = NormalMatrix(3, 4, 1.0, rng);
    auto f = [&](const Vector& p) {
      Matrix m = Eigen::Map<const Matrix>(p.data(), 3, 4);
      return Gelu(m).cwiseProduct(w).sum();
    };
    const Matrix g = GeluBackward(x, w);
    const GradCheckReport r =
        FiniteDifferenceCheck(f, Eigen::Map<const Vector>(x.data(), 12),
                              Eigen::Map<const Vector>(g.data(), 12));
    EXPECT_TRUE(r.passed) << r.max_relative_error;
  }
}

TEST(L2NormalizeTest, Examples) {
  Matrix a(1, 3);
  a << 1, 0, 0;
  EXPECT_EQ(L2Normalize(a).rows, a);
  Matrix b(1, 2);
  b << 3, 4;
  const Matrix nb = L2Normalize(b).rows;
  EXPECT_DOUBLE_EQ(nb(0, 0), 0.6);
  EXPECT_DOUBLE_EQ(nb(0, 1), 0.8);
  EXPECT_THROW(L2Normalize(Matrix::Zero(2, 3)), Error);
  try {
    L2Normalize(Matrix::Zero(1, 3));
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("degenerate embedding"), std::string::npos);
  }
}

TEST(L2NormalizeTest, RowsAreUnitNorm) {
  Rng rng(4);
  const Matrix x = NormalMatrix(50, 7, 3.0, rng);
  const Normalized n = L2Normalize(x);
  for (int i = 0; i < 50; ++i) EXPECT_NEAR(n.rows.row(i).norm(), 1.0, 1e-9);
}

TEST(L2NormalizeTest, BackwardMatchesFiniteDifferences) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = NormalMatrix(4, 5, 1.0, rng);
    const Matrix w = NormalMatrix(4, 5, 1.0, rng);
    auto f = [&](const Vector& p) {
      return L2Normalize(Eigen::Map<const Matrix>(p.data(), 4, 5)).rows.cwiseProduct(w).sum();
    };
    const Matrix g = L2NormalizeBackward(L2Normalize(x), w);
    const GradCheckReport r =
        FiniteDifferenceCheck(f, Eigen::Map<const Vector>(x.data(), 20),
                              Eigen::Map<const Vector>(g.data(), 20));
    EXPECT_TRUE(r.passed) << r.max_relative_error;
  }
}

TEST(SquaredEuclideanTest, Examples) {
  RowVector a(2), b(2);
  a << 1, 0;
  b << 0, 1;
  EXPECT_EQ(SquaredEuclidean(a, a), 0.0);
  EXPECT_EQ(SquaredEuclidean(a, b), 2.0);
  EXPECT_THROW(SquaredEuclidean(a, RowVector::Zero(3)), Error);
}

TEST(SquaredEuclideanTest, UnitRowsMatchCosineIdentity) {
  Rng rng(6);
  const Matrix u = RandomUnitRows(30, 8, rng);
  for (int i = 0; i + 1 < 30; ++i) {
    const double cos = u.row(i).dot(u.row(i + 1));
    EXPECT_NEAR(SquaredEuclidean(u.row(i), u.row(i + 1)), 2.0 - 2.0 * cos, 1e-12);
  }
}

TEST(PairwiseDistanceTest, HandInstance) {
  Matrix a(2, 2), b(2, 2);
  a << 1, 0, 0, 2;
  b << 0, 0, 1, 1;
  const Matrix d = PairwiseSquaredDistances(a, b);
  EXPECT_EQ(d(0, 0), 1.0);
  EXPECT_EQ(d(0, 1), 1.0);
  EXPECT_EQ(d(1, 0), 4.0);
  EXPECT_EQ(d(1, 1), 2.0);
}

TEST(PairwiseDistanceTest, MatchesScalarLoop) {
  Rng rng(7);
  const Matrix a = NormalMatrix(50, 6, 1.0, rng);
  const Matrix b = NormalMatrix(30, 6, 1.0, rng);
  const Matrix d = PairwiseSquaredDistances(a, b);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    for (int j = 0; j < 30; ++j) {
      double s = 0.0;
      for (int k = 0; k < 6; ++k) s += (a(i, k) - b(j, k)) * (a(i, k) - b(j, k));
      worst = std::max(worst, std::abs(d(i, j) - s));
    }
  }
  EXPECT_LT(worst, 1e-9);
  EXPECT_THROW(PairwiseSquaredDistances(a, Matrix::Zero(2, 5)), Error);
}

TEST(PairwiseDistanceTest, SymmetricWithZeroDiagonal) {
  Rng rng(8);
  const Matrix a = NormalMatrix(25, 9, 1.0, rng);
  const Matrix d = PairwiseSquaredDistances(a, a);
  for (int i = 0; i < 25; ++i) {
    EXPECT_EQ(d(i, i), 0.0);
    for (int j = 0; j < 25; ++j) EXPECT_EQ(d(i, j), d(j, i));
  }
}

TEST(FiniteDifferenceCheckTest, QuadraticPassesTightTolerance) {
  Rng rng(9);
  const Matrix p = NormalMatrix(10, 1, 1.0, rng);
  const Vector x = Eigen::Map<const Vector>(p.data(), 10);
  GradCheckOptions opts;
  opts.tolerance = 1e-6;
  const GradCheckReport r =
      FiniteDifferenceCheck([](const Vector& v) { return v.squaredNorm(); }, x, 2.0 * x, opts);
  EXPECT_TRUE(r.passed);
  EXPECT_LE(r.max_relative_error, 1e-6);
}

TEST(FiniteDifferenceCheckTest, PlantedDefectFails) {
  Vector x(3);
  x << 0.5, -1.0, 2.0;
  const GradCheckReport r =
      FiniteDifferenceCheck([](const Vector& v) { return v.squaredNorm(); }, x, 2.02 * x);
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.max_relative_error, 1e-4);
  EXPECT_EQ(r.passed, r.max_relative_error <= 1e-4);
}

TEST(FiniteDifferenceCheckTest, SkipMaskAndNonFinite) {
  Vector x(2);
  x << 1.0, 1.0;
  Vector wrong(2);
  wrong << 2.0, 100.0;
  GradCheckOptions opts;
  opts.skip = {false, true};
  EXPECT_TRUE(FiniteDifferenceCheck([](const Vector& v) { return v.squaredNorm(); }, x, wrong, opts).passed);
  EXPECT_THROW(FiniteDifferenceCheck([](const Vector&) { return std::nan(""); }, x, wrong), Error);
}

TEST(DeriveSeedTest, DistinctTagsGiveDistinctStreams) {
  EXPECT_EQ(DeriveSeed(1, 2), DeriveSeed(1, 2));
  EXPECT_NE(DeriveSeed(1, 2), DeriveSeed(1, 3));
  EXPECT_NE(DeriveSeed(1, 2), DeriveSeed(2, 2));
}

TEST(FlattenTest, RoundTrip) {
  Rng rng(10);
  Matrix a = NormalMatrix(2, 3, 1.0, rng);
  Matrix b = NormalMatrix(1, 4, 1.0, rng);
  const Vector flat = Flatten({&a, &b});
  ASSERT_EQ(flat.size(), 10);
  Matrix a2 = Matrix::Zero(2, 3), b2 = Matrix::Zero(1, 4);
  Unflatten(flat, {&a2, &b2});
  EXPECT_EQ(a, a2);
  EXPECT_EQ(b, b2);
}

}  // namespace
}  // namespace xmodal
