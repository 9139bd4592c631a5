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

#include "xmodal/projection.h"

#include <cmath>
#include <fstream>
#include <utility>

#include <gtest/gtest.h>

#include "test_support.h"

namespace xmodal {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

ModelConfig Config(int in, int hidden, int out, double dropout, uint64_t seed) {
  ModelConfig c;
  c.in_dim = in;
  c.hidden_dim = hidden;
  c.out_dim = out;
  c.dropout_rate = dropout;
  c.init_seed = seed;
  return c;
}

TEST(InitTest, DeterministicWithZeroBiases) {
  const ModelConfig c = Config(16, 8, 4, 0.1, 7);
  const ProjectionHead a = InitHead(c);
  const ProjectionHead b = InitHead(c);
  EXPECT_EQ(a.w1, b.w1);
  EXPECT_EQ(a.w2, b.w2);
  EXPECT_TRUE(a.b1.isZero(0.0));
  EXPECT_TRUE(a.b2.isZero(0.0));
  EXPECT_EQ(a.w1.rows(), 8);
  EXPECT_EQ(a.w1.cols(), 16);
  EXPECT_EQ(a.w2.rows(), 4);
  EXPECT_NE(InitHead(Config(16, 8, 4, 0.1, 8)).w1, a.w1);
}

TEST(InitTest, HiddenDefaultsToInputDim) {
  const ProjectionHead h = InitHead(Config(12, 0, 5, 0.1, 1));
  EXPECT_EQ(h.hidden_dim(), 12);
}

TEST(InitTest, WeightStddevMatchesFanInUniform) {
  const ProjectionHead h = InitHead(Config(1024, 1024, 8, 0.1, 2));
  const double n = static_cast<double>(h.w1.size());
  const double mean = h.w1.sum() / n;
  const double var = (h.w1.array() - mean).square().sum() / (n - 1);
  // U(-a, a) with a = 1/sqrt(fan_in) has stddev a / sqrt(3).
  const double expected = 1.0 / std::sqrt(1024.0) / std::sqrt(3.0);
  EXPECT_NEAR(std::sqrt(var), expected, 0.05 * expected);
  EXPECT_LE(h.w1.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(1024.0));
}

TEST(ConfigTest, Validation) {
  EXPECT_THROW(Config(0, 4, 4, 0.1, 0).Validate(), Error);
  EXPECT_THROW(Config(4, 4, 4, 1.0, 0).Validate(), Error);
  EXPECT_THROW(Config(4, 4, 4, -0.1, 0).Validate(), Error);
  EXPECT_NO_THROW(Config(4, 4, 4, 0.0, 0).Validate());
}

TEST(ForwardTest, ConstantHeadOutputsBiasDirection) {
  ProjectionHead h = InitHead(Config(6, 5, 3, 0.0, 0));
  h.w1.setZero();
  h.w2.setZero();
  h.b2 << 1, 0, 0;
  Rng rng(1);
  const Matrix out = Embed(h, NormalMatrix(4, 6, 1.0, rng));
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(out(i, 0), 1.0);
    EXPECT_EQ(out(i, 1), 0.0);
    EXPECT_EQ(out(i, 2), 0.0);
  }
}

TEST(ForwardTest, EvalIsDeterministicAndUnitNorm) {
  const ProjectionHead h = InitHead(Config(32, 32, 16, 0.1, 3));
  Rng rng(2);
  const Matrix x = NormalMatrix(4, 32, 1.0, rng);
  const Matrix a = Embed(h, x);
  EXPECT_EQ(a, Embed(h, x));
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(a.row(i).norm(), 1.0, 1e-9);
}

TEST(ForwardTest, Errors) {
  const ProjectionHead h = InitHead(Config(8, 8, 4, 0.5, 3));
  EXPECT_THROW(Embed(h, Matrix::Ones(2, 7)), Error);
  EXPECT_THROW(Forward(h, Matrix::Ones(2, 8), Mode::kTrain, nullptr), Error);
  ProjectionHead zero = h;
  zero.w2.setZero();
  EXPECT_THROW(Embed(zero, Matrix::Ones(2, 8)), Error);
}

TEST(DropoutTest, InvertedScalingPreservesExpectation) {
  const ProjectionHead h = InitHead(Config(8, 6, 4, 0.1, 4));
  Rng rng(5);
  const Matrix x = NormalMatrix(1, 8, 1.0, rng);
  const Matrix eval_hidden = Forward(h, x, Mode::kEval).cache.hidden;
  Matrix sum = Matrix::Zero(1, 6);
  const int masks = 20000;
  for (int k = 0; k < masks; ++k) sum += Forward(h, x, Mode::kTrain, &rng).cache.hidden;
  const Matrix mean = sum / masks;
  for (int j = 0; j < 6; ++j) {
    EXPECT_NEAR(mean(0, j), eval_hidden(0, j), 0.02 * std::abs(eval_hidden(0, j)) + 1e-12);
  }
}

HeadGradients Grad(const ProjectionHead& h, const ForwardCache& cache, const Matrix& w) {
  return Backward(h, cache, w);
}

TEST(BackwardTest, ZeroUpstreamGivesZeroGradients) {
  const ProjectionHead h = InitHead(Config(5, 4, 3, 0.0, 1));
  Rng rng(1);
  const ForwardResult f = Forward(h, NormalMatrix(3, 5, 1.0, rng), Mode::kEval);
  const HeadGradients g = Grad(h, f.cache, Matrix::Zero(3, 3));
  for (const Matrix* m : g.parameters()) EXPECT_TRUE(m->isZero(0.0));
  EXPECT_TRUE(g.input.isZero(0.0));
}

TEST(BackwardTest, AllZeroDropoutMaskBlocksFirstLayer) {
  ProjectionHead h = InitHead(Config(5, 4, 3, 0.5, 1));
  h.b2 << 0.3, -0.2, 0.1;
  Rng rng(1);
  ForwardResult f = Forward(h, NormalMatrix(2, 5, 1.0, rng), Mode::kTrain, &rng);
  // Recompute the forward pass under an all-zero mask.
  f.cache.dropout_mask.setZero();
  f.cache.hidden.setZero();
  f.cache.output = L2Normalize(Matrix(h.b2.replicate(2, 1)));
  const HeadGradients g = Grad(h, f.cache, Matrix::Ones(2, 3));
  EXPECT_TRUE(g.w1.isZero(0.0));
  EXPECT_TRUE(g.b1.isZero(0.0));
  EXPECT_TRUE(g.w2.isZero(0.0));
}

TEST(BackwardTest, ShapeMismatch) {
  const ProjectionHead h = InitHead(Config(5, 4, 3, 0.0, 1));
  const ForwardResult f = Forward(h, Matrix::Ones(2, 5), Mode::kEval);
  EXPECT_THROW(Grad(h, f.cache, Matrix::Ones(2, 4)), Error);
}

// Full head composition (dropout off) against central differences, over all
// parameters and the input.
void CheckHeadGradient(int n, uint64_t seed) {
  ProjectionHead h = InitHead(Config(6, 5, 4, 0.0, seed));
  Rng rng(seed + 100);
  h.b1 = NormalMatrix(1, 5, 0.1, rng);
  h.b2 = NormalMatrix(1, 4, 0.1, rng);
  const Matrix x = NormalMatrix(n, 6, 1.0, rng);
  const Matrix w = NormalMatrix(n, 4, 1.0, rng);
  const HeadGradients g = Grad(h, Forward(h, x, Mode::kEval).cache, w);

  std::vector<const Matrix*> blocks = std::as_const(h).parameters();
  blocks.push_back(&x);
  std::vector<const Matrix*> grads = g.parameters();
  grads.push_back(&g.input);
  auto f = [&](const Vector& p) {
    ProjectionHead probe = h;
    Matrix xp = x;
    std::vector<Matrix*> out = probe.parameters();
    out.push_back(&xp);
    Unflatten(p, out);
    return Embed(probe, xp).cwiseProduct(w).sum();
  };
  const GradCheckReport r = FiniteDifferenceCheck(f, Flatten(blocks), Flatten(grads));
  EXPECT_TRUE(r.passed) << "seed " << seed << " worst " << r.max_relative_error << " at "
                        << r.worst_coordinate;
}

TEST(BackwardTest, SingleSampleGradientCheck) { CheckHeadGradient(1, 0); }

TEST(BackwardTest, RandomBatchGradientChecks) {
  for (uint64_t seed = 1; seed <= 20; ++seed) CheckHeadGradient(4, seed);
}

TEST(BackwardTest, RespectsDropoutMask) {
  ProjectionHead h = InitHead(Config(6, 5, 4, 0.3, 9));
  Rng rng(9);
  const Matrix x = NormalMatrix(3, 6, 1.0, rng);
  const Matrix w = NormalMatrix(3, 4, 1.0, rng);
  const ForwardResult f = Forward(h, x, Mode::kTrain, &rng);
  const HeadGradients g = Grad(h, f.cache, w);
  // Freeze the mask and differentiate the masked function.
  auto fn = [&](const Vector& p) {
    ProjectionHead probe = h;
    Unflatten(p, probe.parameters());
    const Matrix pre = (x * probe.w1.transpose()).rowwise() + probe.b1.row(0);
    const Matrix hidden = Gelu(pre).cwiseProduct(f.cache.dropout_mask);
    const Matrix z = (hidden * probe.w2.transpose()).rowwise() + probe.b2.row(0);
    return L2Normalize(z).rows.cwiseProduct(w).sum();
  };
  const ProjectionHead& ch = h;
  const GradCheckReport r =
      FiniteDifferenceCheck(fn, Flatten(ch.parameters()), Flatten(g.parameters()));
  EXPECT_TRUE(r.passed) << r.max_relative_error;
}

TEST(CheckpointTest, RoundTripIsBitExact) {
  TempDir dir;
  const ProjectionHead h = InitHead(Config(7, 5, 3, 0.25, 4));
  SaveHead(h, dir.path() / "h.bin");
  const ProjectionHead l = LoadHead(dir.path() / "h.bin");
  EXPECT_EQ(l.w1, h.w1);
  EXPECT_EQ(l.b1, h.b1);
  EXPECT_EQ(l.w2, h.w2);
  EXPECT_EQ(l.b2, h.b2);
  EXPECT_EQ(l.dropout_rate, 0.25);
}

TEST(CheckpointTest, TamperedHeaderIsRejected) {
  TempDir dir;
  const fs::path p = dir.path() / "h.bin";
  SaveHead(InitHead(Config(7, 5, 3, 0.1, 4)), p);
  {
    std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const uint32_t in_dim = 8;
    f.write(reinterpret_cast<const char*>(&in_dim), 4);
  }
  EXPECT_THROW(LoadHead(p), Error);
  {
    std::ofstream f(dir.path() / "junk.bin", std::ios::binary);
    f << "JUNKJUNKJUNK";
  }
  EXPECT_THROW(LoadHead(dir.path() / "junk.bin"), Error);
}

TEST(CheckpointTest, OutDimMismatch) {
  TempDir dir;
  const fs::path p = dir.path() / "h.bin";
  SaveHead(InitHead(Config(8, 8, 256, 0.1, 4)), p);
  try {
    LoadHead(p, Config(8, 8, 1024, 0.1, 4));
    FAIL() << "expected out_dim mismatch";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("out_dim mismatch"), std::string::npos);
  }
  EXPECT_NO_THROW(LoadHead(p, Config(8, 8, 256, 0.1, 0)));
}

}  // namespace
}  // namespace xmodal
