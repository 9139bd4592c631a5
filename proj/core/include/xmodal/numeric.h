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

#ifndef XMODAL_NUMERIC_H_
#define XMODAL_NUMERIC_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace xmodal {

// Dense row-major matrix; all arithmetic is carried out in double precision
// regardless of how features are stored on disk.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

using Rng = std::mt19937_64;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Derives an independent stream seed from a base seed and a tag (splitmix64).
uint64_t DeriveSeed(uint64_t base, uint64_t tag);

// Standard normal CDF via erfc.
double GaussianCdf(double x);

// Exact GeLU, x * Phi(x), applied elementwise.
Matrix Gelu(const Matrix& x);
// Returns dL/dx given the pre-activation x and dL/dy.
Matrix GeluBackward(const Matrix& x, const Matrix& grad_out);

inline constexpr double kNormEpsilon = 1e-12;

struct Normalized {
  Matrix rows;   // unit-norm rows
  Vector norms;  // original row norms
};

// Divides each row by its Euclidean norm. Throws Error("degenerate embedding")
// when a row norm is below kNormEpsilon.
Normalized L2Normalize(const Matrix& x);
// Jacobian-vector product of L2Normalize: (g - y (y.g)) / |x| per row.
Matrix L2NormalizeBackward(const Normalized& forward, const Matrix& grad_out);

double SquaredEuclidean(const Eigen::Ref<const RowVector>& a,
                        const Eigen::Ref<const RowVector>& b);

// (i, j) = SquaredEuclidean(a.row(i), b.row(j)). Computed by direct row
// differences, so a == b yields an exactly symmetric matrix with a zero
// diagonal.
Matrix PairwiseSquaredDistances(const Matrix& a, const Matrix& b);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_coordinate = 0;
  bool passed = true;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor for the relative error, so coordinates whose true
  // gradient is ~0 are judged on absolute error.
  double scale_floor = 1e-6;
  // Coordinates to leave unchecked (e.g. next to a hinge kink). May be empty.
  std::vector<bool> skip;
};

// Central finite differences (f(x + h e_i) - f(x - h e_i)) / 2h against an
// analytic gradient; relative error |a - n| / max(|a|, |n|, scale_floor).
GradCheckReport FiniteDifferenceCheck(
    const std::function<double(const Vector&)>& f, const Vector& point,
    const Vector& analytic_grad, const GradCheckOptions& options = {});

// Samplers used for initialization and synthetic data.
Matrix UniformMatrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng);
Matrix NormalMatrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);

// Flattens / restores matrices for gradient checking and optimizers.
Vector Flatten(const std::vector<const Matrix*>& blocks);
void Unflatten(const Vector& flat, const std::vector<Matrix*>& blocks);

}  // namespace xmodal

#endif  // XMODAL_NUMERIC_H_
