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

#include <algorithm>
#include <cmath>
#include <numbers>

namespace xmodal {

uint64_t DeriveSeed(uint64_t base, uint64_t tag) {
  uint64_t z = base + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double GaussianCdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

Matrix Gelu(const Matrix& x) {
  return x.unaryExpr([](double v) { return v * GaussianCdf(v); });
}

Matrix GeluBackward(const Matrix& x, const Matrix& grad_out) {
  const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  Matrix local = x.unaryExpr([inv_sqrt_2pi](double v) {
    return GaussianCdf(v) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
  });
  return local.cwiseProduct(grad_out);
}

Normalized L2Normalize(const Matrix& x) {
  Normalized out{x, x.rowwise().norm()};
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (!(out.norms(i) >= kNormEpsilon)) {
      throw Error("degenerate embedding: row " + std::to_string(i) +
                  " has norm below epsilon");
    }
    out.rows.row(i) /= out.norms(i);
  }
  return out;
}

Matrix L2NormalizeBackward(const Normalized& forward, const Matrix& grad_out) {
  Matrix grad(grad_out.rows(), grad_out.cols());
  for (Eigen::Index i = 0; i < grad_out.rows(); ++i) {
    const auto y = forward.rows.row(i);
    const double proj = y.dot(grad_out.row(i));
    grad.row(i) = (grad_out.row(i) - proj * y) / forward.norms(i);
  }
  return grad;
}

double SquaredEuclidean(const Eigen::Ref<const RowVector>& a,
                        const Eigen::Ref<const RowVector>& b) {
  if (a.size() != b.size()) {
    throw Error("dim mismatch: " + std::to_string(a.size()) + " vs " +
                std::to_string(b.size()));
  }
  return (a - b).squaredNorm();
}

Matrix PairwiseSquaredDistances(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw Error("dim mismatch: " + std::to_string(a.cols()) + " vs " +
                std::to_string(b.cols()));
  }
  Matrix out(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      out(i, j) = (a.row(i) - b.row(j)).squaredNorm();
    }
  }
  return out;
}

GradCheckReport FiniteDifferenceCheck(
    const std::function<double(const Vector&)>& f, const Vector& point,
    const Vector& analytic_grad, const GradCheckOptions& options) {
  if (analytic_grad.size() != point.size()) {
    throw Error("gradient size does not match point size");
  }
  GradCheckReport report;
  Vector x = point;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    if (!options.skip.empty() && options.skip[static_cast<std::size_t>(i)]) continue;
    const double orig = x(i);
    x(i) = orig + options.step;
    const double up = f(x);
    x(i) = orig - options.step;
    const double down = f(x);
    x(i) = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw Error("non-finite function value at coordinate " + std::to_string(i));
    }
    const double numeric = (up - down) / (2.0 * options.step);
    const double analytic = analytic_grad(i);
    const double denom =
        std::max({std::abs(analytic), std::abs(numeric), options.scale_floor});
    const double rel = std::abs(analytic - numeric) / denom;
    if (rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_coordinate = static_cast<std::size_t>(i);
    }
  }
  report.passed = report.max_relative_error <= options.tolerance;
  return report;
}

Matrix UniformMatrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix NormalMatrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Vector Flatten(const std::vector<const Matrix*>& blocks) {
  Eigen::Index total = 0;
  for (const Matrix* b : blocks) total += b->size();
  Vector flat(total);
  Eigen::Index offset = 0;
  for (const Matrix* b : blocks) {
    flat.segment(offset, b->size()) = Eigen::Map<const Vector>(b->data(), b->size());
    offset += b->size();
  }
  return flat;
}

void Unflatten(const Vector& flat, const std::vector<Matrix*>& blocks) {
  Eigen::Index offset = 0;
  for (Matrix* b : blocks) {
    if (offset + b->size() > flat.size()) throw Error("flat vector too short");
    Eigen::Map<Vector>(b->data(), b->size()) = flat.segment(offset, b->size());
    offset += b->size();
  }
  if (offset != flat.size()) throw Error("flat vector too long");
}

}  // namespace xmodal
