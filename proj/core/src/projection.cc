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
#include <cstring>
#include <fstream>
#include <string>

#include "binary_io.h"

namespace xmodal {
namespace {

constexpr char kHeadMagic[4] = {'X', 'M', 'P', 'H'};
constexpr uint32_t kHeadVersion = 1;

}  // namespace

void ModelConfig::Validate() const {
  if (in_dim < 1 || hidden_dim < 0 || out_dim < 1) throw Error("model dims must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw Error("dropout_rate must lie in [0, 1)");
  }
}

ProjectionHead InitHead(const ModelConfig& config) {
  config.Validate();
  const int hidden = config.resolved_hidden_dim();
  Rng rng(DeriveSeed(config.init_seed, 31));
  ProjectionHead head;
  head.w1 = UniformMatrix(hidden, config.in_dim, 1.0 / std::sqrt(config.in_dim), rng);
  head.b1 = Matrix::Zero(1, hidden);
  head.w2 = UniformMatrix(config.out_dim, hidden, 1.0 / std::sqrt(hidden), rng);
  head.b2 = Matrix::Zero(1, config.out_dim);
  head.dropout_rate = config.dropout_rate;
  return head;
}

ForwardResult Forward(const ProjectionHead& head, const Matrix& x, Mode mode,
                      Rng* dropout_rng) {
  if (x.cols() != head.in_dim()) {
    throw Error("input has " + std::to_string(x.cols()) + " columns, head expects " +
                std::to_string(head.in_dim()));
  }
  ForwardResult result;
  ForwardCache& cache = result.cache;
  cache.input = x;
  cache.pre_activation = (x * head.w1.transpose()).rowwise() + head.b1.row(0);
  cache.hidden = Gelu(cache.pre_activation);
  if (mode == Mode::kTrain && head.dropout_rate > 0.0) {
    if (dropout_rng == nullptr) throw Error("train-mode dropout needs an rng");
    std::bernoulli_distribution keep(1.0 - head.dropout_rate);
    const double scale = 1.0 / (1.0 - head.dropout_rate);
    cache.dropout_mask.resize(cache.hidden.rows(), cache.hidden.cols());
    for (Eigen::Index i = 0; i < cache.dropout_mask.size(); ++i) {
      cache.dropout_mask.data()[i] = keep(*dropout_rng) ? scale : 0.0;
    }
    cache.hidden = cache.hidden.cwiseProduct(cache.dropout_mask);
  }
  const Matrix z = (cache.hidden * head.w2.transpose()).rowwise() + head.b2.row(0);
  cache.output = L2Normalize(z);
  result.embeddings = cache.output.rows;
  return result;
}

Matrix Embed(const ProjectionHead& head, const Matrix& x) {
  return Forward(head, x, Mode::kEval).embeddings;
}

HeadGradients Backward(const ProjectionHead& head, const ForwardCache& cache,
                       const Matrix& grad_embeddings) {
  if (grad_embeddings.rows() != cache.output.rows.rows() ||
      grad_embeddings.cols() != cache.output.rows.cols()) {
    throw Error("gradient shape does not match cached forward output");
  }
  HeadGradients g;
  const Matrix dz = L2NormalizeBackward(cache.output, grad_embeddings);
  g.w2 = dz.transpose() * cache.hidden;
  g.b2 = dz.colwise().sum();
  Matrix dhidden = dz * head.w2;
  if (cache.dropout_mask.size() > 0) dhidden = dhidden.cwiseProduct(cache.dropout_mask);
  const Matrix dpre = GeluBackward(cache.pre_activation, dhidden);
  g.w1 = dpre.transpose() * cache.input;
  g.b1 = dpre.colwise().sum();
  g.input = dpre * head.w1;
  return g;
}

void SaveHead(const ProjectionHead& head, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(kHeadMagic, sizeof(kHeadMagic));
  binary_io::WriteU32(out, kHeadVersion);
  binary_io::WriteU32(out, static_cast<uint32_t>(head.in_dim()));
  binary_io::WriteU32(out, static_cast<uint32_t>(head.hidden_dim()));
  binary_io::WriteU32(out, static_cast<uint32_t>(head.out_dim()));
  binary_io::WriteF64(out, head.dropout_rate);
  for (const Matrix* m : head.parameters()) binary_io::WriteMatrix(out, *m);
  if (!out) throw Error("write failed: " + path.string());
}

ProjectionHead LoadHead(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kHeadMagic, sizeof(magic)) != 0) {
    throw Error("not a projection head checkpoint: " + path.string());
  }
  const uint32_t version = binary_io::ReadU32(in);
  if (version != kHeadVersion) {
    throw Error("unsupported head checkpoint version " + std::to_string(version));
  }
  const uint32_t in_dim = binary_io::ReadU32(in);
  const uint32_t hidden = binary_io::ReadU32(in);
  const uint32_t out_dim = binary_io::ReadU32(in);
  if (in_dim == 0 || hidden == 0 || out_dim == 0) throw Error("zero dim in header");
  constexpr uint32_t kMaxDim = 1u << 20;
  if (in_dim > kMaxDim || hidden > kMaxDim || out_dim > kMaxDim) {
    throw Error("implausible dims in head checkpoint header");
  }
  const uint64_t payload =
      8ull * (uint64_t{hidden} * in_dim + hidden + uint64_t{out_dim} * hidden + out_dim);
  const uint64_t header = sizeof(kHeadMagic) + 4 * sizeof(uint32_t) + sizeof(double);
  if (std::filesystem::file_size(path) != header + payload) {
    throw Error("head checkpoint size does not match its shape header");
  }
  ProjectionHead head;
  head.dropout_rate = binary_io::ReadF64(in);
  head.w1 = binary_io::ReadMatrix(in, hidden, in_dim);
  head.b1 = binary_io::ReadMatrix(in, 1, hidden);
  head.w2 = binary_io::ReadMatrix(in, out_dim, hidden);
  head.b2 = binary_io::ReadMatrix(in, 1, out_dim);
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error("trailing bytes in head checkpoint (shape header tampered?)");
  }
  return head;
}

ProjectionHead LoadHead(const std::filesystem::path& path, const ModelConfig& expected) {
  ProjectionHead head = LoadHead(path);
  if (head.in_dim() != expected.in_dim) {
    throw Error("in_dim mismatch: checkpoint " + std::to_string(head.in_dim()) +
                ", config " + std::to_string(expected.in_dim));
  }
  if (head.hidden_dim() != expected.resolved_hidden_dim()) {
    throw Error("hidden_dim mismatch: checkpoint " + std::to_string(head.hidden_dim()) +
                ", config " + std::to_string(expected.resolved_hidden_dim()));
  }
  if (head.out_dim() != expected.out_dim) {
    throw Error("out_dim mismatch: checkpoint " + std::to_string(head.out_dim()) +
                ", config " + std::to_string(expected.out_dim));
  }
  return head;
}

}  // namespace xmodal
