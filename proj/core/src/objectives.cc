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

#include "xmodal/objectives.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "binary_io.h"

namespace xmodal {
namespace {

constexpr char kProxyMagic[4] = {'X', 'M', 'O', 'P'};
constexpr uint32_t kProxyVersion = 1;

void CheckLabels(const std::vector<int>& labels, int classes) {
  for (int y : labels) {
    if (y < 0 || y >= classes) {
      throw Error("label " + std::to_string(y) + " outside [0, " +
                  std::to_string(classes) + ")");
    }
  }
}

// Gradient of sum_ij g_ij * |v_i - t_j|^2 w.r.t. the paired rows.
void AccumulatePairGradients(const Matrix& v, const Matrix& t, const Matrix& g,
                             LossOutput& out) {
  const Eigen::Index n = g.rows();
  const Vector row_sum = g.rowwise().sum();
  const RowVector col_sum = g.colwise().sum();
  out.grad_images.topRows(n) +=
      2.0 * (row_sum.asDiagonal() * v - g * t);
  out.grad_texts.topRows(n) +=
      2.0 * (col_sum.transpose().asDiagonal() * t - g.transpose() * v);
}

LossOutput ZeroOutput(const Batch& batch) {
  LossOutput out;
  out.grad_images = Matrix::Zero(batch.images.rows(), batch.images.cols());
  out.grad_texts = Matrix::Zero(batch.texts.rows(), batch.texts.cols());
  return out;
}

struct PairView {
  Matrix v;
  Matrix t;
  Matrix distances;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> same;
};

PairView MakePairView(const Batch& batch) {
  batch.Validate();
  if (batch.pair_count < 1) throw Error("empty batch: pair-wise loss needs at least one pair");
  const Eigen::Index n = batch.pair_count;
  PairView view{batch.images.topRows(n), batch.texts.topRows(n), {}, {}};
  view.distances = PairwiseSquaredDistances(view.v, view.t);
  view.same.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      view.same(i, j) = batch.image_labels[i] == batch.text_labels[j];
    }
  }
  return view;
}

// One anchor direction of the triplet loss. Row i of `d` holds distances
// from anchor i to every item of the other modality; `same` marks positives.
// Adds the hinge sum to `total`, per-distance coefficients to `coeff`, and
// returns the triplet count.
double AnchoredTriplets(const Matrix& d,
                        const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& same,
                        double margin, double& total, Matrix& coeff, double& min_gap) {
  const Eigen::Index n = d.rows();
  double triplets = 0.0;
  total = 0.0;
  coeff = Matrix::Zero(n, d.cols());
  std::vector<std::pair<double, Eigen::Index>> pos;
  std::vector<std::pair<double, Eigen::Index>> neg;
  std::vector<double> neg_prefix;
  for (Eigen::Index i = 0; i < n; ++i) {
    pos.clear();
    neg.clear();
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      (same(i, j) ? pos : neg).emplace_back(d(i, j), j);
    }
    if (pos.empty() || neg.empty()) continue;
    triplets += static_cast<double>(pos.size()) * static_cast<double>(neg.size());
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());
    neg_prefix.assign(neg.size() + 1, 0.0);
    for (std::size_t k = 0; k < neg.size(); ++k) neg_prefix[k + 1] = neg_prefix[k] + neg[k].first;

    // Triplet (p, k) is active iff d_k < d_p + margin.
    for (const auto& [dp, j] : pos) {
      const double threshold = dp + margin;
      const auto it = std::lower_bound(neg.begin(), neg.end(), threshold,
                                       [](const auto& e, double v) { return e.first < v; });
      const std::size_t active = static_cast<std::size_t>(it - neg.begin());
      total += static_cast<double>(active) * threshold - neg_prefix[active];
      coeff(i, j) += static_cast<double>(active);
      if (it != neg.end()) min_gap = std::min(min_gap, std::abs(it->first - threshold));
      if (it != neg.begin()) min_gap = std::min(min_gap, std::abs(threshold - (it - 1)->first));
    }
    for (const auto& [dk, k] : neg) {
      const auto it = std::upper_bound(pos.begin(), pos.end(), dk - margin,
                                       [](double v, const auto& e) { return v < e.first; });
      coeff(i, k) -= static_cast<double>(pos.end() - it);
    }
  }
  return triplets;
}

struct ClassTerms {
  double sum = 0.0;
  Matrix grad_x;
  Matrix grad_weight;
  Matrix grad_bias;
};

// Loss terms -log softmax(logits)_y summed over rows, with the gradient
// w.r.t. the logits (softmax - onehot).
double SoftmaxCrossEntropy(const Matrix& logits, const std::vector<int>& labels,
                           Matrix& grad_logits) {
  double sum = 0.0;
  grad_logits.resize(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    const double max_logit = logits.row(i).maxCoeff();
    const RowVector shifted = (logits.row(i).array() - max_logit).exp().matrix();
    const double partition = shifted.sum();
    if (logits(i, y) == max_logit) {
      // log1p keeps precision when the true class dominates.
      sum += std::log1p(partition - shifted(y));
    } else {
      sum += max_logit - logits(i, y) + std::log(partition);
    }
    grad_logits.row(i) = shifted / partition;
    grad_logits(i, y) -= 1.0;
  }
  return sum;
}

ClassTerms EvaluateClassTerms(const Matrix& x, const std::vector<int>& labels,
                              const ClassProxyParams& params) {
  const int classes = params.class_count();
  if (x.cols() != params.dim()) {
    throw Error("embedding dim " + std::to_string(x.cols()) +
                " does not match proxy dim " + std::to_string(params.dim()));
  }
  CheckLabels(labels, classes);
  ClassTerms terms;
  const Eigen::Index m = x.rows();
  switch (params.kind) {
    case ClassWiseKind::kLinearRegression: {
      Matrix residual = x * params.weight;
      for (Eigen::Index i = 0; i < m; ++i) residual(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
      terms.sum = residual.squaredNorm();
      terms.grad_x = 2.0 * residual * params.weight.transpose();
      terms.grad_weight = 2.0 * x.transpose() * residual;
      break;
    }
    case ClassWiseKind::kCrossEntropy: {
      const Matrix logits = (x * params.weight).rowwise() + params.bias.row(0);
      Matrix g;
      terms.sum = SoftmaxCrossEntropy(logits, labels, g);
      terms.grad_x = g * params.weight.transpose();
      terms.grad_weight = x.transpose() * g;
      terms.grad_bias = g.colwise().sum();
      break;
    }
    case ClassWiseKind::kPrototypeContrastive: {
      if (!(params.lambda > 0.0)) throw Error("PCL scaling factor lambda must be > 0");
      const Matrix& protos = params.weight;
      const Matrix dist = PairwiseSquaredDistances(x, protos);
      Matrix g;
      terms.sum = SoftmaxCrossEntropy(-params.lambda * dist, labels, g);
      const Matrix g_dist = -params.lambda * g;
      const Vector row_sum = g_dist.rowwise().sum();
      const RowVector col_sum = g_dist.colwise().sum();
      terms.grad_x = 2.0 * (row_sum.asDiagonal() * x - g_dist * protos);
      terms.grad_weight =
          2.0 * (col_sum.transpose().asDiagonal() * protos - g_dist.transpose() * x);
      break;
    }
  }
  if (terms.grad_weight.size() == 0) terms.grad_weight = Matrix::Zero(params.weight.rows(), params.weight.cols());
  if (params.kind == ClassWiseKind::kCrossEntropy && terms.grad_bias.size() == 0) {
    terms.grad_bias = Matrix::Zero(1, classes);
  }
  return terms;
}

LossOutput ClassWiseFromTerms(const Batch& batch, const ClassProxyParams& params,
                              bool all_rows) {
  batch.Validate();
  LossOutput out = ZeroOutput(batch);
  out.grad_weight = Matrix::Zero(params.weight.rows(), params.weight.cols());
  if (params.kind == ClassWiseKind::kCrossEntropy) out.grad_bias = Matrix::Zero(1, params.weight.cols());

  auto apply = [&](const Matrix& x, const std::vector<int>& labels, Eigen::Index rows,
                   double scale, Matrix& grad_x) {
    const std::vector<int> used(labels.begin(), labels.begin() + rows);
    const ClassTerms terms = EvaluateClassTerms(x.topRows(rows), used, params);
    out.value += scale * terms.sum;
    grad_x.topRows(rows) += scale * terms.grad_x;
    out.grad_weight += scale * terms.grad_weight;
    if (terms.grad_bias.size() > 0) out.grad_bias += scale * terms.grad_bias;
  };

  if (!all_rows) {
    if (batch.pair_count < 1) throw Error("empty batch: class-wise loss needs at least one pair");
    const double scale = 1.0 / batch.pair_count;
    apply(batch.images, batch.image_labels, batch.pair_count, scale, out.grad_images);
    apply(batch.texts, batch.text_labels, batch.pair_count, scale, out.grad_texts);
    return out;
  }
  const Eigen::Index n_images = batch.images.rows();
  const Eigen::Index n_texts = batch.texts.rows();
  if (n_images > 0) {
    apply(batch.images, batch.image_labels, n_images, 1.0 / static_cast<double>(n_images), out.grad_images);
  } else {
    out.warning = true;
    out.warning_message = "no image samples; image term defined as 0";
  }
  if (n_texts > 0) {
    apply(batch.texts, batch.text_labels, n_texts, 1.0 / static_cast<double>(n_texts), out.grad_texts);
  } else {
    out.warning = true;
    out.warning_message = "no text samples; text term defined as 0";
  }
  return out;
}

void AddScaled(LossOutput& into, const LossOutput& from, double scale) {
  into.value += scale * from.value;
  into.grad_images += scale * from.grad_images;
  into.grad_texts += scale * from.grad_texts;
  into.min_hinge_gap = std::min(into.min_hinge_gap, from.min_hinge_gap);
  if (from.warning) {
    into.warning = true;
    into.warning_message = from.warning_message;
  }
}

}  // namespace

std::string_view ShortName(PairWiseKind kind) {
  switch (kind) {
    case PairWiseKind::kModalityInvariant: return "ML";
    case PairWiseKind::kContrastive: return "CL";
    case PairWiseKind::kTriplet: return "TL";
  }
  return "?";
}

std::string_view ShortName(ClassWiseKind kind) {
  switch (kind) {
    case ClassWiseKind::kLinearRegression: return "LRL";
    case ClassWiseKind::kCrossEntropy: return "CEL";
    case ClassWiseKind::kPrototypeContrastive: return "PCL";
  }
  return "?";
}

std::string ObjectiveConfig::Name() const {
  std::string name;
  if (class_wise) name += ShortName(*class_wise);
  if (class_wise && pair_wise) name += "+";
  if (pair_wise) name += ShortName(*pair_wise);
  return name;
}

void ObjectiveConfig::Validate() const {
  if (!class_wise && !pair_wise) throw Error("objective names no loss");
  if (!(margin >= 0.0)) throw Error("margin must be >= 0");
  if (!(gamma >= 0.0)) throw Error("gamma must be >= 0");
  if (class_wise == ClassWiseKind::kPrototypeContrastive && !(lambda > 0.0)) {
    throw Error("lambda must be > 0");
  }
}

ObjectiveConfig ObjectiveConfig::Parse(std::string_view name) {
  auto parse_one = [](std::string_view token, ObjectiveConfig& cfg) {
    for (ClassWiseKind k : kAllClassWise) {
      if (token == ShortName(k)) {
        if (cfg.class_wise) throw Error("two class-wise losses in objective");
        cfg.class_wise = k;
        return;
      }
    }
    for (PairWiseKind k : kAllPairWise) {
      if (token == ShortName(k)) {
        if (cfg.pair_wise) throw Error("two pair-wise losses in objective");
        cfg.pair_wise = k;
        return;
      }
    }
    throw Error("unknown loss: " + std::string(token));
  };
  ObjectiveConfig cfg;
  const std::size_t plus = name.find('+');
  parse_one(name.substr(0, plus), cfg);
  if (plus != std::string_view::npos) {
    if (!cfg.class_wise) throw Error("hybrid objective must be written <class-wise>+<pair-wise>");
    parse_one(name.substr(plus + 1), cfg);
  }
  return cfg;
}

Batch Batch::Paired(Matrix images, Matrix texts, std::vector<int> labels) {
  Batch b;
  b.pair_count = static_cast<int>(labels.size());
  b.images = std::move(images);
  b.texts = std::move(texts);
  b.image_labels = labels;
  b.text_labels = std::move(labels);
  b.Validate();
  return b;
}

void Batch::Validate() const {
  if (images.rows() != static_cast<Eigen::Index>(image_labels.size()) ||
      texts.rows() != static_cast<Eigen::Index>(text_labels.size())) {
    throw Error("batch rows do not match label counts");
  }
  if (pair_count < 0 || pair_count > images.rows() || pair_count > texts.rows()) {
    throw Error("pair_count exceeds available rows");
  }
  if (images.rows() > 0 && texts.rows() > 0 && images.cols() != texts.cols()) {
    throw Error("image and text embeddings differ in dimension");
  }
  for (int k = 0; k < pair_count; ++k) {
    if (image_labels[static_cast<std::size_t>(k)] != text_labels[static_cast<std::size_t>(k)]) {
      throw Error("paired rows carry different labels");
    }
  }
}

int ClassProxyParams::class_count() const {
  return static_cast<int>(kind == ClassWiseKind::kPrototypeContrastive ? weight.rows()
                                                                        : weight.cols());
}

int ClassProxyParams::dim() const {
  return static_cast<int>(kind == ClassWiseKind::kPrototypeContrastive ? weight.cols()
                                                                        : weight.rows());
}

std::vector<Matrix*> ClassProxyParams::parameters() {
  if (kind == ClassWiseKind::kCrossEntropy) return {&weight, &bias};
  return {&weight};
}

std::vector<const Matrix*> ClassProxyParams::parameters() const {
  if (kind == ClassWiseKind::kCrossEntropy) return {&weight, &bias};
  return {&weight};
}

ClassProxyParams InitClassProxies(ClassWiseKind kind, int dim, int classes,
                                  double lambda, uint64_t seed) {
  if (dim < 1 || classes < 1) throw Error("proxy dims must be >= 1");
  Rng rng(DeriveSeed(seed, 41));
  ClassProxyParams p;
  p.kind = kind;
  p.lambda = lambda;
  switch (kind) {
    case ClassWiseKind::kLinearRegression:
      p.weight = UniformMatrix(dim, classes, 1.0 / std::sqrt(dim), rng);
      break;
    case ClassWiseKind::kCrossEntropy:
      p.weight = UniformMatrix(dim, classes, 1.0 / std::sqrt(dim), rng);
      p.bias = Matrix::Zero(1, classes);
      break;
    case ClassWiseKind::kPrototypeContrastive:
      p.weight = NormalMatrix(classes, dim, 1.0, rng);
      p.weight.rowwise().normalize();
      break;
  }
  return p;
}

LossOutput ModalityInvariantLoss(const Batch& batch) {
  const PairView view = MakePairView(batch);
  const double n = batch.pair_count;
  LossOutput out = ZeroOutput(batch);
  const Matrix g = view.same.cast<double>() / n;
  out.value = g.cwiseProduct(view.distances).sum();
  AccumulatePairGradients(view.v, view.t, g, out);
  return out;
}

LossOutput ContrastiveLoss(const Batch& batch, double margin) {
  if (!(margin >= 0.0)) throw Error("margin must be >= 0");
  const PairView view = MakePairView(batch);
  const double n = batch.pair_count;
  const Eigen::Index rows = view.distances.rows();
  LossOutput out = ZeroOutput(batch);
  Matrix g = Matrix::Zero(rows, rows);
  double negative = 0.0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < rows; ++j) {
      const double d = view.distances(i, j);
      if (view.same(i, j)) {
        g(i, j) = 1.0 / n;
      } else {
        const double slack = margin - d;
        out.min_hinge_gap = std::min(out.min_hinge_gap, std::abs(slack));
        if (slack > 0.0) {
          negative += slack;
          g(i, j) = -1.0 / n;
        }
      }
    }
  }
  // Positive term summed exactly as in ModalityInvariantLoss.
  out.value = g.cwiseMax(0.0).cwiseProduct(view.distances).sum() + negative / n;
  AccumulatePairGradients(view.v, view.t, g, out);
  return out;
}

LossOutput TripletLoss(const Batch& batch, double margin) {
  if (!(margin >= 0.0)) throw Error("margin must be >= 0");
  const PairView view = MakePairView(batch);
  LossOutput out = ZeroOutput(batch);

  double image_total = 0.0;
  double text_total = 0.0;
  Matrix image_coeff;
  Matrix text_coeff;
  const double image_triplets = AnchoredTriplets(view.distances, view.same, margin,
                                                 image_total, image_coeff, out.min_hinge_gap);
  const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> same_t = view.same.transpose();
  const double text_triplets = AnchoredTriplets(view.distances.transpose(), same_t, margin,
                                                text_total, text_coeff, out.min_hinge_gap);

  Matrix g = Matrix::Zero(view.distances.rows(), view.distances.cols());
  if (image_triplets > 0) {
    out.value += image_total / image_triplets;
    g += image_coeff / image_triplets;
  }
  if (text_triplets > 0) {
    out.value += text_total / text_triplets;
    g += text_coeff.transpose() / text_triplets;
  }
  if (image_triplets == 0 || text_triplets == 0) {
    out.warning = true;
    out.warning_message = "batch has no valid triplet in at least one anchor direction";
  }
  AccumulatePairGradients(view.v, view.t, g, out);
  return out;
}

LossOutput PairWiseLoss(const Batch& batch, PairWiseKind kind, double margin) {
  switch (kind) {
    case PairWiseKind::kModalityInvariant: return ModalityInvariantLoss(batch);
    case PairWiseKind::kContrastive: return ContrastiveLoss(batch, margin);
    case PairWiseKind::kTriplet: return TripletLoss(batch, margin);
  }
  throw Error("unknown pair-wise loss");
}

LossOutput LinearRegressionLoss(const Batch& batch, const ClassProxyParams& params) {
  if (params.kind != ClassWiseKind::kLinearRegression) throw Error("params are not LRL proxies");
  return ClassWiseFromTerms(batch, params, false);
}

LossOutput CrossEntropyLoss(const Batch& batch, const ClassProxyParams& params) {
  if (params.kind != ClassWiseKind::kCrossEntropy) throw Error("params are not CEL proxies");
  if (params.bias.rows() != 1 || params.bias.cols() != params.weight.cols()) {
    throw Error("CEL bias shape mismatch");
  }
  return ClassWiseFromTerms(batch, params, false);
}

LossOutput PrototypeContrastiveLoss(const Batch& batch, const ClassProxyParams& params) {
  if (params.kind != ClassWiseKind::kPrototypeContrastive) throw Error("params are not PCL prototypes");
  return ClassWiseFromTerms(batch, params, false);
}

LossOutput ClassWiseLoss(const Batch& batch, const ClassProxyParams& params) {
  return ClassWiseFromTerms(batch, params, false);
}

LossOutput PerSampleClassWise(const Batch& batch, const ClassProxyParams& params) {
  return ClassWiseFromTerms(batch, params, true);
}

LossOutput HybridLoss(const Batch& batch, const ObjectiveConfig& config,
                      const ClassProxyParams& params) {
  if (!config.is_hybrid()) throw Error("hybrid loss needs a class-wise and a pair-wise term");
  return EvaluateObjective(batch, config, &params, false);
}

LossOutput EvaluateObjective(const Batch& batch, const ObjectiveConfig& config,
                             const ClassProxyParams* params, bool route_unpaired) {
  config.Validate();
  LossOutput out;
  if (config.class_wise) {
    if (params == nullptr || params->kind != *config.class_wise) {
      throw Error("objective " + config.Name() + " needs matching class proxies");
    }
    out = route_unpaired ? PerSampleClassWise(batch, *params) : ClassWiseLoss(batch, *params);
  } else {
    batch.Validate();
    out = ZeroOutput(batch);
  }
  const double pair_weight = config.class_wise ? config.gamma : 1.0;
  if (config.pair_wise && pair_weight != 0.0 && batch.pair_count > 0) {
    AddScaled(out, PairWiseLoss(batch, *config.pair_wise, config.margin), pair_weight);
  }
  return out;
}

void SaveClassProxies(const ClassProxyParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(kProxyMagic, sizeof(kProxyMagic));
  binary_io::WriteU32(out, kProxyVersion);
  binary_io::WriteU32(out, static_cast<uint32_t>(params.kind));
  binary_io::WriteU32(out, static_cast<uint32_t>(params.weight.rows()));
  binary_io::WriteU32(out, static_cast<uint32_t>(params.weight.cols()));
  binary_io::WriteU32(out, static_cast<uint32_t>(params.bias.cols()));
  binary_io::WriteF64(out, params.lambda);
  binary_io::WriteMatrix(out, params.weight);
  if (params.bias.size() > 0) binary_io::WriteMatrix(out, params.bias);
  if (!out) throw Error("write failed: " + path.string());
}

ClassProxyParams LoadClassProxies(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kProxyMagic, sizeof(magic)) != 0) {
    throw Error("not a class-proxy checkpoint: " + path.string());
  }
  if (binary_io::ReadU32(in) != kProxyVersion) throw Error("unsupported proxy checkpoint version");
  ClassProxyParams p;
  const uint32_t kind = binary_io::ReadU32(in);
  if (kind > static_cast<uint32_t>(ClassWiseKind::kPrototypeContrastive)) {
    throw Error("unknown proxy kind in checkpoint");
  }
  p.kind = static_cast<ClassWiseKind>(kind);
  const uint32_t rows = binary_io::ReadU32(in);
  const uint32_t cols = binary_io::ReadU32(in);
  const uint32_t bias_cols = binary_io::ReadU32(in);
  constexpr uint32_t kMaxDim = 1u << 20;
  if (rows == 0 || cols == 0 || rows > kMaxDim || cols > kMaxDim || bias_cols > kMaxDim) {
    throw Error("implausible shape in proxy checkpoint header");
  }
  p.lambda = binary_io::ReadF64(in);
  p.weight = binary_io::ReadMatrix(in, rows, cols);
  if (bias_cols > 0) p.bias = binary_io::ReadMatrix(in, 1, bias_cols);
  if (in.peek() != std::char_traits<char>::eof()) throw Error("trailing bytes in proxy checkpoint");
  return p;
}

}  // namespace xmodal
