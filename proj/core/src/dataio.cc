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

#include "xmodal/dataio.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace xmodal {
namespace {

static_assert(std::endian::native == std::endian::little,
              "payload I/O assumes a little-endian host");

namespace fs = std::filesystem;
using nlohmann::json;

std::string ReadFileBytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<int> ParseLabels(const std::string& text, const fs::path& path) {
  std::vector<int> labels;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    try {
      std::size_t used = 0;
      const long v = std::stol(line, &used);
      labels.push_back(static_cast<int>(v));
    } catch (const std::exception&) {
      throw Error("malformed label line in " + path.string() + ": '" + line + "'");
    }
  }
  return labels;
}

Matrix ParseCsvVectors(const std::string& text, int count, int dim,
                       const fs::path& path) {
  Matrix m(count, dim);
  std::istringstream in(text);
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    if (row >= count) throw Error("payload length mismatch: more than " +
                                  std::to_string(count) + " rows in " + path.string());
    std::istringstream cells(line);
    std::string cell;
    std::vector<double> values;
    while (std::getline(cells, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error("malformed value in " + path.string() + " row " +
                    std::to_string(row));
      }
    }
    if (static_cast<int>(values.size()) != dim) {
      throw Error("dim mismatch: row " + std::to_string(row) + " of " +
                  path.string() + " has " + std::to_string(values.size()) +
                  " values, expected " + std::to_string(dim));
    }
    for (int col = 0; col < dim; ++col) m(row, col) = values[static_cast<std::size_t>(col)];
    ++row;
  }
  if (row != count) {
    throw Error("payload length mismatch: expected " + std::to_string(count) +
                " rows, found " + std::to_string(row));
  }
  return m;
}

template <typename T>
Matrix ParseBinaryVectors(const std::string& bytes, int count, int dim) {
  const std::size_t expected = static_cast<std::size_t>(count) * dim;
  if (bytes.size() % sizeof(T) != 0 || bytes.size() / sizeof(T) != expected) {
    throw Error("payload length mismatch: expected " + std::to_string(expected) +
                " values, found " + std::to_string(bytes.size() / sizeof(T)) +
                (bytes.size() % sizeof(T) ? " (plus trailing bytes)" : ""));
  }
  std::vector<T> raw(expected);
  std::memcpy(raw.data(), bytes.data(), bytes.size());
  Matrix m(count, dim);
  for (std::size_t i = 0; i < expected; ++i) m.data()[i] = static_cast<double>(raw[i]);
  return m;
}

std::vector<int> SampleWithoutReplacement(int population, int keep, Rng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(population));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(keep));
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<int> KeepIndices(const FeatureBank& bank, double fraction,
                             bool stratified, Rng& rng) {
  if (!stratified) return SampleWithoutReplacement(bank.count(), KeepCount(fraction, bank.count()), rng);
  std::map<int, std::vector<int>> by_class;
  for (int i = 0; i < bank.count(); ++i) by_class[bank.labels[i]].push_back(i);
  std::vector<int> kept;
  for (auto& [label, members] : by_class) {
    const int n = static_cast<int>(members.size());
    for (int pick : SampleWithoutReplacement(n, KeepCount(fraction, n), rng)) {
      kept.push_back(members[static_cast<std::size_t>(pick)]);
    }
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

}  // namespace

std::string_view ModalityName(Modality m) {
  return m == Modality::kImage ? "image" : "text";
}

Modality ParseModality(std::string_view name) {
  if (name == "image") return Modality::kImage;
  if (name == "text") return Modality::kText;
  throw Error("unknown modality: " + std::string(name));
}

void FeatureBank::Validate(bool allow_empty) const {
  if (count() == 0 && !allow_empty) throw Error("empty bank");
  if (dim <= 0) throw Error("dim must be positive");
  if (class_count <= 0) throw Error("class_count must be positive");
  if (vectors.rows() != count() || vectors.cols() != dim) {
    throw Error("vector matrix is " + std::to_string(vectors.rows()) + "x" +
                std::to_string(vectors.cols()) + ", expected " +
                std::to_string(count()) + "x" + std::to_string(dim));
  }
  for (int i = 0; i < count(); ++i) {
    if (labels[i] < 0 || labels[i] >= class_count) {
      throw Error("label out of range: " + std::to_string(labels[i]) + " at row " +
                  std::to_string(i) + " (classes=" + std::to_string(class_count) + ")");
    }
  }
  if (!vectors.allFinite()) throw Error("non-finite feature value");
}

bool PairedDataset::IsComplete() const {
  if (images.count() != texts.count() ||
      static_cast<int>(pairing.size()) != images.count()) {
    return false;
  }
  for (std::size_t k = 0; k < pairing.size(); ++k) {
    const int i = static_cast<int>(k);
    if (pairing[k].image != i || pairing[k].text != i ||
        pairing[k].label != images.labels[k] || pairing[k].label != texts.labels[k]) {
      return false;
    }
  }
  return true;
}

void PairedDataset::Validate(bool allow_empty_modality) const {
  images.Validate(allow_empty_modality);
  texts.Validate(allow_empty_modality);
  if (images.count() == 0 && texts.count() == 0) throw Error("both modalities empty");
  if (images.class_count != texts.class_count) {
    throw Error("class_count differs between modalities");
  }
  for (const PairIndex& p : pairing) {
    if (p.image < 0 || p.image >= images.count() || p.text < 0 ||
        p.text >= texts.count()) {
      throw Error("pairing index out of range");
    }
    if (images.labels[p.image] != p.label || texts.labels[p.text] != p.label) {
      throw Error("paired items do not share a label");
    }
  }
}

PairedDataset MakeCompleteDataset(FeatureBank images, FeatureBank texts) {
  if (images.count() != texts.count()) {
    throw Error("complete dataset needs equal image and text counts");
  }
  PairedDataset ds{std::move(images), std::move(texts), {}};
  ds.pairing.reserve(static_cast<std::size_t>(ds.images.count()));
  for (int k = 0; k < ds.images.count(); ++k) {
    if (ds.images.labels[k] != ds.texts.labels[k]) {
      throw Error("paired items do not share a label at index " + std::to_string(k));
    }
    ds.pairing.push_back({k, k, ds.images.labels[k]});
  }
  ds.Validate();
  return ds;
}

int KeepCount(double fraction, int count) {
  if (fraction < 0.0 || fraction > 1.0) throw Error("keep fraction outside [0,1]");
  const double raw = fraction * count;
  return std::clamp(static_cast<int>(std::ceil(raw - 1e-9 * std::max(1.0, raw))), 0, count);
}

FeatureBank SelectRows(const FeatureBank& bank, const std::vector<int>& indices) {
  FeatureBank out{bank.modality, bank.dim, bank.class_count,
                  Matrix(static_cast<Eigen::Index>(indices.size()), bank.dim), {}};
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    out.vectors.row(static_cast<Eigen::Index>(r)) = bank.vectors.row(indices[r]);
    out.labels.push_back(bank.labels[static_cast<std::size_t>(indices[r])]);
  }
  return out;
}

PairedDataset ApplyImbalance(const PairedDataset& ds, const ImbalanceSpec& spec) {
  if (!ds.IsComplete()) throw Error("apply_imbalance requires a complete dataset");
  if (spec.image_keep_fraction <= 0.0 && spec.text_keep_fraction <= 0.0) {
    throw Error("both keep fractions are zero");
  }
  if ((spec.image_keep_fraction <= 0.0 || spec.text_keep_fraction <= 0.0) &&
      !spec.allow_empty_modality) {
    throw Error("a zero keep fraction empties a modality; set allow_empty_modality");
  }
  Rng image_rng(DeriveSeed(spec.seed, 1));
  Rng text_rng(DeriveSeed(spec.seed, 2));
  const std::vector<int> keep_images =
      KeepIndices(ds.images, spec.image_keep_fraction, spec.stratified, image_rng);
  const std::vector<int> keep_texts =
      KeepIndices(ds.texts, spec.text_keep_fraction, spec.stratified, text_rng);

  std::vector<int> image_pos(static_cast<std::size_t>(ds.images.count()), -1);
  std::vector<int> text_pos(static_cast<std::size_t>(ds.texts.count()), -1);
  for (std::size_t r = 0; r < keep_images.size(); ++r) image_pos[keep_images[r]] = static_cast<int>(r);
  for (std::size_t r = 0; r < keep_texts.size(); ++r) text_pos[keep_texts[r]] = static_cast<int>(r);

  PairedDataset out{SelectRows(ds.images, keep_images), SelectRows(ds.texts, keep_texts), {}};
  for (const PairIndex& p : ds.pairing) {
    const int i = image_pos[static_cast<std::size_t>(p.image)];
    const int t = text_pos[static_cast<std::size_t>(p.text)];
    if (i >= 0 && t >= 0) out.pairing.push_back({i, t, p.label});
  }
  out.Validate(spec.allow_empty_modality);
  return out;
}

PairedDataset GenerateSynthetic(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw Error("synthetic data needs at least 2 classes");
  if (spec.dim < spec.classes) throw Error("dim < classes: centers cannot be orthonormal");
  if (spec.pairs_per_class < 1) throw Error("pairs_per_class must be positive");
  if (spec.noise_sigma < 0.0) throw Error("noise_sigma must be nonnegative");

  Rng geometry_rng(DeriveSeed(spec.rotation_seed, 11));
  // Q factors of Gaussian matrices: one supplies orthonormal centers, the
  // other is the fixed image-to-text rotation.
  const Matrix basis = Eigen::HouseholderQR<Matrix>(
                           NormalMatrix(spec.dim, spec.dim, 1.0, geometry_rng))
                           .householderQ();
  const Matrix rotation = Eigen::HouseholderQR<Matrix>(
                              NormalMatrix(spec.dim, spec.dim, 1.0, geometry_rng))
                              .householderQ();
  const Matrix centers = basis.leftCols(spec.classes).transpose();  // C x dim
  const Matrix text_centers = centers * rotation.transpose();

  Rng noise_rng(DeriveSeed(spec.sample_seed, 12));
  const int n = spec.classes * spec.pairs_per_class;
  FeatureBank images{Modality::kImage, spec.dim, spec.classes, Matrix(n, spec.dim), {}};
  FeatureBank texts{Modality::kText, spec.dim, spec.classes, Matrix(n, spec.dim), {}};
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int k = 0; k < n; ++k) {
    const int label = k / spec.pairs_per_class;
    images.labels.push_back(label);
    texts.labels.push_back(label);
    for (int c = 0; c < spec.dim; ++c) {
      const double vi = centers(label, c) + spec.noise_sigma * noise(noise_rng);
      images.vectors(k, c) = static_cast<double>(static_cast<float>(vi));
    }
    for (int c = 0; c < spec.dim; ++c) {
      const double vt = text_centers(label, c) + spec.noise_sigma * noise(noise_rng);
      texts.vectors(k, c) = static_cast<double>(static_cast<float>(vt));
    }
  }
  return MakeCompleteDataset(std::move(images), std::move(texts));
}

std::pair<PairedDataset, PairedDataset> SplitTrainValidation(
    const PairedDataset& ds, double val_fraction, uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 0.5)) {
    throw Error("val_fraction must lie in (0, 0.5)");
  }
  if (!ds.IsComplete()) throw Error("split requires a complete dataset");
  std::map<int, std::vector<int>> by_class;
  for (const PairIndex& p : ds.pairing) by_class[p.label].push_back(p.image);

  Rng rng(DeriveSeed(seed, 21));
  std::vector<int> train_idx;
  std::vector<int> val_idx;
  for (auto& [label, members] : by_class) {
    const int n = static_cast<int>(members.size());
    if (n < 2) {
      throw Error("class " + std::to_string(label) +
                  " has fewer than 2 pairs; cannot stratify");
    }
    const int n_val = std::clamp(static_cast<int>(std::lround(val_fraction * n)), 1, n - 1);
    std::shuffle(members.begin(), members.end(), rng);
    val_idx.insert(val_idx.end(), members.begin(), members.begin() + n_val);
    train_idx.insert(train_idx.end(), members.begin() + n_val, members.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());
  auto subset = [&](const std::vector<int>& idx) {
    return MakeCompleteDataset(SelectRows(ds.images, idx), SelectRows(ds.texts, idx));
  };
  return {subset(train_idx), subset(val_idx)};
}

FeatureBank LoadFeatureBank(const fs::path& manifest_path) {
  json manifest;
  try {
    manifest = json::parse(ReadFileBytes(manifest_path));
  } catch (const json::exception& e) {
    throw Error("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  const fs::path base = manifest_path.parent_path();
  FeatureBank bank;
  int count = 0;
  std::string dtype;
  fs::path vectors_path;
  fs::path labels_path;
  try {
    bank.modality = ParseModality(manifest.at("modality").get<std::string>());
    count = manifest.at("count").get<int>();
    bank.dim = manifest.at("dim").get<int>();
    dtype = manifest.value("dtype", std::string("f32le"));
    vectors_path = base / manifest.at("vectors").get<std::string>();
    labels_path = base / manifest.at("labels").get<std::string>();
  } catch (const json::exception& e) {
    throw Error("manifest " + manifest_path.string() + " missing field: " + e.what());
  }
  if (count <= 0) throw Error("empty bank");
  if (bank.dim <= 0) throw Error("dim must be positive");

  const std::string payload = ReadFileBytes(vectors_path);
  if (dtype == "f32le") {
    bank.vectors = ParseBinaryVectors<float>(payload, count, bank.dim);
  } else if (dtype == "f64le") {
    bank.vectors = ParseBinaryVectors<double>(payload, count, bank.dim);
  } else if (dtype == "csv") {
    bank.vectors = ParseCsvVectors(payload, count, bank.dim, vectors_path);
  } else {
    throw Error("unsupported dtype: " + dtype);
  }

  bank.labels = ParseLabels(ReadFileBytes(labels_path), labels_path);
  if (bank.count() != count) {
    throw Error("label count " + std::to_string(bank.count()) +
                " does not match declared count " + std::to_string(count));
  }
  if (manifest.contains("classes")) {
    bank.class_count = manifest["classes"].get<int>();
  } else {
    bank.class_count = *std::max_element(bank.labels.begin(), bank.labels.end()) + 1;
  }
  bank.Validate();
  return bank;
}

fs::path WriteFeatureBank(const FeatureBank& bank, const fs::path& dir,
                          const std::string& stem, const std::string& dtype) {
  bank.Validate();
  fs::create_directories(dir);
  std::string ext;
  if (dtype == "f32le") {
    ext = ".f32";
  } else if (dtype == "f64le") {
    ext = ".f64";
  } else if (dtype == "csv") {
    ext = ".csv";
  } else {
    throw Error("unsupported dtype: " + dtype);
  }
  const std::string vectors_name = stem + ext;
  const std::string labels_name = stem + ".labels";
  {
    std::ofstream out(dir / vectors_name, std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / vectors_name).string());
    if (dtype == "csv") {
      out.precision(17);
      for (int r = 0; r < bank.count(); ++r) {
        for (int c = 0; c < bank.dim; ++c) out << (c ? "," : "") << bank.vectors(r, c);
        out << '\n';
      }
    } else if (dtype == "f32le") {
      std::vector<float> raw(static_cast<std::size_t>(bank.vectors.size()));
      for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<float>(bank.vectors.data()[i]);
      out.write(reinterpret_cast<const char*>(raw.data()),
                static_cast<std::streamsize>(raw.size() * sizeof(float)));
    } else {
      out.write(reinterpret_cast<const char*>(bank.vectors.data()),
                static_cast<std::streamsize>(bank.vectors.size() * sizeof(double)));
    }
  }
  {
    std::ofstream out(dir / labels_name);
    if (!out) throw Error("cannot write " + (dir / labels_name).string());
    for (int label : bank.labels) out << label << '\n';
  }
  json manifest = {{"modality", std::string(ModalityName(bank.modality))},
                   {"count", bank.count()},
                   {"dim", bank.dim},
                   {"classes", bank.class_count},
                   {"dtype", dtype},
                   {"vectors", vectors_name},
                   {"labels", labels_name}};
  const fs::path manifest_path = dir / (stem + ".json");
  std::ofstream out(manifest_path);
  if (!out) throw Error("cannot write " + manifest_path.string());
  out << manifest.dump(2) << '\n';
  return manifest_path;
}

}  // namespace xmodal
