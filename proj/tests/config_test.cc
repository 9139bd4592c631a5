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

#include "xmodal/config.h"

#include <fstream>

#include <gtest/gtest.h>

#include "test_support.h"

namespace xmodal {
namespace {

constexpr char kSynthetic[] =
    R"("data": {"synthetic": {"classes": 4, "pairs_per_class": 12, "test_pairs_per_class": 5,
                              "dim": 8, "noise_sigma": 0.2, "seed": 3}})";

std::string Spec(const std::string& study, const std::string& extra = "") {
  return std::string("{\"name\": \"t\", \"study\": \"") + study + "\", " + kSynthetic + extra + "}";
}

TEST(ExperimentSpecTest, StudyDefaults) {
  const ExperimentSpec loss = ParseExperimentSpec(Spec("loss_comparison"));
  EXPECT_EQ(loss.losses, (std::vector<std::string>{"LRL", "CEL", "PCL", "ML", "CL", "TL"}));
  EXPECT_EQ(loss.seeds, (std::vector<uint64_t>{0, 1, 2}));

  const ExperimentSpec hybrid = ParseExperimentSpec(Spec("hybrid_gamma_sweep"));
  EXPECT_EQ(hybrid.class_wise.size(), 3u);
  EXPECT_EQ(hybrid.pair_wise.size(), 3u);
  EXPECT_EQ(hybrid.gammas, (std::vector<double>{0.0, 0.01, 0.1, 1.0}));

  const ExperimentSpec imb = ParseExperimentSpec(Spec("imbalance"));
  EXPECT_EQ(imb.imbalance.size(), 9u);
  EXPECT_EQ(imb.seeds.size(), 5u);
  for (const ImbalanceSpec& s : imb.imbalance) {
    EXPECT_EQ(s.allow_empty_modality, s.image_keep_fraction == 0.0 || s.text_keep_fraction == 0.0);
  }

  EXPECT_EQ(ParseExperimentSpec(Spec("dimension_sweep")).dims,
            (std::vector<int>{64, 128, 256, 512, 1024, 2048}));
  EXPECT_EQ(ParseExperimentSpec(Spec("lambda_sweep")).lambdas,
            (std::vector<double>{0.01, 0.1, 1.0, 10.0}));
}

TEST(ExperimentSpecTest, ExplicitGridsAndSections) {
  const ExperimentSpec s = ParseExperimentSpec(Spec(
      "imbalance",
      R"(, "model": {"out_dim": 16, "dropout_rate": 0.0},
         "training": {"learning_rate": 0.002, "batch_size": 16, "max_epochs": 3, "early_stop_patience": 2},
         "objective": {"loss": "CEL+TL", "gamma": 0.1, "margin": 0.3},
         "grid": {"imbalance": [[1.0, 0.5], [0.5, 1.0]]}, "stratified_imbalance": true,
         "seeds": [7, 8])"));
  EXPECT_EQ(s.model.out_dim, 16);
  EXPECT_TRUE(s.model_in_dim_from_data);
  EXPECT_EQ(s.training.batch_size, 16);
  EXPECT_EQ(s.objective.Name(), "CEL+TL");
  EXPECT_EQ(s.objective.margin, 0.3);
  ASSERT_EQ(s.imbalance.size(), 2u);
  EXPECT_TRUE(s.imbalance[0].stratified);
  EXPECT_EQ(s.seeds, (std::vector<uint64_t>{7, 8}));
}

TEST(ExperimentSpecTest, Errors) {
  EXPECT_THROW(ParseExperimentSpec("{not json"), Error);
  EXPECT_THROW(ParseExperimentSpec(Spec("no_such_study")), Error);
  EXPECT_THROW(ParseExperimentSpec(R"({"study": "imbalance"})"), Error);
  EXPECT_THROW(ParseExperimentSpec(Spec("hybrid_gamma_sweep", R"(, "grid": {"gammas": [-1]})")), Error);
  EXPECT_THROW(ParseExperimentSpec(Spec("hybrid_gamma_sweep", R"(, "grid": {"class_wise": ["TL"]})")), Error);
  EXPECT_THROW(ParseExperimentSpec(Spec("imbalance", R"(, "grid": {"imbalance": [[0, 0]]})")), Error);
  EXPECT_THROW(ParseExperimentSpec(Spec("loss_comparison", R"(, "grid": {"losses": ["XX"]})")), Error);
  EXPECT_THROW(ParseExperimentSpec(Spec("loss_comparison", R"(, "training": {"batch_size": "big"})")), Error);
  ExperimentSpec direct = ParseExperimentSpec(Spec("loss_comparison"));
  direct.seeds.clear();
  EXPECT_THROW(direct.Validate(), Error);
  direct = ParseExperimentSpec(Spec("loss_comparison"));
  direct.losses.clear();
  EXPECT_THROW(direct.Validate(), Error);
}

TEST(ExperimentSpecTest, CanonicalJsonReparsesToSameHash) {
  const ExperimentSpec s = ParseExperimentSpec(Spec(
      "hybrid_gamma_sweep", R"(, "grid": {"class_wise": ["PCL"], "pair_wise": ["TL", "ML"], "gammas": [0, 0.5]},
                               "seeds": [4], "check_hybrid_identity": true)"));
  const ExperimentSpec again = ParseExperimentSpec(CanonicalSpecJson(s));
  EXPECT_EQ(CanonicalSpecJson(again), CanonicalSpecJson(s));
  EXPECT_EQ(ConfigHash(again), ConfigHash(s));
  EXPECT_EQ(ConfigHash(s).size(), 16u);
  ExperimentSpec changed = s;
  changed.training.learning_rate = 2e-4;
  EXPECT_NE(ConfigHash(changed), ConfigHash(s));
}

TEST(ExperimentSpecTest, ManifestPathsResolveAgainstSpecDirectory) {
  testing::TempDir dir;
  {
    std::ofstream out(dir.path() / "spec.json");
    out << R"({"study": "dimension_sweep", "data": {"train": {"images": "a/i.json", "texts": "a/t.json"},
              "test": {"images": "/abs/i.json", "texts": "b/t.json"}}})";
  }
  const ExperimentSpec s = LoadExperimentSpec(dir.path() / "spec.json");
  EXPECT_EQ(s.data.train_images, dir.path() / "a/i.json");
  EXPECT_EQ(s.data.test_images, std::filesystem::path("/abs/i.json"));
}

TEST(TrainJobTest, SeedAndOutput) {
  const TrainJob job = ParseTrainJob(
      std::string("{") + kSynthetic + R"(, "objective": {"loss": "PCL", "lambda": 2}, "seed": 11, "out": "run1"})",
      "/tmp/base");
  EXPECT_EQ(job.training.seed, 11u);
  EXPECT_EQ(job.model.init_seed, 11u);
  EXPECT_EQ(job.objective.lambda, 2.0);
  EXPECT_EQ(job.out_dir, std::filesystem::path("/tmp/base/run1"));
  EXPECT_THROW(ParseTrainJob(R"({"seed": 1})"), Error);
}

TEST(LoadDataTest, SyntheticTrainAndTestShareGeometry) {
  const ExperimentSpec s = ParseExperimentSpec(Spec("dimension_sweep"));
  const LoadedData d = LoadData(s.data);
  EXPECT_EQ(d.train.images.count(), 48);
  EXPECT_EQ(d.test.images.count(), 20);
  EXPECT_NE(d.train.images.vectors.row(0), d.test.images.vectors.row(0));
  // Same class centers: the class means agree closely.
  const RowVector train_mean = d.train.images.vectors.topRows(12).colwise().mean();
  const RowVector test_mean = d.test.images.vectors.topRows(5).colwise().mean();
  EXPECT_LT((train_mean - test_mean).norm(), 0.5);
}

}  // namespace
}  // namespace xmodal
