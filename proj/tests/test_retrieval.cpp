// Copyright 2026 The muse Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <vector>

#include "metric_oracle.hpp"
#include "muse/retrieval.hpp"

namespace muse {
namespace {

std::vector<std::size_t> ids(std::initializer_list<std::size_t> v) { return v; }

TEST(RankTest, Examples) {
  EXPECT_EQ(rank(std::vector<float>{0, 0}, {{1, 0}, {0, 2}, {3, 0}}), ids({0, 1, 2}));
  EXPECT_EQ(rank(std::vector<float>{0, 2}, {{1, 0}, {0, 2}, {3, 0}})[0], 1u);
  EXPECT_EQ(rank(std::vector<float>{0, 0}, {{0, 1}, {1, 0}, {0, 0.5f}}), ids({2, 0, 1}));  // tie keeps order
  EXPECT_THROW(rank(std::vector<float>{0, 0, 0}, {{1, 0}}), InputError);
}

TEST(RankTest, ScaleInvariance) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    Embeddings g{4, {}};
    for (int i = 0; i < 10 * 4; ++i) g.values.push_back(static_cast<float>(rng.uniform(-1, 1)));
    std::vector<float> q(4);
    for (auto& v : q) v = static_cast<float>(rng.uniform(-1, 1));
    Embeddings g2 = g;
    std::vector<float> q2 = q;
    for (auto& v : g2.values) v *= 4.0f;  // power of two keeps float values exact
    for (auto& v : q2) v *= 4.0f;
    EXPECT_EQ(rank(q, g), rank(q2, g2));
  }
}

TEST(RecallTest, Examples) {
  const auto r = ids({4, 2, 7, 1, 0, 3});
  EXPECT_EQ(recall_at_k(r, ids({4}), 1), 1);
  EXPECT_EQ(recall_at_k(r, ids({7}), 1), 0);
  EXPECT_EQ(recall_at_k(r, ids({7}), 5), 1);
  EXPECT_EQ(recall_at_k(r, ids({3}), r.size()), 1);
  EXPECT_THROW(recall_at_k(r, {}, 1), UsageError);
  EXPECT_THROW(recall_at_k(r, ids({1}), 0), UsageError);
}

TEST(AveragePrecisionTest, Examples) {
  const auto r = ids({5, 6, 9, 1, 2});
  EXPECT_NEAR(average_precision(r, ids({9})), 0.3333, 1e-4);
  EXPECT_NEAR(average_precision(r, ids({5, 9})), 5.0 / 6.0, 1e-15);
  EXPECT_EQ(average_precision(r, ids({5, 6})), 1.0);
  EXPECT_THROW(average_precision(r, {}), UsageError);
  for (std::size_t rank_pos = 1; rank_pos <= 5; ++rank_pos) {
    EXPECT_EQ(average_precision(r, ids({r[rank_pos - 1]})), 1.0 / static_cast<double>(rank_pos));
  }
}

TEST(MetricOracleTest, ThousandRandomInstances) {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto [ranking, relevant] = testing_oracle::random_instance(rng);
    const auto want = testing_oracle::pr_area(ranking, relevant);
    EXPECT_EQ(recall_at_k(ranking, relevant, 1), want.recall[0]);
    EXPECT_EQ(recall_at_k(ranking, relevant, 5), want.recall[1]);
    EXPECT_EQ(recall_at_k(ranking, relevant, 10), want.recall[2]);
    // Same quantity, different summation order: agreement to rounding.
    EXPECT_NEAR(average_precision(ranking, relevant), want.ap, 1e-12);
    EXPECT_LE(want.recall[0], want.recall[1]);
    EXPECT_LE(want.recall[1], want.recall[2]);
  }
}

TEST(ConditionParseTest, Expansion) {
  EXPECT_EQ(parse_conditions("seen").size(), 10u);
  EXPECT_EQ(parse_conditions("all").size(), 11u);
  const auto u = parse_conditions("unseen");
  ASSERT_EQ(u.size(), 1u);
  EXPECT_TRUE(u[0].composite);
  EXPECT_EQ(parse_conditions("fog,rain+snow").size(), 2u);
  EXPECT_THROW(parse_conditions("fog,hail"), UsageError);
  EXPECT_THROW(parse_tasks("x2y"), UsageError);
  EXPECT_EQ(parse_tasks("both").size(), 2u);
}

class EvaluateTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const auto root = std::filesystem::path(MUSE_TEST_TMP) / "retrieval" / "ds";
    std::filesystem::remove_all(root);
    DatasetSpec spec;
    spec.train_ids = 4;
    spec.test_ids = 4;
    spec.views_per_id = 2;
    spec.image_size = 32;
    spec.distractor_ids = 2;
    generate_dataset(spec, root, 0);
    ds_ = new Dataset(load_dataset(root));
  }
  static void TearDownTestSuite() {
    delete ds_;
    ds_ = nullptr;
  }
  static MuSeNet model() {
    ModelConfig cfg;
    cfg.input_size = 32;
    cfg.num_identities = 4;
    return build_model(cfg, 5);
  }
  static Dataset* ds_;
};

Dataset* EvaluateTest::ds_ = nullptr;

TEST_F(EvaluateTest, ReportStructureAndCsv) {
  auto m = model();
  const auto rep = evaluate(m, *ds_, parse_conditions("all"), parse_tasks("both"));
  EXPECT_EQ(rep.rows.size(), 22u);
  ASSERT_EQ(rep.mean_rows.size(), 2u);
  const auto* d = rep.find("fog+rain+snow", Task::DroneToSat);
  ASSERT_NE(d, nullptr);
  EXPECT_EQ(d->metrics.num_queries, 8u);
  EXPECT_EQ(rep.find("normal", Task::SatToDrone)->metrics.num_queries, 4u);
  double mean = 0;
  for (const auto& r : rep.rows) {
    EXPECT_LE(r.metrics.recall_at.at(1), r.metrics.recall_at.at(5));
    EXPECT_LE(r.metrics.recall_at.at(5), r.metrics.recall_at.at(10));
    if (r.task == Task::DroneToSat && r.condition != "fog+rain+snow") mean += r.metrics.recall_at.at(1);
  }
  EXPECT_NEAR(rep.find("mean", Task::DroneToSat)->metrics.recall_at.at(1), mean / 10, 1e-12);

  std::istringstream csv(report_csv(rep));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "condition,task,r1,r5,r10,ap,num_queries");
  std::vector<std::string> lines;
  while (std::getline(csv, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 24u);
  EXPECT_EQ(lines[11].rfind("mean,d2s,", 0), 0u);
  EXPECT_EQ(lines[23].rfind("mean,s2d,", 0), 0u);
  EXPECT_EQ(lines[0].rfind("normal,d2s,0.", 0) == 0 || lines[0].rfind("normal,d2s,1.", 0) == 0, true);
  const auto first_value = lines[0].substr(std::string("normal,d2s,").size(), 6);
  EXPECT_EQ(first_value.size(), 6u);
  EXPECT_EQ(first_value[1], '.');
}

TEST_F(EvaluateTest, MeanOnlyWithAllSeenConditions) {
  auto m = model();
  const auto rep = evaluate(m, *ds_, parse_conditions("fog,unseen"), parse_tasks("d2s"));
  EXPECT_EQ(rep.rows.size(), 2u);
  EXPECT_TRUE(rep.mean_rows.empty());
}

TEST_F(EvaluateTest, RepeatedEvaluationIsIdentical) {
  auto m = model();
  const auto a = evaluate(m, *ds_, parse_conditions("seen"), parse_tasks("d2s"));
  const auto b = evaluate(m, *ds_, parse_conditions("seen"), parse_tasks("d2s"));
  EXPECT_EQ(report_csv(a), report_csv(b));
}

TEST_F(EvaluateTest, NormalizationOption) {
  auto m = model();
  const auto e = embed_images(m, {ds_->test[0].satellite}, true);
  double n = 0;
  for (float v : e.values) n += static_cast<double>(v) * v;
  EXPECT_NEAR(n, 1.0, 1e-5);
}

}  // namespace
}  // namespace muse
