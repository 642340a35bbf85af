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

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include "muse/config.hpp"

namespace muse {
namespace {

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

TEST(ConfigTest, DefaultsMatchDocumentedValues) {
  const RunConfig rc;
  EXPECT_EQ(rc.dataset.train_ids, 32u);
  EXPECT_EQ(rc.dataset.test_ids, 16u);
  EXPECT_EQ(rc.dataset.views_per_id, 8u);
  EXPECT_EQ(rc.dataset.image_size, 64u);
  EXPECT_EQ(rc.dataset.distractor_ids, 8u);
  EXPECT_EQ(rc.train.epochs, 60u);
  EXPECT_EQ(rc.train.batch_per_platform, 8u);
  EXPECT_DOUBLE_EQ(rc.train.base_lr, 0.002);
  EXPECT_DOUBLE_EQ(rc.train.boosted_lr, 0.02);
  EXPECT_DOUBLE_EQ(rc.train.momentum, 0.9);
  EXPECT_DOUBLE_EQ(rc.train.weight_decay, 0.0005);
  EXPECT_EQ(rc.train.decay_epochs, (std::vector<std::size_t>{35, 50}));
  EXPECT_DOUBLE_EQ(rc.train.loss_weight_style, 1.0);
  EXPECT_EQ(rc.model.spade_placement.size(), 2u);
  EXPECT_EQ(rc.model.num_styles, 11u);
  EXPECT_TRUE(rc.explicit_keys.empty());
}

TEST(ConfigTest, ParsesSectionsCommentsAndWhitespace) {
  RunConfig rc;
  apply_config_text(rc,
                    "# experiment\n"
                    "[train]\n"
                    "  epochs = 12   # short\n"
                    "decay_epochs = 6, 9\n"
                    "deterministic=false\n"
                    "\n"
                    "[model]\n"
                    "spade = B1,B3\n"
                    "modulation = plain\n"
                    "[dataset]\n"
                    "views_per_id = 3\n");
  EXPECT_EQ(rc.train.epochs, 12u);
  EXPECT_EQ(rc.train.decay_epochs, (std::vector<std::size_t>{6, 9}));
  EXPECT_FALSE(rc.train.deterministic);
  EXPECT_EQ(rc.model.modulation, ModulationKind::Plain);
  EXPECT_EQ(rc.model.spade_placement, parse_spade_placement("B1,B3"));
  EXPECT_EQ(rc.dataset.views_per_id, 3u);
  EXPECT_TRUE(rc.is_set("train.epochs"));
  EXPECT_TRUE(rc.is_set("model.spade"));
  EXPECT_FALSE(rc.is_set("train.seed"));
}

TEST(ConfigTest, EmptyDecayListDisablesSchedule) {
  RunConfig rc;
  apply_override(rc, "train.decay_epochs=none");
  EXPECT_TRUE(rc.train.decay_epochs.empty());
}

TEST(ConfigTest, ErrorsCarryFileAndLine) {
  RunConfig rc;
  const auto msg = error_of([&] { apply_config_text(rc, "[train]\nepochs = 3\nlearning_rate = 1\n", "exp.ini"); });
  EXPECT_NE(msg.find("exp.ini:3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("learning_rate"), std::string::npos) << msg;
  EXPECT_THROW(apply_config_text(rc, "[optim]\nlr=1\n"), ConfigError);
  EXPECT_THROW(apply_config_text(rc, "epochs=1\n"), ConfigError);
  EXPECT_THROW(apply_config_text(rc, "[train\n"), ConfigError);
  EXPECT_THROW(apply_config_text(rc, "[train]\nepochs\n"), ConfigError);
  EXPECT_THROW(apply_config_text(rc, "[train]\nepochs=-2\n"), ConfigError);
  EXPECT_THROW(apply_config_text(rc, "[train]\nbase_lr=fast\n"), ConfigError);
  EXPECT_THROW(apply_config_text(rc, "[train]\ndeterministic=maybe\n"), ConfigError);
  EXPECT_THROW(apply_config_text(rc, "[model]\nmodulation=film\n"), ConfigError);
}

TEST(ConfigTest, OverridesApplyAfterFile) {
  const auto path = std::filesystem::path(MUSE_TEST_TMP) / "config_override.ini";
  std::filesystem::create_directories(path.parent_path());
  std::ofstream(path) << "[train]\nepochs = 5\nloss_weight_style = 2\n";
  RunConfig rc;
  load_config_file(rc, path.string());
  apply_override(rc, "train.epochs=7");
  EXPECT_EQ(rc.train.epochs, 7u);
  EXPECT_DOUBLE_EQ(rc.train.loss_weight_style, 2.0);
}

TEST(ConfigTest, MalformedOverridesAreUsageErrors) {
  RunConfig rc;
  EXPECT_THROW(apply_override(rc, "epochs=3"), UsageError);
  EXPECT_THROW(apply_override(rc, "train.epochs"), UsageError);
  EXPECT_THROW(apply_override(rc, "train.bogus=1"), ConfigError);
  EXPECT_THROW(load_config_file(rc, "/nonexistent/dir/x.ini"), IoError);
}

}  // namespace
}  // namespace muse
