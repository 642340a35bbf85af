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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "muse/model.hpp"

namespace muse {
namespace {

FTensor random_images(std::size_t n, std::uint64_t seed, std::size_t size = 64) {
  Rng rng(seed);
  std::vector<Real> v(n * 3 * size * size);
  for (auto& x : v) x = static_cast<Real>(rng.uniform(-1, 1));
  return FTensor::from({n, 3, size, size}, std::move(v));
}

void zero_spade_convs(MuSeNet& m) {
  for (auto& p : m.parameters()) {
    if (p.name.find("conv_w1") != std::string::npos || p.name.find("conv_b1") != std::string::npos) {
      for (auto& v : p.value.mutable_data()) v = 0;
    }
  }
}

double grad_norm(const Parameter<Real>& p) {
  double s = 0;
  for (Real g : p.value.grad()) s += static_cast<double>(g) * g;
  return std::sqrt(s);
}

ModelConfig with_placement(const char* p) {
  ModelConfig c;
  c.spade_placement = parse_spade_placement(p);
  return c;
}

TEST(ModelConfigTest, DefaultsAndValidation) {
  ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.stage_depths[0], 3u);
  EXPECT_EQ(c.num_styles, 11u);
  c.spade_placement = {4};
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(build_model(c, 1), ConfigError);
  EXPECT_THROW(parse_spade_placement("b4"), UsageError);
  EXPECT_EQ(parse_spade_placement("none"), SpadePlacement{});
  EXPECT_EQ(parse_spade_placement("b2,b3"), (SpadePlacement{2, 3}));
  EXPECT_EQ(format_spade_placement({1, 3}), "b1,b3");
}

TEST(ModelTest, ForwardShapes) {
  auto m = build_model(ModelConfig{}, 1);
  Rng rng(2);
  const auto out = m.forward(random_images(2, 3), Mode::Train, rng);
  EXPECT_EQ(out.style_feature.shape(), (Shape{2, 64, 8, 8}));
  EXPECT_EQ(out.style_logits.shape(), (Shape{2, 11}));
  EXPECT_EQ(out.content_embedding.shape(), (Shape{2, 256}));
  EXPECT_EQ(out.content_embedding_bn.shape(), (Shape{2, 256}));
  EXPECT_EQ(out.id_logits.shape(), (Shape{2, 32}));
  EXPECT_THROW(m.forward(random_images(1, 3, 32), Mode::Eval, rng), InputError);
}

TEST(ModelTest, SameSeedSameParameters) {
  auto a = build_model(ModelConfig{}, 7), b = build_model(ModelConfig{}, 7);
  ASSERT_EQ(a.parameters().size(), b.parameters().size());
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    EXPECT_EQ(a.parameters()[i].name, b.parameters()[i].name);
    const auto x = a.parameters()[i].value.data(), y = b.parameters()[i].value.data();
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin(), y.end())) << a.parameters()[i].name;
  }
}

TEST(ModelTest, PlacementControlsSpadeBlocks) {
  auto a = build_model(ModelConfig{}, 1);
  EXPECT_EQ(a.num_spade_blocks(), 2u);
  auto b = build_model(with_placement("none"), 1);
  EXPECT_EQ(b.num_spade_blocks(), 0u);
  for (const auto& p : b.parameters()) EXPECT_EQ(p.name.find("spade"), std::string::npos) << p.name;
}

TEST(ModelTest, LearningRateGroups) {
  auto m = build_model(ModelConfig{}, 1);
  std::size_t boosted = 0;
  for (const auto& p : m.parameters()) {
    const bool classifier = p.name.rfind("style_classifier.", 0) == 0 || p.name.rfind("id_classifier.", 0) == 0;
    const bool spade_conv = p.name.find(".spade.conv_") != std::string::npos;
    EXPECT_EQ(p.group == LrGroup::Boosted, classifier || spade_conv) << p.name;
    boosted += p.group == LrGroup::Boosted;
  }
  EXPECT_GT(boosted, 0u);
}

TEST(ModelTest, ParameterAccounting) {
  const auto base = count_params(build_model(with_placement("none"), 1));
  const auto two = count_params(build_model(with_placement("b2,b3"), 1));
  const auto three = count_params(build_model(with_placement("b1,b2,b3"), 5));
  EXPECT_EQ(two - base, 2u * (2u * 64u * 16u * 9u));
  EXPECT_EQ(two - base, 36864u);
  EXPECT_EQ(2 * (three - base), 3 * (two - base));
  EXPECT_EQ(count_params(build_model(ModelConfig{}, 99)), two);
}

TEST(ModelTest, EvalForwardIsDeterministicAndEmbeddingConsistent) {
  auto m = build_model(ModelConfig{}, 3);
  const auto x = random_images(2, 4);
  Rng rng(0);
  const auto a = m.forward(x, Mode::Eval, rng), b = m.forward(x, Mode::Eval, rng);
  const auto ea = a.content_embedding.data(), eb = b.content_embedding.data();
  EXPECT_TRUE(std::equal(ea.begin(), ea.end(), eb.begin(), eb.end()));
  const auto e = m.extract_embedding(x);
  EXPECT_TRUE(std::equal(ea.begin(), ea.end(), e.data().begin(), e.data().end()));
  double norm = 0;
  for (Real v : e.data()) {
    EXPECT_TRUE(std::isfinite(v));
    norm += v * v;
  }
  EXPECT_GT(norm, 0.0);
}

TEST(ModelTest, ZeroedSpadeMatchesBaseline) {
  auto full = build_model(ModelConfig{}, 11);
  auto base = build_model(with_placement("none"), 12);
  zero_spade_convs(full);
  base.copy_matching_state(full);
  const auto x = random_images(2, 5);
  const auto a = full.extract_embedding(x), b = base.extract_embedding(x);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-5);
}

TEST(ModelTest, EveryParameterReceivesGradient) {
  auto m = build_model(ModelConfig{}, 13);
  Rng rng(1);
  const auto out = m.forward(random_images(4, 6), Mode::Train, rng);
  const std::vector<int> ids{0, 5, 9, 31}, styles{0, 1, 4, 10};
  backward(add(softmax_cross_entropy<Real>(out.id_logits, ids), softmax_cross_entropy<Real>(out.style_logits, styles)));
  for (const auto& p : m.parameters()) EXPECT_GT(grad_norm(p), 0.0) << p.name;
}

TEST(ModelTest, IdentityLossReachesStyleBranchOnlyThroughModulation) {
  auto m = build_model(ModelConfig{}, 14);
  zero_spade_convs(m);
  Rng rng(1);
  const auto out = m.forward(random_images(4, 7), Mode::Train, rng);
  const std::vector<int> ids{1, 2, 3, 4};
  backward(softmax_cross_entropy<Real>(out.id_logits, ids));
  for (const auto& p : m.parameters()) {
    if (p.name.rfind("style.", 0) == 0) EXPECT_LT(grad_norm(p), 1e-7) << p.name;
  }
  // With live modulation the coupling carries gradient.
  auto live = build_model(ModelConfig{}, 14);
  const auto out2 = live.forward(random_images(4, 7), Mode::Train, rng);
  backward(softmax_cross_entropy<Real>(out2.id_logits, ids));
  EXPECT_GT(grad_norm(*live.find_parameter("style.stem.conv")), 0.0);
}

TEST(CheckpointTest, RoundTripAndCorruption) {
  const auto dir = std::filesystem::path(MUSE_TEST_TMP) / "model";
  std::filesystem::create_directories(dir);
  ModelConfig cfg;
  cfg.spade_placement = {1, 3};
  cfg.modulation = ModulationKind::Plain;
  auto m = build_model(cfg, 21);
  Rng rng(3);
  m.forward(random_images(4, 8), Mode::Train, rng);  // non-default BN statistics
  const auto path = (dir / "m.ckpt").string();
  save_checkpoint(m, path);
  auto loaded = load_checkpoint(path);
  EXPECT_EQ(loaded.config().spade_placement, cfg.spade_placement);
  EXPECT_EQ(loaded.config().modulation, ModulationKind::Plain);
  const auto x = random_images(2, 9);
  const auto a = m.extract_embedding(x), b = loaded.extract_embedding(x);
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin(), b.data().end()));

  std::ofstream(dir / "bad.ckpt") << "not a checkpoint\n";
  EXPECT_THROW(load_checkpoint((dir / "bad.ckpt").string()), InputError);
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream(dir / "trunc.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 4);
  }
  EXPECT_THROW(load_checkpoint((dir / "trunc.ckpt").string()), InputError);
  EXPECT_THROW(load_checkpoint((dir / "missing.ckpt").string()), IoError);
}

TEST(ImageBatchTest, Normalization) {
  const std::vector<std::uint8_t> rgb{0, 255, 51, 0, 255, 51, 0, 255, 51, 0, 255, 51};
  std::vector<Real> batch(12);
  write_image_to_batch(rgb, 2, 0, batch);
  EXPECT_FLOAT_EQ(batch[0], -1.0f);  // channel 0 plane
  EXPECT_FLOAT_EQ(batch[4], 1.0f);   // channel 1 plane
  EXPECT_NEAR(batch[8], -0.6f, 1e-6);
}

}  // namespace
}  // namespace muse
