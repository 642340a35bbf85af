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

#include <set>

#include "muse/weather.hpp"

namespace muse {
namespace {

// Deterministic textured fixture.
Image fixture(std::size_t size = 32) {
  Image img(size, size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      img.at(x, y, 0) = static_cast<std::uint8_t>((x * 7 + y * 3) % 200 + 20);
      img.at(x, y, 1) = static_cast<std::uint8_t>((x * x + y) % 180 + 30);
      img.at(x, y, 2) = static_cast<std::uint8_t>(((x / 4 + y / 4) % 2) * 120 + 40);
    }
  return img;
}

Image styled(StyleKind s, std::uint64_t seed) {
  Rng rng(seed);
  return apply_style(fixture(), s, rng);
}

TEST(StyleLabelTest, CanonicalOrder) {
  EXPECT_EQ(style_label(Platform::Drone, StyleKind::Rain), 3);
  EXPECT_EQ(style_label(Platform::Satellite, StyleKind::Normal), 0);
  EXPECT_EQ(style_label(Platform::Drone, StyleKind::Normal), 1);
  EXPECT_THROW(style_label(Platform::Satellite, StyleKind::Fog), UsageError);
  std::set<int> labels{style_label(Platform::Satellite, StyleKind::Normal)};
  for (auto s : kAllStyles) {
    EXPECT_EQ(style_label(Platform::Drone, s), style_index(s) + 1);
    labels.insert(style_label(Platform::Drone, s));
  }
  EXPECT_EQ(labels.size(), 11u);
  EXPECT_EQ(*labels.begin(), 0);
  EXPECT_EQ(*labels.rbegin(), 10);
}

TEST(StyleNameTest, CliNamesRoundTrip) {
  const char* names[] = {"normal", "fog",      "rain", "snow",         "fog+rain",
                         "fog+snow", "rain+snow", "dark", "overexposure", "wind"};
  for (std::size_t i = 0; i < 10; ++i) {
    ASSERT_TRUE(parse_style(names[i]).has_value()) << names[i];
    EXPECT_EQ(*parse_style(names[i]), kAllStyles[i]);
    EXPECT_EQ(style_name(kAllStyles[i]), names[i]);
  }
  EXPECT_FALSE(parse_style("fog+rain+snow").has_value());
  EXPECT_TRUE(Condition::parse("fog+rain+snow")->composite);
  EXPECT_FALSE(Condition::parse("hail").has_value());
}

TEST(OverexposureTest, ClipArithmetic) {
  Image a(1, 1, 100), b(1, 1, 200);
  EXPECT_EQ(weather::brightness(a, 1.6, 10).at(0, 0, 0), 170);
  EXPECT_EQ(weather::brightness(b, 1.6, 30).at(0, 0, 0), 255);
}

TEST(ApplyStyleTest, NormalIsIdentityCopy) { EXPECT_EQ(styled(StyleKind::Normal, 5), fixture()); }

TEST(ApplyStyleTest, DeterministicAndChanging) {
  for (auto s : kAllStyles) {
    EXPECT_EQ(styled(s, 42), styled(s, 42)) << style_name(s);
    if (s != StyleKind::Normal) {
      EXPECT_NE(styled(s, 42), fixture()) << style_name(s);
    }
  }
}

TEST(ApplyStyleTest, SaturationSafety) {
  EXPECT_EQ(saturate_u8(-12.0), 0);
  EXPECT_EQ(saturate_u8(300.0), 255);
  // Out-of-range intermediates clamp instead of wrapping.
  Image white(16, 16, 255), black(16, 16, 0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng r1(seed), r2(seed);
    for (auto p : apply_style(white, StyleKind::Overexposure, r1).pixels) EXPECT_EQ(p, 255);
    for (auto p : apply_style(black, StyleKind::Dark, r2).pixels) EXPECT_EQ(p, 0);
  }
  // Fog over black lifts every value into [0.4, 0.6] * 255.
  Rng rng(3);
  const Image f = apply_style(black, StyleKind::Fog, rng);
  for (auto p : f.pixels) {
    EXPECT_GE(p, 101);
    EXPECT_LE(p, 154);
  }
}

TEST(ApplyStyleTest, CompositionIsLiteral) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng joint(seed), chained(seed);
    const Image a = apply_style(fixture(), StyleKind::FogRain, joint);
    const Image b = apply_style(apply_style(fixture(), StyleKind::Fog, chained), StyleKind::Rain, chained);
    EXPECT_EQ(a, b);
    Rng j2(seed), c2(seed);
    EXPECT_EQ(apply_style(fixture(), StyleKind::RainSnow, j2),
              apply_style(apply_style(fixture(), StyleKind::Rain, c2), StyleKind::Snow, c2));
  }
}

TEST(RainTest, StreakCoverageProfile) {
  // Vertical streak through column 5 on black, gray 200 at 50% opacity.
  const Image black(12, 12, 0);
  const std::vector<weather::Streak> streak = {{5.0, 2.0, 8.0, 0.0, 200.0}};
  const Image thin = weather::rain(black, streak, 0.5, 1.0);
  EXPECT_EQ(thin.at(5, 5, 0), 100);
  EXPECT_EQ(thin.at(4, 5, 0), 0);
  const Image wide = weather::rain(black, streak, 0.5, 2.0);
  EXPECT_EQ(wide.at(5, 5, 0), 100);
  EXPECT_EQ(wide.at(4, 5, 1), 50);
  EXPECT_EQ(wide.at(6, 5, 2), 50);
  EXPECT_EQ(wide.at(3, 5, 0), 0);
  EXPECT_EQ(wide.at(5, 11, 0), 50);  // falloff past the end point at y = 10
}

TEST(ApplyStyleTest, DarkAndOverexposureShiftMean) {
  const double base = mean_intensity(fixture());
  EXPECT_LT(mean_intensity(styled(StyleKind::Dark, 9)), 0.6 * base);
  EXPECT_GT(mean_intensity(styled(StyleKind::Overexposure, 9)), 1.3 * base);
}

TEST(UnseenCompositeTest, DistinctAndBrighterThanRain) {
  Rng a(77), b(77);
  const Image comp = unseen_composite(fixture(), a);
  EXPECT_EQ(comp, unseen_composite(fixture(), b));
  for (auto s : kAllStyles) EXPECT_NE(comp, styled(s, 77)) << style_name(s);
  EXPECT_GT(mean_intensity(comp), mean_intensity(styled(StyleKind::Rain, 77)));
  Rng c(77);
  EXPECT_EQ(apply_condition(fixture(), Condition::unseen(), c), comp);
}

TEST(WindTest, KernelLengthIsOddInRange) {
  // A single bright pixel smears into a line whose extent is the kernel length.
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Image img(41, 41, 0);
    for (std::size_t c = 0; c < 3; ++c) img.at(20, 20, c) = 255;
    Rng rng(seed);
    const Image out = apply_style(img, StyleKind::Wind, rng);
    std::size_t lit = 0;
    for (std::size_t i = 0; i < out.pixels.size(); i += 3) lit += out.pixels[i] > 0;
    EXPECT_GE(lit, 9u);
  }
}

}  // namespace
}  // namespace muse
