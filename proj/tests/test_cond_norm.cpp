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
#include <vector>

#include "muse/cond_norm.hpp"

namespace muse {
namespace {

using D = Tensor<double>;

std::vector<double> values(const D& t) { return {t.data().begin(), t.data().end()}; }

D random(Rng& rng, Shape s, double lo = -1, double hi = 1) {
  std::vector<double> v(shape_numel(s));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return D::from(std::move(s), std::move(v));
}

// Reference for the 2x2 plane [[1,2],[3,4]]: mean 2.5, population variance 1.25.
std::vector<double> standardized_example(double eps = kNormEps) {
  std::vector<double> out;
  for (double x : {1.0, 2.0, 3.0, 4.0}) out.push_back((x - 2.5) / std::sqrt(1.25 + eps));
  return out;
}

void expect_near(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << i;
}

// Centre-tap kernels on a one-channel style map: sigma = s * v, mu = b * v.
ResidualSpadeState<double> fixed_modulation(double s, double b) {
  ResidualSpadeState<double> st;
  std::vector<double> ks(9, 0.0), kb(9, 0.0);
  ks[4] = s;
  kb[4] = b;
  st.conv_w1 = D::from({1, 1, 3, 3}, ks, true);
  st.conv_b1 = D::from({1, 1, 3, 3}, kb, true);
  st.inner = InstanceNormState<double>::make(1);
  return st;
}

const D kPlane = D::from({1, 1, 2, 2}, {1, 2, 3, 4});
const D kUnitStyle = D::full({1, 1, 1, 1}, 1.0);

TEST(BatchNormTest, EvalWithUnitStatsIsIdentity) {
  auto st = BatchNormState<double>::make(2);
  st.mode = Mode::Eval;
  Rng rng(1);
  const auto x = random(rng, {2, 2, 3, 3});
  const auto y = batch_norm<double>(x, st);
  const double f = 1.0 / std::sqrt(1.0 + kNormEps);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y.data()[i], x.data()[i] * f, 1e-15);
}

TEST(BatchNormTest, TwoPointStandardization) {
  auto st = BatchNormState<double>::make(1);
  st.eps = 1e-12;
  const auto y = batch_norm<double>(D::from({2, 1, 1, 1}, {1, 3}), st);
  expect_near(values(y), {-1, 1}, 1e-9);
  // run <- 0.9 run + 0.1 batch, variance unbiased (2 samples: 1 -> 2).
  EXPECT_NEAR(st.running_mean[0], 0.2, 1e-15);
  EXPECT_NEAR(st.running_var[0], 0.9 + 0.1 * 2.0, 1e-15);
}

TEST(BatchNormTest, EvalIsDeterministicAndImmutable) {
  auto st = BatchNormState<double>::make(3);
  Rng rng(2);
  batch_norm<double>(random(rng, {4, 3, 2, 2}), st);  // move stats away from defaults
  st.mode = Mode::Eval;
  const auto mean = st.running_mean, var = st.running_var;
  const auto x = random(rng, {2, 3, 2, 2});
  const auto a = batch_norm<double>(x, st), b = batch_norm<double>(x, st);
  EXPECT_EQ(values(a), values(b));
  EXPECT_EQ(st.running_mean, mean);
  EXPECT_EQ(st.running_var, var);
  for (double v : st.running_var) EXPECT_GE(v, 0.0);
}

TEST(BatchNormTest, SingleValueStatsIsUsageError) {
  auto st = BatchNormState<double>::make(2);
  EXPECT_THROW(batch_norm<double>(D::zeros({1, 2}), st), UsageError);
  EXPECT_THROW(batch_norm<double>(D::zeros({1, 3, 2, 2}), st), ConfigError);
}

TEST(InstanceNormTest, PlaneExample) {
  const auto st = InstanceNormState<double>::make(1);
  const auto y = values(instance_norm<double>(kPlane, st));
  expect_near(y, {-1.3416, -0.4472, 0.4472, 1.3416}, 1e-4);
  expect_near(y, standardized_example(), 1e-12);
}

TEST(InstanceNormTest, ConstantPlaneAndAffine) {
  auto st = InstanceNormState<double>::make(1);
  const auto flat = instance_norm<double>(D::full({1, 1, 3, 3}, 5.0), st);
  for (double v : flat.data()) EXPECT_NEAR(v, 0.0, 1e-12);
  st.gamma = D::from({1}, {2.0}, true);
  st.beta = D::from({1}, {1.0}, true);
  std::vector<double> expected;
  for (double z : standardized_example()) expected.push_back(2 * z + 1);
  expect_near(values(instance_norm<double>(kPlane, st)), expected, 1e-12);
}

TEST(InstanceNormTest, PlaneMomentsProperty) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random(rng, {3, 4, 5, 5}, -10, 10);
    const auto y = standardize_planes<double>(x);
    for (std::size_t p = 0; p < 12; ++p) {
      double mean = 0, var = 0;
      for (std::size_t i = 0; i < 25; ++i) mean += y.data()[p * 25 + i];
      mean /= 25;
      for (std::size_t i = 0; i < 25; ++i) var += std::pow(y.data()[p * 25 + i] - mean, 2);
      var /= 25;
      EXPECT_LT(std::abs(mean), 1e-5);
      EXPECT_LT(std::abs(var - 1), 1e-3);
    }
  }
}

TEST(IbnSplitTest, DecomposesIntoHalves) {
  Rng rng(6);
  const auto x = random(rng, {3, 2, 3, 3});
  const auto in_st = InstanceNormState<double>::make(1);
  auto bn_a = BatchNormState<double>::make(1), bn_b = BatchNormState<double>::make(1);
  const auto y = ibn_split<double>(x, in_st, bn_a);
  EXPECT_EQ(y.shape(), x.shape());
  const auto want_in = instance_norm<double>(slice_channels<double>(x, 0, 1), in_st);
  const auto want_bn = batch_norm<double>(slice_channels<double>(x, 1, 2), bn_b);
  EXPECT_EQ(values(slice_channels<double>(y, 0, 1)), values(want_in));
  EXPECT_EQ(values(slice_channels<double>(y, 1, 2)), values(want_bn));
  EXPECT_THROW(ibn_split<double>(D::zeros({2, 3, 2, 2}), in_st, bn_a), ConfigError);
}

TEST(ModulationTest, ZeroWeightsAndShapeContract) {
  Rng rng(7);
  auto st = ResidualSpadeState<double>::make(4, 16, rng);
  st.conv_w1 = D::zeros(st.conv_w1.shape(), true);
  st.conv_b1 = D::zeros(st.conv_b1.shape(), true);
  const auto maps = compute_modulation<double>(random(rng, {2, 4, 8, 8}), st, {16, 16});
  EXPECT_EQ(maps.scale.shape(), (Shape{2, 16, 16, 16}));
  EXPECT_EQ(maps.bias.shape(), maps.scale.shape());
  for (double v : maps.scale.data()) EXPECT_EQ(v, 0.0);
  for (double v : maps.bias.data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(compute_modulation<double>(random(rng, {2, 4, 3, 3}), st, {16, 16}), ConfigError);
  EXPECT_EQ(st.conv_w1.shape(), st.conv_b1.shape());
}

TEST(ModulationTest, InitStatistics) {
  Rng rng(8);
  const auto st = ResidualSpadeState<double>::make(64, 16, rng);
  double s = 0, s2 = 0;
  for (double v : st.conv_w1.data()) {
    s += v;
    s2 += v * v;
  }
  const double n = static_cast<double>(st.conv_w1.numel());
  EXPECT_NEAR(s / n, 0.0, 0.002);
  EXPECT_NEAR(std::sqrt(s2 / n), 0.02, 0.001);
}

// With a 1x1 all-ones style map upsampled by 2 and centre-only kernels, the
// modulation maps are the constants (s, b) everywhere on the 2x2 plane.
TEST(SpadeTest, ConstantModulationExamples) {
  {
    const auto st = fixed_modulation(1.0, 0.0);
    expect_near(values(spade<double>(kPlane, kUnitStyle, st)), standardized_example(), 1e-12);
  }
  {
    const auto st = fixed_modulation(0.0, 0.7);
    const auto y = spade<double>(kPlane, kUnitStyle, st);
    for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 0.7);
  }
  {
    const auto st = fixed_modulation(2.0, 1.0);
    expect_near(values(spade<double>(kPlane, kUnitStyle, st)), {-1.6833, 0.1056, 1.8944, 3.6833}, 1e-4);
  }
}

TEST(ResidualSpadeTest, ConstantModulationExample) {
  const auto st = fixed_modulation(0.5, 1.0);
  expect_near(values(residual_spade<double>(kPlane, kUnitStyle, st)), {-1.0124, 0.3292, 1.6708, 3.0124}, 1e-4);
}

TEST(ResidualSpadeTest, ZeroConvsCollapseToInstanceNorm) {
  Rng rng(9);
  auto st = ResidualSpadeState<float>::make(8, 4, rng);
  st.conv_w1 = Tensor<float>::zeros(st.conv_w1.shape(), true);
  st.conv_b1 = Tensor<float>::zeros(st.conv_b1.shape(), true);
  std::vector<float> xv(2 * 4 * 8 * 8), sv(2 * 8 * 4 * 4);
  for (auto& v : xv) v = static_cast<float>(rng.uniform(-3, 3));
  for (auto& v : sv) v = static_cast<float>(rng.uniform(-3, 3));
  const auto x = Tensor<float>::from({2, 4, 8, 8}, xv), s = Tensor<float>::from({2, 8, 4, 4}, sv);
  const auto a = residual_spade<float>(x, s, st), b = instance_norm<float>(x, st.inner);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a.data()[i], b.data()[i]);
}

TEST(ResidualSpadeTest, ConstantPlaneGivesBias) {
  const auto st = fixed_modulation(0.5, 1.0);
  const auto y = residual_spade<double>(D::full({1, 1, 2, 2}, 3.0), kUnitStyle, st);
  for (double v : y.data()) EXPECT_NEAR(v, 1.0, 1e-9);
}

TEST(ResidualSpadeTest, DiffersFromSpadeByNormalizedInput) {
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const auto st = ResidualSpadeState<double>::make(3, 2, rng, 0.5);
    const auto x = random(rng, {2, 2, 4, 4}), s = random(rng, {2, 3, 2, 2});
    const auto r = residual_spade<double>(x, s, st), p = spade<double>(x, s, st);
    const auto in = instance_norm<double>(x, st.inner);
    for (std::size_t i = 0; i < r.numel(); ++i) EXPECT_NEAR(r.data()[i] - p.data()[i], in.data()[i], 1e-6);
  }
}

TEST(ResidualSpadeTest, GradientReachesConvsAndStyle) {
  Rng rng(11);
  auto st = ResidualSpadeState<double>::make(3, 2, rng, 0.3);
  const auto x = random(rng, {2, 2, 4, 4});
  auto s = random(rng, {2, 3, 2, 2});
  s = D::from(s.shape(), values(s), true);
  backward(sum(residual_spade<double>(x, s, st)));
  auto nonzero = [](std::span<const double> g) {
    for (double v : g)
      if (v != 0) return true;
    return false;
  };
  EXPECT_TRUE(nonzero(st.conv_w1.grad()));
  EXPECT_TRUE(nonzero(st.conv_b1.grad()));
  EXPECT_TRUE(nonzero(s.grad()));
}

}  // namespace
}  // namespace muse
