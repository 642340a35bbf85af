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

#pragma once

// Normalisation layers: batch norm, instance norm, the IBN channel split
// and the two style-conditioned variants (SPADE and Residual SPADE).

#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "muse/error.hpp"
#include "muse/ops.hpp"
#include "muse/rng.hpp"
#include "muse/tensor.hpp"

namespace muse {

inline constexpr double kNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

namespace detail {

// Views x as groups of `inner`-long runs: element (o, g, i) lives at
// (o * groups + g) * inner + i. Planes of N x C x H x W are (1, N*C, H*W);
// channels are (N, C, H*W).
struct GroupLayout {
  std::size_t outer, groups, inner;
  std::size_t count() const { return outer * inner; }
  std::size_t at(std::size_t o, std::size_t g, std::size_t i) const { return (o * groups + g) * inner + i; }
};

inline GroupLayout channel_layout(const Shape& s) {
  if (s.size() == 2) return {s[0], s[1], 1};
  if (s.size() == 4) return {s[0], s[1], s[2] * s[3]};
  throw ConfigError("batch_norm: expected rank 2 or 4 input, got " + shape_str(s));
}

// Zero-mean, unit-variance standardisation of every group using its own
// population statistics. Reports the statistics so callers can track them.
template <typename T>
Tensor<T> standardize_groups(const Tensor<T>& input, GroupLayout lay, double eps, const char* op,
                             std::vector<T>* mean_out = nullptr, std::vector<T>* var_out = nullptr) {
  const auto in = input.data();
  std::vector<T> out(in.size());
  auto xhat = std::make_shared<std::vector<T>>(in.size());
  auto invstd = std::make_shared<std::vector<T>>(lay.groups);
  if (mean_out) mean_out->assign(lay.groups, T{0});
  if (var_out) var_out->assign(lay.groups, T{0});
  const T m = static_cast<T>(lay.count());
  for (std::size_t g = 0; g < lay.groups; ++g) {
    T mean{0};
    for (std::size_t o = 0; o < lay.outer; ++o)
      for (std::size_t i = 0; i < lay.inner; ++i) mean += in[lay.at(o, g, i)];
    mean /= m;
    T var{0};
    for (std::size_t o = 0; o < lay.outer; ++o) {
      for (std::size_t i = 0; i < lay.inner; ++i) {
        const T d = in[lay.at(o, g, i)] - mean;
        var += d * d;
      }
    }
    var /= m;
    const T is = T{1} / std::sqrt(var + static_cast<T>(eps));
    (*invstd)[g] = is;
    for (std::size_t o = 0; o < lay.outer; ++o) {
      for (std::size_t i = 0; i < lay.inner; ++i) {
        const std::size_t idx = lay.at(o, g, i);
        (*xhat)[idx] = (in[idx] - mean) * is;
      }
    }
    if (mean_out) (*mean_out)[g] = mean;
    if (var_out) (*var_out)[g] = var;
  }
  std::copy(xhat->begin(), xhat->end(), out.begin());
  auto x = input.node();
  return make_result<T>(op, input.shape(), std::move(out), {x}, [x, xhat, invstd, lay, m](Node<T>& self) {
    auto g = x->ensure_grad();
    for (std::size_t gr = 0; gr < lay.groups; ++gr) {
      T sum_dy{0}, sum_dy_xhat{0};
      for (std::size_t o = 0; o < lay.outer; ++o) {
        for (std::size_t i = 0; i < lay.inner; ++i) {
          const std::size_t idx = lay.at(o, gr, i);
          sum_dy += self.grad[idx];
          sum_dy_xhat += self.grad[idx] * (*xhat)[idx];
        }
      }
      const T is = (*invstd)[gr];
      for (std::size_t o = 0; o < lay.outer; ++o) {
        for (std::size_t i = 0; i < lay.inner; ++i) {
          const std::size_t idx = lay.at(o, gr, i);
          g[idx] += is / m * (m * self.grad[idx] - sum_dy - (*xhat)[idx] * sum_dy_xhat);
        }
      }
    }
  });
}

// (x - mean[c]) / sqrt(var[c] + eps) with constant statistics.
template <typename T>
Tensor<T> normalize_fixed(const Tensor<T>& input, GroupLayout lay, const std::vector<T>& mean,
                          const std::vector<T>& var, double eps) {
  const auto in = input.data();
  std::vector<T> out(in.size());
  auto invstd = std::make_shared<std::vector<T>>(lay.groups);
  for (std::size_t g = 0; g < lay.groups; ++g) {
    const T is = T{1} / std::sqrt(var[g] + static_cast<T>(eps));
    (*invstd)[g] = is;
    for (std::size_t o = 0; o < lay.outer; ++o) {
      for (std::size_t i = 0; i < lay.inner; ++i) {
        const std::size_t idx = lay.at(o, g, i);
        out[idx] = (in[idx] - mean[g]) * is;
      }
    }
  }
  auto x = input.node();
  return make_result<T>("batch_norm", input.shape(), std::move(out), {x}, [x, invstd, lay](Node<T>& self) {
    auto g = x->ensure_grad();
    for (std::size_t gr = 0; gr < lay.groups; ++gr) {
      for (std::size_t o = 0; o < lay.outer; ++o) {
        for (std::size_t i = 0; i < lay.inner; ++i) {
          const std::size_t idx = lay.at(o, gr, i);
          g[idx] += self.grad[idx] * (*invstd)[gr];
        }
      }
    }
  });
}

}  // namespace detail

// y = gamma[c] * x + beta[c] for rank-2 (N x C) or rank-4 inputs.
template <typename T>
Tensor<T> channel_affine(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta) {
  const auto lay = detail::channel_layout(input.shape());
  if (gamma.numel() != lay.groups || beta.numel() != lay.groups) {
    throw ConfigError("channel_affine: " + std::to_string(lay.groups) + " channels but gamma " +
                      shape_str(gamma.shape()) + ", beta " + shape_str(beta.shape()));
  }
  const auto in = input.data(), gm = gamma.data(), bt = beta.data();
  std::vector<T> out(in.size());
  for (std::size_t o = 0; o < lay.outer; ++o)
    for (std::size_t g = 0; g < lay.groups; ++g)
      for (std::size_t i = 0; i < lay.inner; ++i) {
        const std::size_t idx = lay.at(o, g, i);
        out[idx] = gm[g] * in[idx] + bt[g];
      }
  auto x = input.node(), gn = gamma.node(), bn = beta.node();
  return detail::make_result<T>("channel_affine", input.shape(), std::move(out), {x, gn, bn},
                                [x, gn, bn, lay](detail::Node<T>& self) {
                                  std::span<T> gx, gg, gb;
                                  if (x->requires_grad) gx = x->ensure_grad();
                                  if (gn->requires_grad) gg = gn->ensure_grad();
                                  if (bn->requires_grad) gb = bn->ensure_grad();
                                  for (std::size_t o = 0; o < lay.outer; ++o)
                                    for (std::size_t g = 0; g < lay.groups; ++g)
                                      for (std::size_t i = 0; i < lay.inner; ++i) {
                                        const std::size_t idx = lay.at(o, g, i);
                                        const T dy = self.grad[idx];
                                        if (!gx.empty()) gx[idx] += dy * gn->data[g];
                                        if (!gg.empty()) gg[g] += dy * x->data[idx];
                                        if (!gb.empty()) gb[g] += dy;
                                      }
                                });
}

template <typename T>
struct BatchNormState {
  Tensor<T> gamma, beta;
  std::vector<T> running_mean, running_var;
  double momentum = kBatchNormMomentum;
  double eps = kNormEps;
  Mode mode = Mode::Train;

  static BatchNormState make(std::size_t channels) {
    BatchNormState s;
    s.gamma = Tensor<T>::full({channels}, T{1}, true);
    s.beta = Tensor<T>::zeros({channels}, true);
    s.running_mean.assign(channels, T{0});
    s.running_var.assign(channels, T{1});
    return s;
  }
  std::size_t channels() const { return running_mean.size(); }
};

template <typename T>
struct InstanceNormState {
  Tensor<T> gamma, beta;
  double eps = kNormEps;

  static InstanceNormState make(std::size_t channels) {
    InstanceNormState s;
    s.gamma = Tensor<T>::full({channels}, T{1}, true);
    s.beta = Tensor<T>::zeros({channels}, true);
    return s;
  }
  std::size_t channels() const { return gamma.numel(); }
};

// Per-position scale sigma(v) and bias mu(v) derived from a style feature.
template <typename T>
struct ModulationMaps {
  Tensor<T> scale;
  Tensor<T> bias;
};

// Conv_w1 / Conv_b1 are bias-free 3x3 convolutions from the style channels
// to the modulated channels, stored as C' x C_style x 3 x 3.
template <typename T>
struct ResidualSpadeState {
  Tensor<T> conv_w1, conv_b1;
  InstanceNormState<T> inner;

  static ResidualSpadeState make(std::size_t style_channels, std::size_t channels, Rng& rng,
                                 double init_std = 0.02) {
    ResidualSpadeState s;
    auto draw = [&] {
      std::vector<T> v(channels * style_channels * 9);
      for (auto& x : v) x = static_cast<T>(rng.normal(0.0, init_std));
      return Tensor<T>::from({channels, style_channels, 3, 3}, std::move(v), true);
    };
    s.conv_w1 = draw();
    s.conv_b1 = draw();
    s.inner = InstanceNormState<T>::make(channels);
    return s;
  }
  std::size_t style_channels() const { return conv_w1.dim(1); }
  std::size_t channels() const { return conv_w1.dim(0); }
};

// Train: normalise by batch statistics and update the running estimates
// (unbiased variance). Eval: normalise by the running estimates. The per
// channel affine is applied last.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, BatchNormState<T>& state) {
  const auto lay = detail::channel_layout(input.shape());
  if (lay.groups != state.channels()) {
    throw ConfigError("batch_norm: input " + shape_str(input.shape()) + " but state has " +
                      std::to_string(state.channels()) + " channels");
  }
  Tensor<T> normalized;
  if (state.mode == Mode::Train) {
    const std::size_t m = lay.count();
    if (m < 2) {
      throw UsageError("batch_norm: training mode needs at least 2 values per channel, input " +
                       shape_str(input.shape()));
    }
    std::vector<T> mean, var;
    normalized = detail::standardize_groups<T>(input, lay, state.eps, "batch_norm", &mean, &var);
    const T mom = static_cast<T>(state.momentum);
    const T unbias = static_cast<T>(m) / static_cast<T>(m - 1);
    for (std::size_t c = 0; c < lay.groups; ++c) {
      state.running_mean[c] = (T{1} - mom) * state.running_mean[c] + mom * mean[c];
      state.running_var[c] = (T{1} - mom) * state.running_var[c] + mom * var[c] * unbias;
    }
  } else {
    normalized = detail::normalize_fixed<T>(input, lay, state.running_mean, state.running_var, state.eps);
  }
  return channel_affine<T>(normalized, state.gamma, state.beta);
}

// Per-(sample, channel) plane standardisation without affine.
template <typename T>
Tensor<T> standardize_planes(const Tensor<T>& input, double eps = kNormEps) {
  detail::require_rank(input.shape(), 4, "instance_norm", "input");
  const detail::GroupLayout lay{1, input.dim(0) * input.dim(1), input.dim(2) * input.dim(3)};
  return detail::standardize_groups<T>(input, lay, eps, "instance_norm");
}

template <typename T>
Tensor<T> instance_norm(const Tensor<T>& input, const InstanceNormState<T>& state) {
  detail::require_rank(input.shape(), 4, "instance_norm", "input");
  if (input.dim(1) != state.channels()) {
    throw ConfigError("instance_norm: input " + shape_str(input.shape()) + " but state has " +
                      std::to_string(state.channels()) + " channels");
  }
  return channel_affine<T>(standardize_planes<T>(input, state.eps), state.gamma, state.beta);
}

// First C/2 channels instance-normalised, last C/2 batch-normalised.
template <typename T>
Tensor<T> ibn_split(const Tensor<T>& input, const InstanceNormState<T>& in_state, BatchNormState<T>& bn_state) {
  detail::require_rank(input.shape(), 4, "ibn_split", "input");
  const std::size_t c = input.dim(1);
  if (c % 2 != 0) throw ConfigError("ibn_split: channel count must be even, got " + std::to_string(c));
  const std::size_t half = c / 2;
  return concat_channels<T>(instance_norm<T>(slice_channels<T>(input, 0, half), in_state),
                            batch_norm<T>(slice_channels<T>(input, half, c), bn_state));
}

// Upsamples the style feature to target_hw, then sigma = conv_w1(.),
// mu = conv_b1(.), both stride 1 with padding 1.
template <typename T>
ModulationMaps<T> compute_modulation(const Tensor<T>& style_feature, const ResidualSpadeState<T>& state,
                                     std::pair<std::size_t, std::size_t> target_hw) {
  detail::require_rank(style_feature.shape(), 4, "compute_modulation", "style feature");
  const std::size_t h = style_feature.dim(2), w = style_feature.dim(3);
  const auto [th, tw] = target_hw;
  if (th % h != 0 || tw % w != 0 || th / h != tw / w || th < h) {
    throw ConfigError("compute_modulation: style feature " + shape_str(style_feature.shape()) +
                      " cannot be upsampled by an integer factor to " + std::to_string(th) + "x" +
                      std::to_string(tw));
  }
  const auto up = upsample_nearest<T>(style_feature, th / h);
  const Conv2dOptions same{1, 1};
  return {conv2d<T>(up, state.conv_w1, same), conv2d<T>(up, state.conv_b1, same)};
}

// out = z * (residual ? 1 + scale : scale) + bias.
template <typename T>
Tensor<T> modulate(const Tensor<T>& z, const ModulationMaps<T>& maps, bool residual) {
  if (maps.scale.shape() != z.shape() || maps.bias.shape() != z.shape()) {
    throw ConfigError("modulate: maps " + shape_str(maps.scale.shape()) + " do not match activation " +
                      shape_str(z.shape()));
  }
  const auto x = z.data(), s = maps.scale.data(), b = maps.bias.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * (residual ? T{1} + s[i] : s[i]) + b[i];
  auto zn = z.node(), sn = maps.scale.node(), bn = maps.bias.node();
  return detail::make_result<T>(residual ? "residual_spade" : "spade", z.shape(), std::move(out), {zn, sn, bn},
                                [zn, sn, bn, residual](detail::Node<T>& self) {
                                  const std::size_t n = self.grad.size();
                                  if (zn->requires_grad) {
                                    auto g = zn->ensure_grad();
                                    for (std::size_t i = 0; i < n; ++i)
                                      g[i] += self.grad[i] * (residual ? T{1} + sn->data[i] : sn->data[i]);
                                  }
                                  if (sn->requires_grad) {
                                    auto g = sn->ensure_grad();
                                    for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * zn->data[i];
                                  }
                                  if (bn->requires_grad) {
                                    auto g = bn->ensure_grad();
                                    for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i];
                                  }
                                });
}

// sigma(v) * (u - mean(u)) / std(u) + mu(v); the inner normalisation is
// affine-free.
template <typename T>
Tensor<T> spade(const Tensor<T>& input, const Tensor<T>& style_feature, const ResidualSpadeState<T>& state) {
  detail::require_rank(input.shape(), 4, "spade", "input");
  const auto maps = compute_modulation<T>(style_feature, state, {input.dim(2), input.dim(3)});
  return modulate<T>(standardize_planes<T>(input, state.inner.eps), maps, false);
}

// IN(u) * (1 + sigma(v)) + mu(v) with IN carrying its own affine.
template <typename T>
Tensor<T> residual_spade(const Tensor<T>& input, const Tensor<T>& style_feature,
                         const ResidualSpadeState<T>& state) {
  detail::require_rank(input.shape(), 4, "residual_spade", "input");
  const auto maps = compute_modulation<T>(style_feature, state, {input.dim(2), input.dim(3)});
  return modulate<T>(instance_norm<T>(input, state.inner), maps, true);
}

}  // namespace muse
