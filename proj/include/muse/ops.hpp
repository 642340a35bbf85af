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

// Differentiable operations over Tensor<T>. Activations use N x C x H x W.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "muse/error.hpp"
#include "muse/rng.hpp"
#include "muse/tensor.hpp"

namespace muse {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// Test hook: scales the kernel gradient of one named op so the gradient
// checker can be shown to catch a broken backward pass.
struct FaultInjection {
  std::string op;
  double scale = 1.0;
};

inline FaultInjection& fault_injection() {
  static FaultInjection f;
  return f;
}

inline double fault_scale(std::string_view op) {
  const auto& f = fault_injection();
  return f.op == op ? f.scale : 1.0;
}

inline void require_rank(const Shape& s, std::size_t rank, const char* op, const char* what) {
  if (s.size() != rank) {
    throw ConfigError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                      shape_str(s));
  }
}

}  // namespace detail

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// Cross-correlation (no kernel flip). kernel is K x C x kh x kw, bias is K.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>* bias,
                 Conv2dOptions opt = {}) {
  using namespace detail;
  require_rank(input.shape(), 4, "conv2d", "input");
  require_rank(kernel.shape(), 4, "conv2d", "kernel");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t k = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  const std::size_t s = opt.stride, p = opt.padding;
  if (s == 0) throw ConfigError("conv2d: stride must be positive");
  if (kernel.dim(1) != c) {
    throw ConfigError("conv2d: input has " + std::to_string(c) + " channels but kernel " + shape_str(kernel.shape()) +
                      " expects " + std::to_string(kernel.dim(1)));
  }
  if (kh > h + 2 * p || kw > w + 2 * p) {
    throw ConfigError("conv2d: kernel " + shape_str(kernel.shape()) + " larger than padded input " +
                      shape_str(input.shape()) + " with padding " + std::to_string(p));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != k)) {
    throw ConfigError("conv2d: bias shape " + shape_str(bias->shape()) + " does not match " + std::to_string(k) +
                      " output channels");
  }
  const std::size_t ho = (h + 2 * p - kh) / s + 1, wo = (w + 2 * p - kw) / s + 1;
  const std::size_t rows = c * kh * kw, plane = ho * wo, cols = n * plane;

  // im2col: row (ci, ki, kj), column (sample, oh, ow).
  auto col = std::make_shared<std::vector<T>>(rows * cols, T{0});
  const auto in = input.data();
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        T* dst = col->data() + ((ci * kh + ki) * kw + kj) * cols;
        for (std::size_t ni = 0; ni < n; ++ni) {
          const T* src = in.data() + (ni * c + ci) * h * w;
          for (std::size_t oh = 0; oh < ho; ++oh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * s + ki) - static_cast<std::ptrdiff_t>(p);
            T* row = dst + ni * plane + oh * wo;
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t ow = 0; ow < wo; ++ow) {
              const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * s + kj) - static_cast<std::ptrdiff_t>(p);
              if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(w)) row[ow] = src[ih * w + iw];
            }
          }
        }
      }
    }
  }

  RowMat<T> prod = ConstMatMap<T>(kernel.data().data(), k, rows) * ConstMatMap<T>(col->data(), rows, cols);
  std::vector<T> out(n * k * plane);
  for (std::size_t ko = 0; ko < k; ++ko) {
    const T b = bias ? bias->data()[ko] : T{0};
    for (std::size_t ni = 0; ni < n; ++ni) {
      const T* src = prod.data() + ko * cols + ni * plane;
      T* dst = out.data() + (ni * k + ko) * plane;
      for (std::size_t q = 0; q < plane; ++q) dst[q] = src[q] + b;
    }
  }

  std::vector<std::shared_ptr<Node<T>>> inputs{input.node(), kernel.node()};
  if (bias) inputs.push_back(bias->node());
  auto in_node = input.node();
  auto k_node = kernel.node();
  auto b_node = bias ? bias->node() : nullptr;
  return make_result<T>(
      "conv2d", {n, k, ho, wo}, std::move(out), std::move(inputs),
      [=](Node<T>& self) {
        RowMat<T> dout(k, cols);
        for (std::size_t ko = 0; ko < k; ++ko) {
          for (std::size_t ni = 0; ni < n; ++ni) {
            const T* src = self.grad.data() + (ni * k + ko) * plane;
            std::copy(src, src + plane, dout.data() + ko * cols + ni * plane);
          }
        }
        if (k_node->requires_grad) {
          auto g = k_node->ensure_grad();
          MatMap<T> gk(g.data(), k, rows);
          const T scale = static_cast<T>(fault_scale("conv2d"));
          if (scale == T(1)) {
            gk.noalias() += dout * ConstMatMap<T>(col->data(), rows, cols).transpose();
          } else {
            gk.noalias() += scale * (dout * ConstMatMap<T>(col->data(), rows, cols).transpose());
          }
        }
        if (b_node && b_node->requires_grad) {
          auto g = b_node->ensure_grad();
          for (std::size_t ko = 0; ko < k; ++ko) g[ko] += dout.row(ko).sum();
        }
        if (in_node->requires_grad) {
          RowMat<T> dcol = ConstMatMap<T>(k_node->data.data(), k, rows).transpose() * dout;
          auto g = in_node->ensure_grad();
          for (std::size_t ci = 0; ci < c; ++ci) {
            for (std::size_t ki = 0; ki < kh; ++ki) {
              for (std::size_t kj = 0; kj < kw; ++kj) {
                const T* src = dcol.data() + ((ci * kh + ki) * kw + kj) * cols;
                for (std::size_t ni = 0; ni < n; ++ni) {
                  T* dst = g.data() + (ni * c + ci) * h * w;
                  for (std::size_t oh = 0; oh < ho; ++oh) {
                    const std::ptrdiff_t ih =
                        static_cast<std::ptrdiff_t>(oh * s + ki) - static_cast<std::ptrdiff_t>(p);
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
                    const T* row = src + ni * plane + oh * wo;
                    for (std::size_t ow = 0; ow < wo; ++ow) {
                      const std::ptrdiff_t iw =
                          static_cast<std::ptrdiff_t>(ow * s + kj) - static_cast<std::ptrdiff_t>(p);
                      if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(w)) dst[ih * w + iw] += row[ow];
                    }
                  }
                }
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, Conv2dOptions opt = {}) {
  return conv2d<T>(input, kernel, nullptr, opt);
}

// out = input * weight + bias, input N x D, weight D x M, bias M.
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  using namespace detail;
  require_rank(input.shape(), 2, "linear", "input");
  require_rank(weight.shape(), 2, "linear", "weight");
  const std::size_t n = input.dim(0), d = input.dim(1), m = weight.dim(1);
  if (weight.dim(0) != d) {
    throw ConfigError("linear: input " + shape_str(input.shape()) + " incompatible with weight " +
                      shape_str(weight.shape()));
  }
  if (bias.rank() != 1 || bias.dim(0) != m) {
    throw ConfigError("linear: bias " + shape_str(bias.shape()) + " incompatible with weight " +
                      shape_str(weight.shape()));
  }
  RowMat<T> prod = ConstMatMap<T>(input.data().data(), n, d) * ConstMatMap<T>(weight.data().data(), d, m);
  prod.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.data().data(), m);
  std::vector<T> out(prod.data(), prod.data() + n * m);
  auto x = input.node(), wn = weight.node(), bn = bias.node();
  return make_result<T>("linear", {n, m}, std::move(out), {x, wn, bn}, [=](Node<T>& self) {
    ConstMatMap<T> dout(self.grad.data(), n, m);
    if (x->requires_grad) {
      MatMap<T>(x->ensure_grad().data(), n, d).noalias() += dout * ConstMatMap<T>(wn->data.data(), d, m).transpose();
    }
    if (wn->requires_grad) {
      MatMap<T>(wn->ensure_grad().data(), d, m).noalias() += ConstMatMap<T>(x->data.data(), n, d).transpose() * dout;
    }
    if (bn->requires_grad) {
      auto g = bn->ensure_grad();
      for (std::size_t j = 0; j < m; ++j) g[j] += dout.col(j).sum();
    }
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  const auto in = input.data();
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T{0} ? in[i] : T{0};
  auto x = input.node();
  return detail::make_result<T>("relu", input.shape(), std::move(out), {x}, [x](detail::Node<T>& self) {
    auto g = x->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x->data[i] > T{0}) g[i] += self.grad[i];
    }
  });
}

// N x C x H x W -> N x C spatial mean.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input) {
  detail::require_rank(input.shape(), 4, "global_avg_pool", "input");
  const std::size_t planes = input.dim(0) * input.dim(1), area = input.dim(2) * input.dim(3);
  const auto in = input.data();
  std::vector<T> out(planes);
  for (std::size_t pl = 0; pl < planes; ++pl) {
    T acc{0};
    for (std::size_t q = 0; q < area; ++q) acc += in[pl * area + q];
    out[pl] = acc / static_cast<T>(area);
  }
  auto x = input.node();
  return detail::make_result<T>("global_avg_pool", {input.dim(0), input.dim(1)}, std::move(out), {x},
                                [x, planes, area](detail::Node<T>& self) {
                                  auto g = x->ensure_grad();
                                  const T inv = T{1} / static_cast<T>(area);
                                  for (std::size_t pl = 0; pl < planes; ++pl) {
                                    const T v = self.grad[pl] * inv;
                                    for (std::size_t q = 0; q < area; ++q) g[pl * area + q] += v;
                                  }
                                });
}

// Unpadded max pooling. Ties resolve to the first element in row-major
// window order, which is also where the gradient goes.
template <typename T>
Tensor<T> max_pool(const Tensor<T>& input, std::size_t window, std::size_t stride) {
  detail::require_rank(input.shape(), 4, "max_pool", "input");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (window == 0 || stride == 0) throw ConfigError("max_pool: window and stride must be positive");
  if (window > h || window > w) {
    throw ConfigError("max_pool: window " + std::to_string(window) + " exceeds input " + shape_str(input.shape()));
  }
  const std::size_t ho = (h - window) / stride + 1, wo = (w - window) / stride + 1;
  const auto in = input.data();
  std::vector<T> out(n * c * ho * wo);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  for (std::size_t pl = 0; pl < n * c; ++pl) {
    for (std::size_t oh = 0; oh < ho; ++oh) {
      for (std::size_t ow = 0; ow < wo; ++ow) {
        std::size_t best = pl * h * w + oh * stride * w + ow * stride;
        for (std::size_t i = 0; i < window; ++i) {
          for (std::size_t j = 0; j < window; ++j) {
            const std::size_t idx = pl * h * w + (oh * stride + i) * w + ow * stride + j;
            if (in[idx] > in[best]) best = idx;
          }
        }
        const std::size_t o = (pl * ho + oh) * wo + ow;
        out[o] = in[best];
        (*argmax)[o] = best;
      }
    }
  }
  auto x = input.node();
  return detail::make_result<T>("max_pool", {n, c, ho, wo}, std::move(out), {x}, [x, argmax](detail::Node<T>& self) {
    auto g = x->ensure_grad();
    for (std::size_t o = 0; o < argmax->size(); ++o) g[(*argmax)[o]] += self.grad[o];
  });
}

// Replicates every value into a factor x factor block.
template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& input, std::size_t factor) {
  detail::require_rank(input.shape(), 4, "upsample_nearest", "input");
  if (factor == 0) throw ConfigError("upsample_nearest: factor must be positive");
  if (factor == 1) return input;
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t ho = h * factor, wo = w * factor;
  const auto in = input.data();
  std::vector<T> out(n * c * ho * wo);
  for (std::size_t pl = 0; pl < n * c; ++pl) {
    for (std::size_t y = 0; y < ho; ++y) {
      for (std::size_t x = 0; x < wo; ++x) out[(pl * ho + y) * wo + x] = in[(pl * h + y / factor) * w + x / factor];
    }
  }
  auto xn = input.node();
  return detail::make_result<T>("upsample_nearest", {n, c, ho, wo}, std::move(out), {xn},
                                [=](detail::Node<T>& self) {
                                  auto g = xn->ensure_grad();
                                  for (std::size_t pl = 0; pl < n * c; ++pl) {
                                    for (std::size_t y = 0; y < ho; ++y) {
                                      for (std::size_t x = 0; x < wo; ++x) {
                                        g[(pl * h + y / factor) * w + x / factor] += self.grad[(pl * ho + y) * wo + x];
                                      }
                                    }
                                  }
                                });
}

// Inverted dropout: Eval (or rate 0) returns the input unchanged.
template <typename T>
Tensor<T> dropout(const Tensor<T>& input, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout: rate must lie in [0,1), got " + std::to_string(rate));
  if (mode == Mode::Eval || rate == 0.0) return input;
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  const auto in = input.data();
  auto mask = std::make_shared<std::vector<T>>(in.size());
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    (*mask)[i] = rng.uniform() < rate ? T{0} : scale;
    out[i] = in[i] * (*mask)[i];
  }
  auto x = input.node();
  return detail::make_result<T>("dropout", input.shape(), std::move(out), {x}, [x, mask](detail::Node<T>& self) {
    auto g = x->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (*mask)[i];
  });
}

// Mean over the batch of -log softmax(logits)[label], max-subtracted.
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  detail::require_rank(logits.shape(), 2, "softmax_cross_entropy", "logits");
  const std::size_t n = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != n) {
    throw InputError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                     " samples");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw InputError("softmax_cross_entropy: label " + std::to_string(labels[i]) + " of sample " +
                       std::to_string(i) + " outside [0," + std::to_string(classes) + ")");
    }
  }
  const auto z = logits.data();
  auto probs = std::make_shared<std::vector<T>>(n * classes);
  T total{0};
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = z.data() + i * classes;
    const T mx = *std::max_element(row, row + classes);
    T denom{0};
    for (std::size_t j = 0; j < classes; ++j) denom += std::exp(row[j] - mx);
    const T log_denom = std::log(denom);
    for (std::size_t j = 0; j < classes; ++j) (*probs)[i * classes + j] = std::exp(row[j] - mx - log_denom);
    total += log_denom - (row[labels[i]] - mx);
  }
  total /= static_cast<T>(n);
  std::vector<int> lab(labels.begin(), labels.end());
  auto x = logits.node();
  return detail::make_result<T>("softmax_cross_entropy", {1}, {total}, {x},
                                [x, probs, lab = std::move(lab), n, classes](detail::Node<T>& self) {
                                  auto g = x->ensure_grad();
                                  const T scale = self.grad[0] / static_cast<T>(n);
                                  for (std::size_t i = 0; i < n; ++i) {
                                    for (std::size_t j = 0; j < classes; ++j) {
                                      const T onehot = static_cast<std::size_t>(lab[i]) == j ? T{1} : T{0};
                                      g[i * classes + j] += scale * ((*probs)[i * classes + j] - onehot);
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ConfigError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const auto x = a.data(), y = b.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  auto an = a.node(), bn = b.node();
  return detail::make_result<T>("add", a.shape(), std::move(out), {an, bn}, [an, bn](detail::Node<T>& self) {
    for (auto* in : {an.get(), bn.get()}) {
      if (!in->requires_grad) continue;
      auto g = in->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ConfigError("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const auto x = a.data(), y = b.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  auto an = a.node(), bn = b.node();
  return detail::make_result<T>("mul", a.shape(), std::move(out), {an, bn}, [an, bn](detail::Node<T>& self) {
    if (an->requires_grad) {
      auto g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn->data[i];
    }
    if (bn->requires_grad) {
      auto g = bn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an->data[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& input, T factor) {
  const auto x = input.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * factor;
  auto xn = input.node();
  return detail::make_result<T>("scale", input.shape(), std::move(out), {xn}, [xn, factor](detail::Node<T>& self) {
    auto g = xn->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& input) {
  const auto in = input.data();
  T acc{0};
  for (T v : in) acc += v;
  auto x = input.node();
  return detail::make_result<T>("sum", {1}, {acc}, {x}, [x](detail::Node<T>& self) {
    auto g = x->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

// Same values, new shape with equal element count.
template <typename T>
Tensor<T> reshape(const Tensor<T>& input, Shape shape) {
  if (shape_numel(shape) != input.numel()) {
    throw ConfigError("reshape: cannot view " + shape_str(input.shape()) + " as " + shape_str(shape));
  }
  auto x = input.node();
  std::vector<T> out(input.data().begin(), input.data().end());
  return detail::make_result<T>("reshape", std::move(shape), std::move(out), {x}, [x](detail::Node<T>& self) {
    auto g = x->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

// Channels [begin, end) of an N x C x H x W tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& input, std::size_t begin, std::size_t end) {
  detail::require_rank(input.shape(), 4, "slice_channels", "input");
  const std::size_t n = input.dim(0), c = input.dim(1), area = input.dim(2) * input.dim(3);
  if (begin >= end || end > c) {
    throw ConfigError("slice_channels: range [" + std::to_string(begin) + "," + std::to_string(end) +
                      ") invalid for " + std::to_string(c) + " channels");
  }
  const std::size_t cs = end - begin;
  const auto in = input.data();
  std::vector<T> out(n * cs * area);
  for (std::size_t ni = 0; ni < n; ++ni) {
    std::copy_n(in.data() + (ni * c + begin) * area, cs * area, out.data() + ni * cs * area);
  }
  auto x = input.node();
  return detail::make_result<T>("slice_channels", {n, cs, input.dim(2), input.dim(3)}, std::move(out), {x},
                                [=](detail::Node<T>& self) {
                                  auto g = x->ensure_grad();
                                  for (std::size_t ni = 0; ni < n; ++ni) {
                                    const T* src = self.grad.data() + ni * cs * area;
                                    T* dst = g.data() + (ni * c + begin) * area;
                                    for (std::size_t q = 0; q < cs * area; ++q) dst[q] += src[q];
                                  }
                                });
}

// Concatenates along the channel axis, a first.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank(a.shape(), 4, "concat_channels", "first input");
  detail::require_rank(b.shape(), 4, "concat_channels", "second input");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ConfigError("concat_channels: incompatible shapes " + shape_str(a.shape()) + " and " +
                      shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), area = a.dim(2) * a.dim(3);
  std::vector<T> out(n * (ca + cb) * area);
  for (std::size_t ni = 0; ni < n; ++ni) {
    std::copy_n(a.data().data() + ni * ca * area, ca * area, out.data() + ni * (ca + cb) * area);
    std::copy_n(b.data().data() + ni * cb * area, cb * area, out.data() + (ni * (ca + cb) + ca) * area);
  }
  auto an = a.node(), bn = b.node();
  return detail::make_result<T>("concat_channels", {n, ca + cb, a.dim(2), a.dim(3)}, std::move(out), {an, bn},
                                [=](detail::Node<T>& self) {
                                  for (std::size_t ni = 0; ni < n; ++ni) {
                                    const T* src = self.grad.data() + ni * (ca + cb) * area;
                                    if (an->requires_grad) {
                                      auto g = an->ensure_grad();
                                      for (std::size_t q = 0; q < ca * area; ++q) g[ni * ca * area + q] += src[q];
                                    }
                                    if (bn->requires_grad) {
                                      auto g = bn->ensure_grad();
                                      for (std::size_t q = 0; q < cb * area; ++q) {
                                        g[ni * cb * area + q] += src[ca * area + q];
                                      }
                                    }
                                  }
                                });
}

}  // namespace muse
