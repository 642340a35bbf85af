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

// Central finite-difference checks of every differentiable op, in 64-bit.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "muse/cond_norm.hpp"
#include "muse/error.hpp"
#include "muse/ops.hpp"
#include "muse/rng.hpp"
#include "muse/tensor.hpp"

namespace muse {

using DTensor = Tensor<double>;

inline constexpr double kGradcheckTolerance = 1e-4;
inline constexpr double kGradcheckStepScale = 1e-5;

struct GradProblem {
  std::vector<DTensor> inputs;  // leaves with requires_grad
  std::function<DTensor(const std::vector<DTensor>&)> fn;
};

struct GradcheckCase {
  std::string name;
  std::function<GradProblem(Rng&)> make;
};

struct GradcheckResult {
  std::string op;
  std::size_t trials = 0;
  double worst_rel_err = 0.0;
  std::size_t worst_trial = 0;
  std::size_t worst_input = 0;

  bool passed() const { return worst_rel_err < kGradcheckTolerance; }
};

namespace gradcheck_detail {

inline DTensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0, bool grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return DTensor::from(std::move(shape), std::move(v), grad);
}

// Values bounded away from zero, for the relu kink.
inline DTensor nonzero_tensor(Rng& rng, Shape shape) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) {
    do x = rng.uniform(-1.0, 1.0);
    while (std::abs(x) < 1e-3);
  }
  return DTensor::from(std::move(shape), std::move(v), true);
}

// Distinct values (spacing 0.01 before jitter) so no pooling window ties.
inline DTensor tie_free_tensor(Rng& rng, Shape shape) {
  const std::size_t n = shape_numel(shape);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 0.01 * static_cast<double>(i) + rng.uniform(0.0, 0.002);
  for (std::size_t i = n; i > 1; --i) std::swap(v[i - 1], v[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  return DTensor::from(std::move(shape), std::move(v), true);
}

inline std::vector<int> random_labels(Rng& rng, std::size_t n, std::size_t classes) {
  std::vector<int> out(n);
  for (auto& l : out) l = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(classes) - 1));
  return out;
}

template <class Fn>
GradProblem problem(std::vector<DTensor> inputs, Fn fn) {
  return {std::move(inputs), std::function<DTensor(const std::vector<DTensor>&)>(std::move(fn))};
}

}  // namespace gradcheck_detail

inline std::vector<GradcheckCase> gradcheck_cases() {
  namespace g = gradcheck_detail;
  std::vector<GradcheckCase> cases;
  cases.push_back({"conv2d", [](Rng& r) {
                     const std::size_t stride = static_cast<std::size_t>(r.uniform_int(1, 2));
                     const std::size_t pad = static_cast<std::size_t>(r.uniform_int(0, 1));
                     return g::problem({g::random_tensor(r, {2, 3, 5, 5}), g::random_tensor(r, {4, 3, 3, 3}),
                                        g::random_tensor(r, {4})},
                                       [stride, pad](const std::vector<DTensor>& in) {
                                         return conv2d<double>(in[0], in[1], &in[2], {stride, pad});
                                       });
                   }});
  cases.push_back({"linear", [](Rng& r) {
                     return g::problem({g::random_tensor(r, {3, 5}), g::random_tensor(r, {5, 4}), g::random_tensor(r, {4})},
                                       [](const std::vector<DTensor>& in) { return linear<double>(in[0], in[1], in[2]); });
                   }});
  cases.push_back({"relu", [](Rng& r) {
                     return g::problem({g::nonzero_tensor(r, {2, 3, 4, 4})},
                                       [](const std::vector<DTensor>& in) { return relu<double>(in[0]); });
                   }});
  cases.push_back({"global_avg_pool", [](Rng& r) {
                     return g::problem({g::random_tensor(r, {2, 3, 4, 5})},
                                       [](const std::vector<DTensor>& in) { return global_avg_pool<double>(in[0]); });
                   }});
  cases.push_back({"max_pool", [](Rng& r) {
                     return g::problem({g::tie_free_tensor(r, {2, 2, 6, 6})},
                                       [](const std::vector<DTensor>& in) { return max_pool<double>(in[0], 2, 2); });
                   }});
  cases.push_back({"upsample_nearest", [](Rng& r) {
                     const auto f = static_cast<std::size_t>(r.uniform_int(2, 3));
                     return g::problem({g::random_tensor(r, {2, 2, 3, 3})},
                                       [f](const std::vector<DTensor>& in) { return upsample_nearest<double>(in[0], f); });
                   }});
  cases.push_back({"dropout", [](Rng& r) {
                     const std::uint64_t seed = r.next_u64();
                     return g::problem({g::random_tensor(r, {4, 6})}, [seed](const std::vector<DTensor>& in) {
                       Rng mask(seed);  // same mask on every evaluation
                       return dropout<double>(in[0], 0.5, Mode::Train, mask);
                     });
                   }});
  cases.push_back({"softmax_cross_entropy", [](Rng& r) {
                     const auto labels = g::random_labels(r, 4, 6);
                     return g::problem({g::random_tensor(r, {4, 6}, -3.0, 3.0)}, [labels](const std::vector<DTensor>& in) {
                       return softmax_cross_entropy<double>(in[0], labels);
                     });
                   }});
  cases.push_back({"add", [](Rng& r) {
                     return g::problem({g::random_tensor(r, {2, 3, 3}), g::random_tensor(r, {2, 3, 3})},
                                       [](const std::vector<DTensor>& in) { return add(in[0], in[1]); });
                   }});
  cases.push_back({"mul", [](Rng& r) {
                     return g::problem({g::random_tensor(r, {2, 3, 3}), g::random_tensor(r, {2, 3, 3})},
                                       [](const std::vector<DTensor>& in) { return mul(in[0], in[1]); });
                   }});
  cases.push_back({"scale", [](Rng& r) {
                     const double f = r.uniform(-2.0, 2.0);
                     return g::problem({g::random_tensor(r, {3, 4})},
                                       [f](const std::vector<DTensor>& in) { return scale(in[0], f); });
                   }});
  cases.push_back({"sum", [](Rng& r) {
                     return g::problem({g::random_tensor(r, {3, 4})},
                                       [](const std::vector<DTensor>& in) { return sum(in[0]); });
                   }});
  cases.push_back({"reshape", [](Rng& r) {
                     return g::problem({g::random_tensor(r, {2, 3, 2, 2})},
                                       [](const std::vector<DTensor>& in) { return reshape(in[0], {6, 4}); });
                   }});
  cases.push_back({"slice_channels", [](Rng& r) {
                     return g::problem({g::random_tensor(r, {2, 4, 3, 3})},
                                       [](const std::vector<DTensor>& in) { return slice_channels(in[0], 1, 3); });
                   }});
  cases.push_back({"concat_channels", [](Rng& r) {
                     return g::problem({g::random_tensor(r, {2, 1, 3, 3}), g::random_tensor(r, {2, 3, 3, 3})},
                                       [](const std::vector<DTensor>& in) { return concat_channels(in[0], in[1]); });
                   }});
  cases.push_back({"channel_affine", [](Rng& r) {
                     return g::problem({g::random_tensor(r, {2, 3, 3, 3}), g::random_tensor(r, {3}), g::random_tensor(r, {3})},
                                       [](const std::vector<DTensor>& in) {
                                         return channel_affine<double>(in[0], in[1], in[2]);
                                       });
                   }});
  cases.push_back({"batch_norm", [](Rng& r) {
                     auto state = std::make_shared<BatchNormState<double>>(BatchNormState<double>::make(3));
                     state->gamma = g::random_tensor(r, {3}, 0.5, 1.5);
                     state->beta = g::random_tensor(r, {3});
                     return g::problem({g::random_tensor(r, {4, 3, 3, 3}), state->gamma, state->beta},
                                       [state](const std::vector<DTensor>& in) {
                                         state->gamma = in[1];
                                         state->beta = in[2];
                                         return batch_norm<double>(in[0], *state);
                                       });
                   }});
  cases.push_back({"instance_norm", [](Rng& r) {
                     auto state = std::make_shared<InstanceNormState<double>>(InstanceNormState<double>::make(3));
                     return g::problem({g::random_tensor(r, {2, 3, 4, 4}), g::random_tensor(r, {3}, 0.5, 1.5),
                                        g::random_tensor(r, {3})},
                                       [state](const std::vector<DTensor>& in) {
                                         state->gamma = in[1];
                                         state->beta = in[2];
                                         return instance_norm<double>(in[0], *state);
                                       });
                   }});
  cases.push_back({"ibn_split", [](Rng& r) {
                     auto in_state = std::make_shared<InstanceNormState<double>>(InstanceNormState<double>::make(2));
                     auto bn_state = std::make_shared<BatchNormState<double>>(BatchNormState<double>::make(2));
                     return g::problem({g::random_tensor(r, {3, 4, 3, 3}), g::random_tensor(r, {2}, 0.5, 1.5),
                                        g::random_tensor(r, {2}), g::random_tensor(r, {2}, 0.5, 1.5),
                                        g::random_tensor(r, {2})},
                                       [in_state, bn_state](const std::vector<DTensor>& in) {
                                         in_state->gamma = in[1];
                                         in_state->beta = in[2];
                                         bn_state->gamma = in[3];
                                         bn_state->beta = in[4];
                                         return ibn_split<double>(in[0], *in_state, *bn_state);
                                       });
                   }});
  auto spade_case = [](bool residual) {
    return [residual](Rng& r) {
      auto state = std::make_shared<ResidualSpadeState<double>>(ResidualSpadeState<double>::make(3, 2, r, 0.3));
      std::vector<DTensor> inputs{g::random_tensor(r, {2, 2, 4, 4}), g::random_tensor(r, {2, 3, 2, 2}),
                                  g::random_tensor(r, {2, 3, 3, 3}, -0.3, 0.3), g::random_tensor(r, {2, 3, 3, 3}, -0.3, 0.3)};
      if (residual) {
        inputs.push_back(g::random_tensor(r, {2}, 0.5, 1.5));
        inputs.push_back(g::random_tensor(r, {2}));
      }
      return g::problem(std::move(inputs), [state, residual](const std::vector<DTensor>& in) {
        state->conv_w1 = in[2];
        state->conv_b1 = in[3];
        if (residual) {
          state->inner.gamma = in[4];
          state->inner.beta = in[5];
          return residual_spade<double>(in[0], in[1], *state);
        }
        return spade<double>(in[0], in[1], *state);
      });
    };
  };
  cases.push_back({"spade", spade_case(false)});
  cases.push_back({"residual_spade", spade_case(true)});
  return cases;
}

inline std::vector<std::string> gradcheck_op_names() {
  std::vector<std::string> names;
  for (const auto& c : gradcheck_cases()) names.push_back(c.name);
  return names;
}

// Relative error of one trial: max |analytic - numeric| over all inputs,
// divided by max(1e-6, max |numeric|) per input; the worst input counts.
inline GradcheckResult run_gradcheck(const GradcheckCase& c, std::size_t trials, std::uint64_t seed = kDefaultSeed) {
  GradcheckResult result{c.name, trials, 0.0, 0, 0};
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(seed_combine({seed, std::hash<std::string>{}(c.name), t}));
    GradProblem p = c.make(rng);
    // Random projection makes the scalar objective sensitive to every output.
    const DTensor probe = p.fn(p.inputs);
    const DTensor weights = gradcheck_detail::random_tensor(rng, probe.shape(), -1.0, 1.0, false);
    auto objective = [&]() { return sum(mul(p.fn(p.inputs), weights)); };

    for (auto& in : p.inputs) in.zero_grad();
    backward(objective());
    std::vector<std::vector<double>> analytic;
    for (auto& in : p.inputs) analytic.emplace_back(in.grad().begin(), in.grad().end());

    NoGradGuard guard;
    for (std::size_t i = 0; i < p.inputs.size(); ++i) {
      auto values = p.inputs[i].mutable_data();
      double max_diff = 0.0, max_num = 0.0;
      for (std::size_t k = 0; k < values.size(); ++k) {
        const double x = values[k];
        const double h = kGradcheckStepScale * std::max(1.0, std::abs(x));
        values[k] = x + h;
        const double fp = objective().item();
        values[k] = x - h;
        const double fm = objective().item();
        values[k] = x;
        const double numeric = (fp - fm) / (2.0 * h);
        max_diff = std::max(max_diff, std::abs(numeric - analytic[i][k]));
        max_num = std::max(max_num, std::abs(numeric));
      }
      const double rel = max_diff / std::max(1e-6, max_num);
      if (rel > result.worst_rel_err || (t == 0 && i == 0)) {
        result.worst_rel_err = rel;
        result.worst_trial = t;
        result.worst_input = i;
      }
    }
  }
  return result;
}

inline std::vector<GradcheckResult> run_gradchecks(const std::vector<std::string>& ops, std::size_t trials,
                                                   std::uint64_t seed = kDefaultSeed) {
  const auto cases = gradcheck_cases();
  std::vector<GradcheckResult> out;
  for (const auto& name : ops) {
    auto it = std::find_if(cases.begin(), cases.end(), [&](const GradcheckCase& c) { return c.name == name; });
    if (it == cases.end()) {
      std::string valid;
      for (const auto& c : cases) valid += (valid.empty() ? "" : ", ") + c.name;
      throw UsageError("unknown op '" + name + "' (valid: all, " + valid + ")");
    }
    out.push_back(run_gradcheck(*it, trials, seed));
  }
  return out;
}

}  // namespace muse
