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

#include <algorithm>
#include <array>
#include <cstddef>
#include <numeric>
#include <utility>
#include <vector>

#include "muse/rng.hpp"

namespace muse::testing_oracle {

// Independent oracle: build the precision/recall curve at every cutoff and
// integrate it as a step function (sum of precision times recall increment).
struct OracleResult {
  std::array<int, 3> recall;
  double ap;
};

inline OracleResult pr_area(const std::vector<std::size_t>& ranking, const std::vector<std::size_t>& relevant) {
  const std::size_t n = ranking.size();
  std::vector<double> precision(n + 1, 1.0), recall(n + 1, 0.0);
  std::size_t first_hit = n + 1, hits = 0;
  for (std::size_t k = 1; k <= n; ++k) {
    const bool hit = std::count(relevant.begin(), relevant.end(), ranking[k - 1]) > 0;
    if (hit) {
      ++hits;
      if (first_hit > n) first_hit = k;
    }
    precision[k] = static_cast<double>(hits) / static_cast<double>(k);
    recall[k] = static_cast<double>(hits) / static_cast<double>(relevant.size());
  }
  double area = 0;
  for (std::size_t k = 1; k <= n; ++k) area += (recall[k] - recall[k - 1]) * precision[k];
  OracleResult r{};
  const std::size_t ks[3] = {1, 5, 10};
  for (int i = 0; i < 3; ++i) r.recall[i] = first_hit <= ks[i] ? 1 : 0;
  r.ap = area;
  return r;
}

struct Instance {
  std::vector<std::size_t> ranking;
  std::vector<std::size_t> relevant;
};

// Random permutation of a gallery of 1..12 items with 1..4 relevant ones.
inline Instance random_instance(Rng& rng) {
  const auto n = static_cast<std::size_t>(rng.uniform_int(1, 12));
  std::vector<std::size_t> ranking(n);
  std::iota(ranking.begin(), ranking.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(ranking[i - 1], ranking[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  const auto m = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(std::min<std::size_t>(4, n))));
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(pool[i - 1], pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  std::vector<std::size_t> relevant(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(m));
  return {std::move(ranking), std::move(relevant)};
}

}  // namespace muse::testing_oracle
