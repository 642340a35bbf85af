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

// Euclidean ranking, Recall@K / AP, and per-condition evaluation reports.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "muse/dataset.hpp"
#include "muse/error.hpp"
#include "muse/model.hpp"
#include "muse/weather.hpp"

namespace muse {

inline constexpr std::array<std::size_t, 3> kRecallKs{1, 5, 10};

// Row-major set of embeddings.
struct Embeddings {
  std::size_t dim = 0;
  std::vector<float> values;

  std::size_t count() const { return dim ? values.size() / dim : 0; }
  std::span<const float> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
};

// Squared L2, differences in float, accumulated in double.
inline double squared_distance(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const float d = a[i] - b[i];
    acc += static_cast<double>(d) * static_cast<double>(d);
  }
  return acc;
}

// Gallery indices by ascending distance; ties keep ascending index.
inline std::vector<std::size_t> rank(std::span<const float> query, const Embeddings& gallery) {
  if (query.size() != gallery.dim) {
    throw InputError("rank: query has dimension " + std::to_string(query.size()) + ", gallery has " +
                     std::to_string(gallery.dim));
  }
  const std::size_t n = gallery.count();
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = squared_distance(query, gallery.row(i));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  return order;
}

inline std::vector<std::size_t> rank(std::span<const float> query, const std::vector<std::vector<float>>& gallery) {
  Embeddings g;
  g.dim = gallery.empty() ? query.size() : gallery.front().size();
  for (const auto& row : gallery) {
    if (row.size() != g.dim) throw InputError("rank: gallery rows differ in dimension");
    g.values.insert(g.values.end(), row.begin(), row.end());
  }
  return rank(query, g);
}

inline bool is_relevant(std::span<const std::size_t> relevant, std::size_t idx) {
  return std::find(relevant.begin(), relevant.end(), idx) != relevant.end();
}

inline int recall_at_k(std::span<const std::size_t> ranking, std::span<const std::size_t> relevant, std::size_t k) {
  if (k < 1) throw UsageError("recall_at_k: K must be at least 1");
  if (relevant.empty()) throw UsageError("recall_at_k: empty relevant set");
  const std::size_t n = std::min(k, ranking.size());
  for (std::size_t i = 0; i < n; ++i)
    if (is_relevant(relevant, ranking[i])) return 1;
  return 0;
}

// Precision summed at each hit rank, divided by |relevant|.
inline double average_precision(std::span<const std::size_t> ranking, std::span<const std::size_t> relevant) {
  if (relevant.empty()) throw UsageError("average_precision: empty relevant set");
  double acc = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    if (!is_relevant(relevant, ranking[i])) continue;
    ++hits;
    acc += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  return acc / static_cast<double>(relevant.size());
}

struct RetrievalMetrics {
  std::map<std::size_t, double> recall_at;
  double ap = 0.0;
  std::size_t num_queries = 0;
};

// Mean R@K and AP over all queries; relevant[q] lists gallery indices.
inline RetrievalMetrics retrieval_metrics(const Embeddings& queries, const Embeddings& gallery,
                                          const std::vector<std::vector<std::size_t>>& relevant) {
  if (relevant.size() != queries.count()) throw InputError("retrieval_metrics: one relevant set per query required");
  RetrievalMetrics m;
  for (auto k : kRecallKs) m.recall_at[k] = 0.0;
  for (std::size_t q = 0; q < queries.count(); ++q) {
    const auto order = rank(queries.row(q), gallery);
    for (auto k : kRecallKs) m.recall_at[k] += recall_at_k(order, relevant[q], k);
    m.ap += average_precision(order, relevant[q]);
  }
  m.num_queries = queries.count();
  if (m.num_queries) {
    const double n = static_cast<double>(m.num_queries);
    for (auto& [k, v] : m.recall_at) v /= n;
    m.ap /= n;
  }
  return m;
}

inline std::vector<std::vector<std::size_t>> relevance(const std::vector<int>& query_ids,
                                                       const std::vector<int>& gallery_ids) {
  std::vector<std::vector<std::size_t>> out(query_ids.size());
  for (std::size_t q = 0; q < query_ids.size(); ++q)
    for (std::size_t g = 0; g < gallery_ids.size(); ++g)
      if (gallery_ids[g] == query_ids[q]) out[q].push_back(g);
  return out;
}

inline void l2_normalize(Embeddings& e) {
  for (std::size_t i = 0; i < e.count(); ++i) {
    double n = 0;
    for (std::size_t d = 0; d < e.dim; ++d) n += static_cast<double>(e.values[i * e.dim + d]) * e.values[i * e.dim + d];
    n = std::sqrt(n);
    if (n == 0) continue;
    for (std::size_t d = 0; d < e.dim; ++d) e.values[i * e.dim + d] = static_cast<float>(e.values[i * e.dim + d] / n);
  }
}

// Embeds images in fixed-size chunks through the Eval-mode network.
inline Embeddings embed_images(MuSeNet& model, const std::vector<Image>& images, bool normalize = false,
                               std::size_t chunk = 32) {
  Embeddings out;
  const std::size_t size = model.config().input_size;
  for (std::size_t begin = 0; begin < images.size(); begin += chunk) {
    const std::size_t n = std::min(chunk, images.size() - begin);
    std::vector<Real> pixels(n * 3 * size * size);
    for (std::size_t i = 0; i < n; ++i) {
      const Image& img = images[begin + i];
      if (img.width != size || img.height != size) throw InputError("embed_images: image size does not match the model");
      write_image_to_batch(img.pixels, size, i, pixels);
    }
    const auto emb = model.extract_embedding(FTensor::from({n, 3, size, size}, std::move(pixels)));
    out.dim = emb.shape()[1];
    out.values.insert(out.values.end(), emb.data().begin(), emb.data().end());
  }
  if (normalize) l2_normalize(out);
  return out;
}

struct StyleAccuracy {
  std::size_t correct = 0;
  std::size_t total = 0;
  std::array<std::size_t, 11> correct_per_label{};
  std::array<std::size_t, 11> total_per_label{};
  // confusion[label][prediction]
  std::array<std::array<std::size_t, 11>, 11> confusion{};

  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

// Style-classifier accuracy on held-out images: test satellites (label 0)
// and every test drone view under each of the ten styles.
inline StyleAccuracy style_accuracy(MuSeNet& model, const Dataset& ds, std::uint64_t seed = kDefaultSeed,
                                    std::size_t chunk = 32) {
  std::vector<Image> images;
  std::vector<int> labels;
  for (const auto& rec : ds.test) {
    images.push_back(rec.satellite);
    labels.push_back(style_label(Platform::Satellite, StyleKind::Normal));
  }
  for (auto s : kAllStyles) {
    for (auto& img : styled_test_drones(ds, Condition::seen(s), seed)) {
      images.push_back(std::move(img));
      labels.push_back(style_label(Platform::Drone, s));
    }
  }
  StyleAccuracy acc;
  const std::size_t size = model.config().input_size;
  NoGradGuard guard;
  Rng unused(0);
  for (std::size_t begin = 0; begin < images.size(); begin += chunk) {
    const std::size_t n = std::min(chunk, images.size() - begin);
    std::vector<Real> pixels(n * 3 * size * size);
    for (std::size_t i = 0; i < n; ++i) write_image_to_batch(images[begin + i].pixels, size, i, pixels);
    const auto out = model.forward(FTensor::from({n, 3, size, size}, std::move(pixels)), Mode::Eval, unused);
    const auto logits = out.style_logits.data();
    const std::size_t k = out.style_logits.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = logits.subspan(i * k, k);
      const auto pred = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      const int label = labels[begin + i];
      const bool ok = pred == label;
      acc.correct += ok;
      ++acc.total;
      acc.correct_per_label[static_cast<std::size_t>(label)] += ok;
      ++acc.total_per_label[static_cast<std::size_t>(label)];
      ++acc.confusion[static_cast<std::size_t>(label)][static_cast<std::size_t>(pred)];
    }
  }
  return acc;
}

// "seen" expands to the ten training styles, "unseen" to the composite,
// "all" to both; otherwise a comma-separated list of condition names.
inline std::vector<Condition> parse_conditions(std::string_view spec) {
  std::vector<Condition> out;
  auto add_seen = [&] {
    for (auto s : kAllStyles) out.push_back(Condition::seen(s));
  };
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    const auto comma = spec.find(',', pos);
    const auto token = spec.substr(pos, comma == std::string_view::npos ? spec.size() - pos : comma - pos);
    if (token == "seen") {
      add_seen();
    } else if (token == "unseen") {
      out.push_back(Condition::unseen());
    } else if (token == "all") {
      add_seen();
      out.push_back(Condition::unseen());
    } else if (auto c = Condition::parse(token)) {
      out.push_back(*c);
    } else {
      throw UsageError("unknown condition '" + std::string(token) +
                       "' (expected seen, unseen, all, or one of: normal, fog, rain, snow, fog+rain, fog+snow, "
                       "rain+snow, dark, overexposure, wind, fog+rain+snow)");
    }
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

inline std::vector<Task> parse_tasks(std::string_view spec) {
  if (spec == "d2s") return {Task::DroneToSat};
  if (spec == "s2d") return {Task::SatToDrone};
  if (spec == "both") return {Task::DroneToSat, Task::SatToDrone};
  throw UsageError("unknown task '" + std::string(spec) + "' (expected d2s, s2d or both)");
}

struct ReportRow {
  std::string condition;
  Task task = Task::DroneToSat;
  RetrievalMetrics metrics;
};

struct ConditionReport {
  std::vector<ReportRow> rows;
  std::vector<ReportRow> mean_rows;  // one per task with all ten seen rows

  const ReportRow* find(std::string_view condition, Task task) const {
    for (const auto* set : {&rows, &mean_rows})
      for (const auto& r : *set)
        if (r.condition == condition && r.task == task) return &r;
    return nullptr;
  }
};

inline RetrievalMetrics mean_over_seen(const std::vector<ReportRow>& rows, Task task) {
  RetrievalMetrics mean;
  for (auto k : kRecallKs) mean.recall_at[k] = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.task != task || r.condition == Condition::unseen().name()) continue;
    for (auto k : kRecallKs) mean.recall_at[k] += r.metrics.recall_at.at(k);
    mean.ap += r.metrics.ap;
    mean.num_queries += r.metrics.num_queries;
    ++n;
  }
  if (n) {
    for (auto& [k, v] : mean.recall_at) v /= static_cast<double>(n);
    mean.ap /= static_cast<double>(n);
  }
  return mean;
}

struct EvalOptions {
  bool normalize = false;
  std::uint64_t seed = kDefaultSeed;
};

inline ConditionReport evaluate(MuSeNet& model, const Dataset& ds, const std::vector<Condition>& conditions,
                                const std::vector<Task>& tasks, const EvalOptions& opt = {}) {
  ConditionReport report;
  std::vector<int> sat_ids;
  const auto satellites = satellite_gallery(ds, &sat_ids);
  std::vector<int> test_sat_ids;
  std::vector<Image> test_sats;
  for (const auto& rec : ds.test) {
    test_sats.push_back(rec.satellite);
    test_sat_ids.push_back(rec.id);
  }
  std::optional<Embeddings> sat_gallery, sat_queries;
  for (Task task : tasks) {
    for (const auto& cond : conditions) {
      std::vector<int> drone_ids;
      const auto drones = styled_test_drones(ds, cond, opt.seed, &drone_ids);
      const Embeddings drone_emb = embed_images(model, drones, opt.normalize);
      ReportRow row{cond.name(), task, {}};
      if (task == Task::DroneToSat) {
        if (!sat_gallery) sat_gallery = embed_images(model, satellites, opt.normalize);
        row.metrics = retrieval_metrics(drone_emb, *sat_gallery, relevance(drone_ids, sat_ids));
      } else {
        if (!sat_queries) sat_queries = embed_images(model, test_sats, opt.normalize);
        row.metrics = retrieval_metrics(*sat_queries, drone_emb, relevance(test_sat_ids, drone_ids));
      }
      report.rows.push_back(std::move(row));
    }
    std::size_t seen = 0;
    for (auto s : kAllStyles) seen += report.find(style_name(s), task) != nullptr;
    if (seen == kAllStyles.size()) report.mean_rows.push_back({"mean", task, mean_over_seen(report.rows, task)});
  }
  return report;
}

inline std::string format_fixed(double v, int decimals = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline std::string report_csv(const ConditionReport& report) {
  std::ostringstream os;
  os << "condition,task,r1,r5,r10,ap,num_queries\n";
  auto emit = [&](const ReportRow& r) {
    os << r.condition << ',' << task_name(r.task) << ',' << format_fixed(r.metrics.recall_at.at(1)) << ','
       << format_fixed(r.metrics.recall_at.at(5)) << ',' << format_fixed(r.metrics.recall_at.at(10)) << ','
       << format_fixed(r.metrics.ap) << ',' << r.metrics.num_queries << '\n';
  };
  for (Task task : {Task::DroneToSat, Task::SatToDrone}) {
    for (const auto& r : report.rows)
      if (r.task == task) emit(r);
    for (const auto& r : report.mean_rows)
      if (r.task == task) emit(r);
  }
  return os.str();
}

inline void write_report_csv(const ConditionReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write report '" + path + "'");
  out << report_csv(report);
  if (!out) throw IoError("failed writing report '" + path + "'");
}

}  // namespace muse
