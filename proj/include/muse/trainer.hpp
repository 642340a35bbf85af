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

// Joint training of the style and content branches.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include "muse/dataset.hpp"
#include "muse/error.hpp"
#include "muse/model.hpp"
#include "muse/ops.hpp"
#include "muse/rng.hpp"

namespace muse {

struct TrainConfig {
  std::size_t epochs = 60;
  std::size_t batch_per_platform = 8;
  // 4x the fine-tuning rates (0.0005 / 0.005) because training starts from
  // random weights; the 10:1 group ratio is kept.
  double base_lr = 0.002;
  double boosted_lr = 0.02;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::vector<std::size_t> decay_epochs{35, 50};
  double decay_factor = 0.1;
  double loss_weight_style = 1.0;
  std::uint64_t seed = kDefaultSeed;
  // Off: the next batch is prepared on a worker thread while the current
  // one trains. Batches are pure functions of (epoch, step, seed), so both
  // modes produce the same result.
  bool deterministic = true;

  void validate() const {
    if (epochs == 0) throw ConfigError("train: epochs must be positive");
    if (batch_per_platform == 0) throw ConfigError("train: batch_per_platform must be positive");
    if (!(base_lr > 0) || !(boosted_lr > 0)) throw ConfigError("train: learning rates must be positive");
    if (momentum < 0 || momentum >= 1) throw ConfigError("train: momentum must lie in [0,1)");
    if (weight_decay < 0) throw ConfigError("train: weight_decay must be non-negative");
    if (!(decay_factor > 0)) throw ConfigError("train: decay_factor must be positive");
    if (!(loss_weight_style >= 0) || !std::isfinite(loss_weight_style)) {
      throw ConfigError("train: loss_weight_style must be a non-negative number");
    }
  }
};

struct LearningRates {
  double base = 0;
  double boosted = 0;
};

inline LearningRates lr_at(std::size_t epoch, const TrainConfig& cfg) {
  double f = 1.0;
  for (auto m : cfg.decay_epochs)
    if (epoch >= m) f *= cfg.decay_factor;
  return {cfg.base_lr * f, cfg.boosted_lr * f};
}

struct LossBundle {
  Real l_style = 0;
  Real l_id = 0;
  Real l_total = 0;
};

// Parameters split by learning-rate group, in registration order.
struct ParamGroups {
  std::vector<Parameter<Real>*> base, boosted;

  explicit ParamGroups(MuSeNet& model) {
    for (auto& p : model.parameters()) (p.group == LrGroup::Boosted ? boosted : base).push_back(&p);
  }
};

namespace detail {

inline void step_group(std::vector<Parameter<Real>*>& params, double lr, const TrainConfig& cfg) {
  if (params.empty()) return;
  sgd_step<Real>(std::span<Parameter<Real>* const>(params),
                 {static_cast<Real>(lr), static_cast<Real>(cfg.momentum), static_cast<Real>(cfg.weight_decay)});
}

}  // namespace detail

// One SGD update of both groups with their own learning rates.
inline void optimizer_step(ParamGroups& groups, LearningRates lr, const TrainConfig& cfg) {
  detail::step_group(groups.base, lr.base, cfg);
  detail::step_group(groups.boosted, lr.boosted, cfg);
}

// Forward pass and losses; the caller runs backward on the returned total.
inline std::pair<LossBundle, FTensor> compute_losses(MuSeNet& model, const Batch& batch, const TrainConfig& cfg,
                                                     Rng& rng) {
  const auto out = model.forward(batch.images, Mode::Train, rng);
  const auto l_style = softmax_cross_entropy<Real>(out.style_logits, batch.style_labels);
  const auto l_id = softmax_cross_entropy<Real>(out.id_logits, batch.identity_labels);
  const auto total = add(l_id, scale(l_style, static_cast<Real>(cfg.loss_weight_style)));
  return {{l_style.item(), l_id.item(), total.item()}, total};
}

inline LossBundle train_step(MuSeNet& model, ParamGroups& groups, const Batch& batch, const TrainConfig& cfg,
                             LearningRates lr, Rng& rng, std::size_t step_index = 0) {
  try {
    auto [losses, total] = compute_losses(model, batch, cfg, rng);
    if (!std::isfinite(losses.l_total)) throw NumericError("non-finite loss");
    backward(total);
    optimizer_step(groups, lr, cfg);
    return losses;
  } catch (const NumericError& e) {
    throw NumericError("training step " + std::to_string(step_index) + ": " + e.what());
  }
}

inline LossBundle train_step(MuSeNet& model, const Batch& batch, const TrainConfig& cfg, LearningRates lr, Rng& rng,
                             std::size_t step_index = 0) {
  ParamGroups groups(model);
  return train_step(model, groups, batch, cfg, lr, rng, step_index);
}

struct EpochLog {
  std::size_t epoch = 0;
  double l_style = 0, l_id = 0, l_total = 0;
  double lr_base = 0, lr_boosted = 0;
};

struct TrainResult {
  MuSeNet model;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

inline std::size_t steps_per_epoch(const Dataset& ds, const TrainConfig& cfg) {
  return std::max<std::size_t>(1, ds.num_train_drone_images() / cfg.batch_per_platform);
}

// Trains from scratch; `model_cfg.num_identities` must equal the number of
// training identities.
inline TrainResult train(const Dataset& ds, const ModelConfig& model_cfg, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  model_cfg.validate();
  if (model_cfg.num_identities != ds.train.size()) {
    throw ConfigError("train: model has " + std::to_string(model_cfg.num_identities) + " identity classes but the "
                      "dataset has " + std::to_string(ds.train.size()) + " training identities");
  }
  if (model_cfg.input_size != ds.image_size) throw ConfigError("train: model input size differs from dataset images");

  TrainResult result{build_model(model_cfg, seed_combine({cfg.seed, 0x30de1})), {}};
  MuSeNet& model = result.model;
  ParamGroups groups(model);
  Rng dropout_rng(seed_combine({cfg.seed, 0xd509}));
  const std::size_t steps = steps_per_epoch(ds, cfg);
  const std::size_t n = cfg.batch_per_platform;

  auto load = [&](std::size_t epoch, std::size_t step) { return load_training_batch(ds, n, epoch, step, cfg.seed); };
  std::size_t global_step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const LearningRates lr = lr_at(epoch, cfg);
    EpochLog row{epoch, 0, 0, 0, lr.base, lr.boosted};
    std::optional<std::future<Batch>> next;
    if (!cfg.deterministic) next = std::async(std::launch::async, load, epoch, 0);
    for (std::size_t step = 0; step < steps; ++step, ++global_step) {
      Batch batch;
      if (next) {
        batch = next->get();
        next.reset();
        if (step + 1 < steps) next = std::async(std::launch::async, load, epoch, step + 1);
      } else {
        batch = load(epoch, step);
      }
      const LossBundle l = train_step(model, groups, batch, cfg, lr, dropout_rng, global_step);
      row.l_style += l.l_style;
      row.l_id += l.l_id;
      row.l_total += l.l_total;
    }
    row.l_style /= static_cast<double>(steps);
    row.l_id /= static_cast<double>(steps);
    row.l_total /= static_cast<double>(steps);
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  return result;
}

inline std::string format_log_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline void write_training_log(const std::vector<EpochLog>& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write training log '" + path + "'");
  out << "epoch\tl_style\tl_id\tl_total\tlr_base\tlr_boosted\n";
  for (const auto& r : log) {
    out << r.epoch << '\t' << format_log_value(r.l_style) << '\t' << format_log_value(r.l_id) << '\t'
        << format_log_value(r.l_total) << '\t' << format_log_value(r.lr_base) << '\t'
        << format_log_value(r.lr_boosted) << '\n';
  }
  if (!out) throw IoError("failed writing training log '" + path + "'");
}

}  // namespace muse
