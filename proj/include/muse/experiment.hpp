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

// Train/evaluate runs and the ablation grids built on them.

#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "muse/config.hpp"
#include "muse/dataset.hpp"
#include "muse/model.hpp"
#include "muse/retrieval.hpp"
#include "muse/trainer.hpp"

namespace muse {

inline constexpr const char* kCheckpointFile = "model.ckpt";
inline constexpr const char* kTrainLogFile = "train_log.tsv";

// Identity count and input size follow the dataset unless set explicitly.
inline ModelConfig model_config_for(const RunConfig& rc, const Dataset& ds) {
  ModelConfig m = rc.model;
  if (!rc.is_set("model.num_identities")) m.num_identities = ds.train.size();
  if (!rc.is_set("model.input_size")) m.input_size = ds.image_size;
  return m;
}

// Trains and writes <out>/model.ckpt and <out>/train_log.tsv.
inline TrainResult train_to_directory(const Dataset& ds, const RunConfig& rc, const std::filesystem::path& out,
                                      const EpochCallback& on_epoch = {}) {
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory '" + out.string() + "': " + ec.message());
  TrainResult r = train(ds, model_config_for(rc, ds), rc.train, on_epoch);
  save_checkpoint(r.model, (out / kCheckpointFile).string());
  write_training_log(r.log, (out / kTrainLogFile).string());
  return r;
}

struct AblationCell {
  std::string name;
  RunConfig config;
};

inline std::vector<std::string> ablation_grid_names() { return {"spade-placement", "spade-vs-residual", "loss-weight"}; }

// Every cell shares the base config (dataset, init seed); only the ablated
// factor changes.
inline std::vector<AblationCell> ablation_grid(const std::string& grid, const RunConfig& base) {
  std::vector<AblationCell> cells;
  auto cell = [&](std::string name, auto&& edit) {
    RunConfig rc = base;
    edit(rc);
    cells.push_back({std::move(name), std::move(rc)});
  };
  if (grid == "spade-placement") {
    for (const char* p : {"b1", "b2", "b3", "b1,b2", "b1,b3", "b2,b3", "b1,b2,b3"}) {
      std::string name;
      for (int b : parse_spade_placement(p)) name += "B" + std::to_string(b);
      cell(name, [&](RunConfig& rc) {
        rc.model.spade_placement = parse_spade_placement(p);
        rc.model.modulation = ModulationKind::Residual;
      });
    }
  } else if (grid == "spade-vs-residual") {
    cell("none", [](RunConfig& rc) { rc.model.spade_placement = {}; });
    cell("spade", [](RunConfig& rc) { rc.model.modulation = ModulationKind::Plain; });
    cell("residual-spade", [](RunConfig& rc) { rc.model.modulation = ModulationKind::Residual; });
  } else if (grid == "loss-weight") {
    for (double w : {0.5, 1.0, 2.0, 5.0}) {
      cell("1:" + format_log_value(w), [w](RunConfig& rc) { rc.train.loss_weight_style = w; });
    }
  } else {
    throw UsageError("unknown grid '" + grid + "' (expected spade-placement, spade-vs-residual or loss-weight)");
  }
  return cells;
}

inline std::string cell_directory_name(const std::string& cell) {
  std::string out;
  for (char c : cell) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-') ? c : '_';
  return out;
}

// Summary row per cell: mean over seen conditions and the composite, per task.
inline std::string ablation_summary_csv(const std::vector<std::pair<std::string, ConditionReport>>& results) {
  std::ostringstream os;
  os << "cell,d2s_mean_r1,d2s_mean_ap,s2d_mean_r1,s2d_mean_ap,d2s_unseen_r1,s2d_unseen_r1\n";
  const std::string unseen = Condition::unseen().name();
  auto value = [](const ReportRow* r, bool ap) {
    return r ? format_fixed(ap ? r->metrics.ap : r->metrics.recall_at.at(1)) : std::string("");
  };
  for (const auto& [name, rep] : results) {
    const auto* d = rep.find("mean", Task::DroneToSat);
    const auto* s = rep.find("mean", Task::SatToDrone);
    os << name << ',' << value(d, false) << ',' << value(d, true) << ',' << value(s, false) << ',' << value(s, true)
       << ',' << value(rep.find(unseen, Task::DroneToSat), false) << ','
       << value(rep.find(unseen, Task::SatToDrone), false) << '\n';
  }
  return os.str();
}

}  // namespace muse
