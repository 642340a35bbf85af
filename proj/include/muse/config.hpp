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

// Run configuration: a sectioned key=value file ([dataset], [model],
// [train]) merged with "section.key=value" overrides. Later settings win.

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "muse/dataset.hpp"
#include "muse/error.hpp"
#include "muse/model.hpp"
#include "muse/trainer.hpp"

namespace muse {

struct RunConfig {
  DatasetSpec dataset;
  ModelConfig model;
  TrainConfig train;
  std::set<std::string> explicit_keys;  // "section.key"

  bool is_set(const std::string& qualified) const { return explicit_keys.count(qualified) != 0; }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

inline std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  if (v.empty() || v == "none") return out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(parse_size(key, trim(tok)));
  return out;
}

inline bool apply_dataset_setting(DatasetSpec& d, const std::string& key, const std::string& v) {
  if (key == "train_ids") d.train_ids = parse_size(key, v);
  else if (key == "test_ids") d.test_ids = parse_size(key, v);
  else if (key == "views_per_id") d.views_per_id = parse_size(key, v);
  else if (key == "image_size") d.image_size = parse_size(key, v);
  else if (key == "distractor_ids") d.distractor_ids = parse_size(key, v);
  else if (key == "seed") d.seed = parse_size(key, v);
  else return false;
  return true;
}

inline bool apply_train_setting(TrainConfig& t, const std::string& key, const std::string& v) {
  if (key == "epochs") t.epochs = parse_size(key, v);
  else if (key == "batch_per_platform") t.batch_per_platform = parse_size(key, v);
  else if (key == "base_lr") t.base_lr = parse_real(key, v);
  else if (key == "boosted_lr") t.boosted_lr = parse_real(key, v);
  else if (key == "momentum") t.momentum = parse_real(key, v);
  else if (key == "weight_decay") t.weight_decay = parse_real(key, v);
  else if (key == "decay_epochs") t.decay_epochs = parse_size_list(key, v);
  else if (key == "decay_factor") t.decay_factor = parse_real(key, v);
  else if (key == "loss_weight_style") t.loss_weight_style = parse_real(key, v);
  else if (key == "seed") t.seed = parse_size(key, v);
  else if (key == "deterministic") t.deterministic = parse_bool(key, v);
  else return false;
  return true;
}

}  // namespace detail

inline void apply_setting(RunConfig& rc, const std::string& section, const std::string& key, const std::string& value) {
  bool known = false;
  if (section == "dataset") known = detail::apply_dataset_setting(rc.dataset, key, value);
  else if (section == "model") known = apply_model_setting(rc.model, key, value);
  else if (section == "train") known = detail::apply_train_setting(rc.train, key, value);
  else throw ConfigError("unknown config section '" + section + "' (expected dataset, model or train)");
  if (!known) throw ConfigError("unknown key '" + key + "' in section [" + section + "]");
  rc.explicit_keys.insert(section + "." + key);
}

// "section.key=value".
inline void apply_override(RunConfig& rc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw UsageError("override '" + assignment + "' must look like section.key=value");
  }
  apply_setting(rc, assignment.substr(0, dot), assignment.substr(dot + 1, eq - dot - 1), assignment.substr(eq + 1));
}

inline void apply_config_text(RunConfig& rc, const std::string& text, const std::string& origin = "config") {
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value");
    if (section.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": setting outside a section");
    try {
      apply_setting(rc, section, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline void load_config_file(RunConfig& rc, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(rc, ss.str(), path);
}

}  // namespace muse
