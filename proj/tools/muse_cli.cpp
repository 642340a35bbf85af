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


// muse: dataset generation, training, evaluation, ablation grids and
// gradient checks from one entry point.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "muse/muse.hpp"

namespace {

namespace fs = std::filesystem;

struct CommonTrainFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::string> spade;
  std::optional<double> style_loss_weight;
  std::optional<std::string> modulation;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
};

void add_train_flags(CLI::App* cmd, CommonTrainFlags& f) {
  cmd->add_option("--config", f.config_path, "Sectioned key=value config file");
  cmd->add_option("--set", f.overrides, "Override, e.g. train.epochs=10 (repeatable, applied last)");
  cmd->add_option("--spade", f.spade, "SPADE placement: none or a list such as b2,b3");
  cmd->add_option("--style-loss-weight", f.style_loss_weight, "Weight of the style loss in the total loss");
  cmd->add_option("--modulation", f.modulation, "residual or plain")->check(CLI::IsMember({"residual", "plain"}));
  cmd->add_option("--epochs", f.epochs, "Training epochs");
  cmd->add_option("--seed", f.seed, "Training seed");
  cmd->add_flag("--deterministic", f.deterministic, "Load batches synchronously on the training thread");
}

muse::RunConfig build_run_config(const CommonTrainFlags& f) {
  muse::RunConfig rc;
  if (!f.config_path.empty()) muse::load_config_file(rc, f.config_path);
  if (f.spade) muse::apply_setting(rc, "model", "spade", *f.spade);
  if (f.modulation) muse::apply_setting(rc, "model", "modulation", *f.modulation);
  if (f.style_loss_weight) muse::apply_setting(rc, "train", "loss_weight_style", std::to_string(*f.style_loss_weight));
  if (f.epochs) muse::apply_setting(rc, "train", "epochs", std::to_string(*f.epochs));
  if (f.seed) muse::apply_setting(rc, "train", "seed", std::to_string(*f.seed));
  if (f.deterministic) rc.train.deterministic = true;
  for (const auto& o : f.overrides) muse::apply_override(rc, o);
  return rc;
}

void print_epoch(const muse::EpochLog& e) {
  std::printf("epoch %3zu  l_style %.4f  l_id %.4f  l_total %.4f  lr %.2g/%.2g\n", e.epoch, e.l_style, e.l_id,
              e.l_total, e.lr_base, e.lr_boosted);
  std::fflush(stdout);
}

int cmd_gen_data(const std::string& out, const muse::DatasetSpec& spec) {
  const auto report = muse::generate_dataset(spec, out);
  std::printf("wrote %zu satellite and %zu drone images to %s\n", report.satellite_images, report.drone_images,
              out.c_str());
  std::printf("self-check: %.1f%% of %zu triplets rank the true view closer\n", 100.0 * report.triplet_pass_rate,
              report.triplets);
  return 0;
}

int cmd_train(const std::string& data, const std::string& out, const CommonTrainFlags& flags) {
  const auto rc = build_run_config(flags);
  const auto ds = muse::load_dataset(data);
  muse::train_to_directory(ds, rc, out, print_epoch);
  std::printf("checkpoint: %s\n", (fs::path(out) / muse::kCheckpointFile).string().c_str());
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data, const std::string& task,
             const std::string& conditions, const std::string& report_path, bool normalize, std::uint64_t seed) {
  const auto tasks = muse::parse_tasks(task);
  const auto conds = muse::parse_conditions(conditions);
  auto model = muse::load_checkpoint(model_path);
  const auto ds = muse::load_dataset(data);
  const auto report = muse::evaluate(model, ds, conds, tasks, {normalize, seed});
  muse::write_report_csv(report, report_path);
  std::fputs(muse::report_csv(report).c_str(), stdout);
  return 0;
}

int cmd_ablate(const std::string& grid, const std::string& data, const std::string& out,
               const CommonTrainFlags& flags) {
  const auto base = build_run_config(flags);
  const auto cells = muse::ablation_grid(grid, base);
  const auto ds = muse::load_dataset(data);
  std::vector<std::pair<std::string, muse::ConditionReport>> results;
  for (const auto& cell : cells) {
    std::printf("== cell %s\n", cell.name.c_str());
    const fs::path dir = fs::path(out) / muse::cell_directory_name(cell.name);
    auto trained = muse::train_to_directory(ds, cell.config, dir, print_epoch);
    auto report = muse::evaluate(trained.model, ds, muse::parse_conditions("all"),
                                 {muse::Task::DroneToSat, muse::Task::SatToDrone});
    muse::write_report_csv(report, (dir / "report.csv").string());
    results.emplace_back(cell.name, std::move(report));
  }
  const fs::path summary = fs::path(out) / "summary.csv";
  std::ofstream os(summary, std::ios::binary);
  if (!os) throw muse::IoError("cannot write '" + summary.string() + "'");
  const auto text = muse::ablation_summary_csv(results);
  os << text;
  std::fputs(text.c_str(), stdout);
  return 0;
}

int cmd_gradcheck(const std::string& ops_arg, std::size_t trials, std::uint64_t seed, const std::string& fault) {
  if (trials == 0) throw muse::UsageError("--trials must be positive");
  if (!fault.empty()) {
    const auto colon = fault.find(':');
    auto& f = muse::detail::fault_injection();
    f.op = fault.substr(0, colon);
    f.scale = colon == std::string::npos ? 1.01 : std::stod(fault.substr(colon + 1));
  }
  std::vector<std::string> ops;
  if (ops_arg == "all") {
    ops = muse::gradcheck_op_names();
  } else {
    std::stringstream ss(ops_arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) ops.push_back(tok);
  }
  const auto results = muse::run_gradchecks(ops, trials, seed);
  bool ok = true;
  for (const auto& r : results) {
    std::printf("%-22s %s  worst rel-err %.3e (trial %zu, input %zu)\n", r.op.c_str(), r.passed() ? "ok  " : "FAIL",
                r.worst_rel_err, r.worst_trial, r.worst_input);
    ok = ok && r.passed();
  }
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiple-environment cross-view geo-localization: data, training and evaluation"};
  app.require_subcommand(1);

  std::string out, data, model_path, task = "d2s", conditions = "all", report_path, grid, ops = "all", fault;
  muse::DatasetSpec spec;
  CommonTrainFlags train_flags, ablate_flags;
  bool normalize = false, eval_deterministic = false;
  std::uint64_t eval_seed = muse::kDefaultSeed, grad_seed = muse::kDefaultSeed;
  std::size_t trials = 20;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic cross-view dataset");
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--seed", spec.seed, "Generation seed");
  gen->add_option("--train-ids", spec.train_ids, "Training identities");
  gen->add_option("--test-ids", spec.test_ids, "Test identities");
  gen->add_option("--distractors", spec.distractor_ids, "Gallery-only distractor identities");
  gen->add_option("--views", spec.views_per_id, "Drone views per identity");
  gen->add_option("--size", spec.image_size, "Image size in pixels");

  auto* tr = app.add_subcommand("train", "Train a model and write checkpoint + log");
  tr->add_option("--data", data, "Dataset root")->required();
  tr->add_option("--out", out, "Output directory (model.ckpt, train_log.tsv)")->required();
  add_train_flags(tr, train_flags);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint per condition");
  ev->add_option("--model", model_path, "Checkpoint path")->required();
  ev->add_option("--data", data, "Dataset root")->required();
  ev->add_option("--task", task, "d2s, s2d or both");
  ev->add_option("--conditions", conditions, "all, seen, unseen or a comma-separated list");
  ev->add_option("--report", report_path, "CSV report path")->required();
  ev->add_flag("--normalize", normalize, "L2-normalise embeddings before ranking");
  ev->add_option("--seed", eval_seed, "Seed of the frozen evaluation styling");
  ev->add_flag("--deterministic", eval_deterministic, "Accepted for symmetry; evaluation is single-threaded");

  auto* ab = app.add_subcommand("ablate", "Run an ablation grid");
  ab->add_option("--grid", grid, "spade-placement, spade-vs-residual or loss-weight")->required();
  ab->add_option("--data", data, "Dataset root")->required();
  ab->add_option("--out", out, "Output directory")->required();
  add_train_flags(ab, ablate_flags);

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks (64-bit)");
  gc->add_option("--ops", ops, "all or a comma-separated op list");
  gc->add_option("--trials", trials, "Random instances per op");
  gc->add_option("--seed", grad_seed, "Seed of the random instances");
  gc->add_option("--inject-fault", fault, "Scale one op's kernel gradient (OP[:scale]); test fixture")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_gen_data(out, spec);
    if (*tr) return cmd_train(data, out, train_flags);
    if (*ev) return cmd_eval(model_path, data, task, conditions, report_path, normalize, eval_seed);
    if (*ab) return cmd_ablate(grid, data, out, ablate_flags);
    if (*gc) return cmd_gradcheck(ops, trials, grad_seed, fault);
  } catch (const muse::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const muse::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
