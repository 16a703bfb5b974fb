// Copyright 2026 The elevssl Authors.
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

// Command-line entry point: synth | pretrain | finetune | evaluate | ablate | plot.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <json.hpp>

#include "elevssl/errors.hpp"
#include "elevssl/exp_cli.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

void print_error(const std::string& kind, const std::string& message, const std::string& field = "") {
  json j = {{"error", kind}, {"message", message}};
  if (!field.empty()) j["field"] = field;
  std::cerr << j.dump() << std::endl;
}

constexpr const char* kConfigHelp = R"(Experiment config (JSON):
  data_dir        dataset directory holding manifest.jsonl (required)
  task            "classification" | "segmentation" (required)
  methods         default ["random", "simclr_elev"] or ["random", "glcnet_elev"]
  budgets         strictly increasing label budgets, default [split.finetune_size]
  seeds           default [0, 1, 2, 3, 4]
  split           {eval_pool: 128, finetune_size: 32, seed: 0,
                   pool: "pure" (classification) | "all" (segmentation)}
  pretrain        {method: "simclr_elev", epochs: 200, batch_size: 256, lr0: 0.001,
                   weight_decay: 1e-4, tau: 0.5, alpha: 0.5, lambda: 0.5, seed: 0,
                   encoder: "resnet18" | "tiny" | {stage_widths, blocks_per_stage},
                   elevation_loss: "per_pixel" | "eq5", proj_hidden: 256, proj_out: 128,
                   local: {n_regions: 4, patch: 16, max_retries: 10}, log_every: 1,
                   augmentation: {contrast: {...}, elevation: {...}} | "none"}
  finetune        {init: "random" | checkpoint path, probe_epochs: 20, probe_lr: 0.001,
                   full_epochs: 80, full_lr: 1e-5, batch_size: 8, weight_decay: 0,
                   segmentation_flips: true}
  out_dir         default "runs"
Relative paths resolve against the config file's directory. See configs/.)";

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Elevation-aware self-supervised pre-training toolkit"};
  app.footer(kConfigHelp);
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
  app.add_option("--config", config_path, "experiment config JSON")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "override the seed");
  app.add_option("--out", out, "output directory or file");
  app.add_flag("--quiet", quiet, "print nothing on success");

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  elevssl::SynthConfig sc;
  sc.pure_fraction = 0.25;
  std::int64_t tile_size = 100, elev_size = 33;
  synth->add_option("--tiles", sc.n_tiles, "number of tiles")->capture_default_str();
  synth->add_option("--coupling", sc.coupling, "elevation/class coupling in [0,1]")->capture_default_str();
  synth->add_option("--pure-fraction", sc.pure_fraction, "fraction of single-class tiles")->capture_default_str();
  synth->add_option("--label-noise", sc.label_noise, "annotation flip rate")->capture_default_str();
  synth->add_option("--bumps", sc.bump_count, "terrain bumps per tile")->capture_default_str();
  synth->add_option("--tile-size", tile_size, "RGB tile side")->capture_default_str();
  synth->add_option("--elev-size", elev_size, "elevation raster side")->capture_default_str();

  auto* pre = app.add_subcommand("pretrain", "pre-train one method and write its checkpoint");
  std::optional<std::string> method;
  pre->add_option("--method", method, "pre-training method (default: pretrain.method)");

  auto* fine = app.add_subcommand("finetune", "fine-tune a checkpoint (or random init) on labeled tiles");
  std::optional<std::string> checkpoint;
  std::optional<std::int64_t> budget;
  fine->add_option("--checkpoint", checkpoint, "checkpoint path or \"random\" (default: finetune.init)");
  fine->add_option("--budget", budget, "number of labeled tiles (default: whole fine-tune pool)");

  auto* eval = app.add_subcommand("evaluate", "evaluate a fine-tuned model");
  elevssl::EvaluateOptions eo;
  std::string eval_ckpt;
  eval->add_option("--model", eo.model, "fine-tuned model archive")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", eo.data_dir, "dataset directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--split", eo.split, "split JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("--subset", eo.subset, "test | finetune | pretrain")->capture_default_str();
  eval->add_option("--checkpoint", eval_ckpt, "refuse the model unless it matches this checkpoint's encoder");

  auto* ablate = app.add_subcommand("ablate", "label-budget ablation over methods and seeds");
  auto* plot = app.add_subcommand("plot", "summary.csv and plot.svg from a results directory");
  std::string results_dir;
  plot->add_option("--results", results_dir, "directory holding results.jsonl")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("config", e.what());
    return kExitConfig;
  }

  auto need_config = [&]() {
    if (config_path.empty()) throw elevssl::ConfigError("config", "--config is required for this command");
    auto c = elevssl::load_experiment_config(config_path);
    if (seed) {
      c.seeds = {*seed};
      c.pretrain.seed = *seed;
      c.finetune.seed = *seed;
    }
    return c;
  };

  try {
    elevssl::CommandOutput result;
    if (*synth) {
      if (config_path.size()) {
        std::ifstream in(config_path);
        const auto j = json::parse(in);
        sc.n_tiles = j.value("n_tiles", sc.n_tiles);
        sc.seed = j.value("seed", sc.seed);
        sc.coupling = j.value("coupling", sc.coupling);
        sc.pure_fraction = j.value("pure_fraction", sc.pure_fraction);
        sc.label_noise = j.value("label_noise", sc.label_noise);
        sc.bump_count = j.value("bump_count", sc.bump_count);
      }
      if (seed) sc.seed = *seed;
      sc.tile_shape = {tile_size, tile_size};
      sc.elev_shape = {elev_size, elev_size};
      result = elevssl::cmd_synth({sc, out});
    } else if (*pre) {
      auto c = need_config();
      result = elevssl::cmd_pretrain(c, method, out.empty() ? c.out_dir / "pretrain" : fs::path(out));
    } else if (*fine) {
      auto c = need_config();
      if (checkpoint) c.finetune.init = *checkpoint;
      result = elevssl::cmd_finetune(c, budget, out.empty() ? c.out_dir / "finetune" : fs::path(out));
    } else if (*eval) {
      eo.out = out;
      if (!eval_ckpt.empty()) eo.checkpoint = eval_ckpt;
      result = elevssl::cmd_evaluate(eo);
    } else if (*ablate) {
      auto c = need_config();
      if (!out.empty()) c.out_dir = out;
      result = elevssl::cmd_ablate(c);
    } else if (*plot) {
      result = elevssl::cmd_plot(results_dir, out.empty() ? fs::path(results_dir) : fs::path(out));
    }
    if (!quiet) std::cout << result.summary.dump() << std::endl;
    return 0;
  } catch (const c10::Error& e) {
    print_error("runtime", e.what_without_backtrace());
    return kExitRuntime;
  } catch (const elevssl::ConfigError& e) {
    print_error("config", e.what(), e.field());
    return kExitConfig;
  } catch (const json::exception& e) {
    print_error("config", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    print_error("runtime", e.what());
    return kExitRuntime;
  }
}
