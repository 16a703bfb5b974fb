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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "elevssl/core_data.hpp"
#include "elevssl/eval_metrics.hpp"
#include "elevssl/train_engines.hpp"

namespace elevssl {

/// Which tiles may enter the evaluation pool.
enum class PoolSource { all, pure };

struct SplitConfig {
  std::size_t eval_pool = 128;
  std::size_t finetune_size = 32;
  std::uint64_t seed = 0;
  /// Default: pure tiles for classification, every tile for segmentation.
  std::optional<PoolSource> pool;
};

struct ExperimentConfig {
  std::filesystem::path data_dir;
  Task task = Task::classification;
  /// Pre-training methods plus "random" for the no-pre-training baseline.
  std::vector<std::string> methods;
  std::vector<std::int64_t> budgets;
  std::vector<std::uint64_t> seeds;
  SplitConfig split;
  PretrainConfig pretrain;
  FinetuneConfig finetune;
  std::filesystem::path out_dir;
};

inline constexpr const char* kRandomInit = "random";

/// Parses and validates. Relative paths resolve against `base_dir`.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json experiment_config_to_json(const ExperimentConfig& c);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
/// Hash of the normalized config; embedded in every artifact.
std::string config_hash(const ExperimentConfig& c);

bool method_valid_for_task(const std::string& method, Task task);

/// Split used by every stage of an experiment.
SplitAssignment experiment_split(const ExperimentConfig& c, const DatasetManifest& manifest);

/// The first `budget` ids of a seeded permutation of the fine-tune pool, so
/// smaller budgets are subsets of larger ones for the same seed.
std::vector<std::string> budget_ids(std::span<const std::string> finetune_ids, std::int64_t budget,
                                    std::uint64_t seed);

struct ResultRow {
  Task task = Task::classification;
  std::string method;
  std::int64_t budget = 0;
  std::uint64_t seed = 0;
  EvalReport metrics;
  double wall_seconds = 0.0;
  std::vector<std::string> label_ids;
  std::string config_hash;
};

nlohmann::json to_json(const ResultRow& r);
ResultRow result_row_from_json(const nlohmann::json& j);
/// Complete rows of a results file; a torn trailing line is ignored.
std::vector<ResultRow> read_results(const std::filesystem::path& path);
/// Appends one line under an exclusive file lock.
void append_result(const ResultRow& row, const std::filesystem::path& path);

struct SynthOptions {
  SynthConfig config;
  std::filesystem::path out_dir;
};

struct CommandOutput {
  nlohmann::json summary;  // printed as one JSON line unless --quiet
};

CommandOutput cmd_synth(const SynthOptions& opts);

/// Pre-trains `method` (default: config.pretrain.method) and writes
/// checkpoint.ckpt and train_log.jsonl into `out_dir`.
CommandOutput cmd_pretrain(const ExperimentConfig& c, const std::optional<std::string>& method,
                           const std::filesystem::path& out_dir);

/// Fine-tunes from config.finetune.init on `budget` ids (default: the whole
/// fine-tune pool) and writes model.ckpt and finetune_log.jsonl.
CommandOutput cmd_finetune(const ExperimentConfig& c, const std::optional<std::int64_t>& budget,
                           const std::filesystem::path& out_dir);

struct EvaluateOptions {
  std::filesystem::path model;
  std::filesystem::path data_dir;
  std::filesystem::path split;
  std::string subset = "test";
  std::optional<std::filesystem::path> checkpoint;
  std::filesystem::path out;
};

CommandOutput cmd_evaluate(const EvaluateOptions& opts);

/// Runs every missing (method, budget, seed) cell, appending to
/// out_dir/results.jsonl, then writes summary.csv and plot.svg.
/// ELEVSSL_THREADS > 1 spreads (method, seed) groups over forked workers.
CommandOutput cmd_ablate(const ExperimentConfig& c);

/// summary.csv and plot.svg from results_dir/results.jsonl. Throws
/// ConfigError when there are no rows.
CommandOutput cmd_plot(const std::filesystem::path& results_dir, const std::filesystem::path& out_dir);

struct SummaryRow {
  std::string method;
  std::int64_t budget = 0;
  std::size_t n_seeds = 0;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

/// Mean/min/max of the task metric per (method, budget): macro-F1 for
/// classification, MIoU for segmentation.
std::vector<SummaryRow> summarize(std::span<const ResultRow> rows, Task task);
std::string render_svg(std::span<const SummaryRow> summary, const std::string& metric_name);

}  // namespace elevssl
