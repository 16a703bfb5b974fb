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

#include "elevssl/exp_cli.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "elevssl/errors.hpp"
#include "elevssl/hash.hpp"
#include "elevssl/rng.hpp"

namespace elevssl {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kBudgetTag = 0xB0D6E7;

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

template <typename T>
T field(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(key, std::string(key) + ": " + e.what());
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
      throw ConfigError(where + key, "unknown key '" + where + key + "'");
  }
}

std::vector<std::string> default_methods(Task task) {
  if (task == Task::classification) return {kRandomInit, "simclr_elev"};
  return {kRandomInit, "glcnet_elev"};
}

DatasetManifest open_dataset(const fs::path& data_dir) { return load_manifest(data_dir / "manifest.jsonl"); }

void write_text_atomic(const fs::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out << text;
    if (!out) throw IoError("write failed: " + tmp);
  }
  fs::rename(tmp, path);
}

PretrainConfig pretrain_for(const ExperimentConfig& c, Method method, std::uint64_t seed) {
  auto p = c.pretrain;
  p.method = method;
  p.seed = seed;
  return p;
}

std::string checkpoint_key(const ExperimentConfig& c, const PretrainConfig& p, const DatasetManifest& m) {
  json j = {{"pretrain", pretrain_config_to_json(p)},
            {"data", m.config_hash},
            {"split", {{"eval_pool", c.split.eval_pool}, {"finetune_size", c.split.finetune_size}, {"seed", c.split.seed}}},
            {"task", to_string(c.task)}};
  return json_hash(j);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

bool method_valid_for_task(const std::string& method, Task task) {
  if (method == kRandomInit || method == "elevation") return true;
  if (task == Task::classification) return method == "simclr" || method == "simclr_elev";
  return method == "glcnet" || method == "glcnet_elev";
}

ExperimentConfig experiment_config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("", "experiment config must be a JSON object");
  reject_unknown(j, {"data_dir", "task", "methods", "budgets", "seeds", "split", "pretrain", "finetune", "out_dir"}, "");
  ExperimentConfig c;
  if (!j.contains("data_dir")) throw ConfigError("data_dir", "data_dir is required");
  c.data_dir = resolve(field<std::string>(j, "data_dir", ""), base_dir);
  if (!j.contains("task")) throw ConfigError("task", "task is required");
  c.task = task_from_string(field<std::string>(j, "task", ""));
  c.methods = field(j, "methods", default_methods(c.task));
  c.seeds = field(j, "seeds", std::vector<std::uint64_t>{0, 1, 2, 3, 4});
  c.out_dir = resolve(field<std::string>(j, "out_dir", "runs"), base_dir);

  if (j.contains("split")) {
    const auto& s = j.at("split");
    if (!s.is_object()) throw ConfigError("split", "split must be an object");
    reject_unknown(s, {"eval_pool", "finetune_size", "seed", "pool"}, "split.");
    c.split.eval_pool = field(s, "eval_pool", c.split.eval_pool);
    c.split.finetune_size = field(s, "finetune_size", c.split.finetune_size);
    c.split.seed = field(s, "seed", c.split.seed);
    if (s.contains("pool")) {
      const auto pool = field<std::string>(s, "pool", "");
      if (pool == "all") c.split.pool = PoolSource::all;
      else if (pool == "pure") c.split.pool = PoolSource::pure;
      else throw ConfigError("split.pool", "split.pool must be 'all' or 'pure'");
    }
  }
  c.budgets = field(j, "budgets", std::vector<std::int64_t>{static_cast<std::int64_t>(c.split.finetune_size)});

  if (j.contains("pretrain")) c.pretrain = pretrain_config_from_json(j.at("pretrain"));
  if (j.contains("finetune")) {
    const auto& f = j.at("finetune");
    c.finetune = finetune_config_from_json(f);
    if (f.is_object() && f.contains("task") && c.finetune.task != c.task)
      throw ConfigError("finetune.task", "finetune.task differs from task");
    if (f.is_object() && f.contains("init") && c.finetune.init != kRandomInit)
      c.finetune.init = resolve(c.finetune.init, base_dir).string();
  }
  c.finetune.task = c.task;
  if (!c.finetune.encoder) c.finetune.encoder = c.pretrain.encoder;
  if (*c.finetune.encoder != c.pretrain.encoder)
    throw ConfigError("finetune.encoder", "finetune.encoder must match pretrain.encoder");

  if (c.methods.empty()) throw ConfigError("methods", "methods must not be empty");
  for (const auto& m : c.methods) {
    if (m != kRandomInit) method_from_string(m);
    if (!method_valid_for_task(m, c.task))
      throw ConfigError("methods", "method '" + m + "' is not used for " + to_string(c.task));
  }
  if (std::set<std::string>(c.methods.begin(), c.methods.end()).size() != c.methods.size())
    throw ConfigError("methods", "methods must be distinct");
  if (c.seeds.empty()) throw ConfigError("seeds", "seeds must not be empty");
  if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size())
    throw ConfigError("seeds", "seeds must be distinct");
  if (c.budgets.empty()) throw ConfigError("budgets", "budgets must not be empty");
  for (std::size_t i = 0; i < c.budgets.size(); ++i) {
    if (c.budgets[i] < 1) throw ConfigError("budgets", "budgets must be positive");
    if (i > 0 && c.budgets[i] <= c.budgets[i - 1]) throw ConfigError("budgets", "budgets must be strictly increasing");
  }
  if (c.split.finetune_size < 1 || c.split.finetune_size >= c.split.eval_pool)
    throw ConfigError("split.finetune_size", "need 1 <= finetune_size < eval_pool");
  if (static_cast<std::size_t>(c.budgets.back()) > c.split.finetune_size)
    throw ConfigError("budgets", "budget " + std::to_string(c.budgets.back()) + " exceeds the fine-tune pool of " +
                                     std::to_string(c.split.finetune_size));
  return c;
}

json experiment_config_to_json(const ExperimentConfig& c) {
  json split = {{"eval_pool", c.split.eval_pool}, {"finetune_size", c.split.finetune_size}, {"seed", c.split.seed}};
  if (c.split.pool) split["pool"] = *c.split.pool == PoolSource::pure ? "pure" : "all";
  return {{"data_dir", c.data_dir.string()},
          {"task", to_string(c.task)},
          {"methods", c.methods},
          {"budgets", c.budgets},
          {"seeds", c.seeds},
          {"split", split},
          {"pretrain", pretrain_config_to_json(c.pretrain)},
          {"finetune", finetune_config_to_json(c.finetune)},
          {"out_dir", c.out_dir.string()}};
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", "config " + path.string() + " is not valid JSON: " + e.what());
  }
  return experiment_config_from_json(j, path.parent_path());
}

std::string config_hash(const ExperimentConfig& c) {
  auto j = experiment_config_to_json(c);
  // Location does not change what is computed.
  j.erase("data_dir");
  j.erase("out_dir");
  j["finetune"].erase("init");
  return json_hash(j);
}

SplitAssignment experiment_split(const ExperimentConfig& c, const DatasetManifest& manifest) {
  const auto pool = c.split.pool.value_or(c.task == Task::classification ? PoolSource::pure : PoolSource::all);
  if (pool == PoolSource::all) return split_dataset(manifest, c.split.eval_pool, c.split.finetune_size, c.split.seed);
  std::vector<std::string> pure;
  for (auto& [id, label] : derive_classification_set(manifest, manifest.ids())) pure.push_back(id);
  if (pure.size() < c.split.eval_pool)
    throw ConfigError("split.eval_pool", "eval_pool " + std::to_string(c.split.eval_pool) + " exceeds the " +
                                             std::to_string(pure.size()) + " single-class tiles of the dataset");
  return split_dataset(manifest, c.split.eval_pool, c.split.finetune_size, c.split.seed,
                       std::span<const std::string>(pure));
}

std::vector<std::string> budget_ids(std::span<const std::string> finetune_ids, std::int64_t budget,
                                    std::uint64_t seed) {
  if (budget < 0 || static_cast<std::size_t>(budget) > finetune_ids.size())
    throw ArgumentError("budget_ids: budget exceeds the fine-tune pool");
  std::vector<std::string> ids(finetune_ids.begin(), finetune_ids.end());
  Rng rng(seed_state(seed).derive(kBudgetTag));
  rng.shuffle(std::span<std::string>(ids));
  ids.resize(static_cast<std::size_t>(budget));
  return ids;
}

json to_json(const ResultRow& r) {
  return {{"task", to_string(r.task)},
          {"method", r.method},
          {"budget", r.budget},
          {"seed", r.seed},
          {"metrics", to_json(r.metrics)},
          {"wall_seconds", r.wall_seconds},
          {"label_ids", r.label_ids},
          {"config_hash", r.config_hash}};
}

ResultRow result_row_from_json(const json& j) {
  try {
    ResultRow r;
    r.task = task_from_string(j.at("task").get<std::string>());
    r.method = j.at("method").get<std::string>();
    r.budget = j.at("budget").get<std::int64_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.metrics = eval_report_from_json(j.at("metrics"));
    r.wall_seconds = j.value("wall_seconds", 0.0);
    r.label_ids = j.value("label_ids", std::vector<std::string>{});
    r.config_hash = j.value("config_hash", "");
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad result row: ") + e.what());
  }
}

std::vector<ResultRow> read_results(const fs::path& path) {
  std::vector<ResultRow> rows;
  std::ifstream in(path);
  if (!in) return rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) continue;  // torn write from an interrupted run
    rows.push_back(result_row_from_json(j));
  }
  return rows;
}

void append_result(const ResultRow& row, const fs::path& path) {
  const std::string line = to_json(row).dump() + "\n";
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw IoError("cannot open results file " + path.string());
  if (::flock(fd, LOCK_EX) != 0) {
    ::close(fd);
    throw IoError("cannot lock results file " + path.string());
  }
  const auto written = ::write(fd, line.data(), line.size());
  ::fsync(fd);
  ::flock(fd, LOCK_UN);
  ::close(fd);
  if (written != static_cast<ssize_t>(line.size())) throw IoError("short write to " + path.string());
}

CommandOutput cmd_synth(const SynthOptions& opts) {
  if (opts.out_dir.empty()) throw ConfigError("out", "--out is required");
  if (opts.config.n_tiles < 1) throw ConfigError("tiles", "tiles must be at least 1");
  if (opts.config.coupling < 0.0 || opts.config.coupling > 1.0)
    throw ConfigError("coupling", "coupling must lie in [0,1]");
  if (opts.config.pure_fraction < 0.0 || opts.config.pure_fraction > 1.0)
    throw ConfigError("pure_fraction", "pure_fraction must lie in [0,1]");
  if (opts.config.label_noise < 0.0 || opts.config.label_noise > 0.5)
    throw ConfigError("label_noise", "label_noise must lie in [0,0.5]");
  const auto m = generate_synthetic(opts.config, opts.out_dir);
  return {{{"command", "synth"},
           {"tiles", m.entries.size()},
           {"manifest", (opts.out_dir / "manifest.jsonl").string()},
           {"config_hash", m.config_hash}}};
}

CommandOutput cmd_pretrain(const ExperimentConfig& c, const std::optional<std::string>& method,
                           const fs::path& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  auto p = c.pretrain;
  if (method) p.method = method_from_string(*method);
  if (is_contrastive(p.method) && p.batch_size < 2)
    throw ConfigError("pretrain.batch_size", "contrastive methods need batch_size >= 2");
  const auto manifest = open_dataset(c.data_dir);
  const auto split = experiment_split(c, manifest);
  fs::create_directories(out_dir);
  const auto hash = checkpoint_key(c, p, manifest);
  auto result = pretrain(p, manifest, split, hash);
  save_checkpoint(result.checkpoint, out_dir / "checkpoint.ckpt");
  write_log(result.log, out_dir / "train_log.jsonl");
  save_split(split, out_dir / "split.json");
  return {{{"command", "pretrain"},
           {"method", to_string(p.method)},
           {"checkpoint", (out_dir / "checkpoint.ckpt").string()},
           {"config_hash", hash},
           {"final_loss", result.log.empty() ? 0.0 : result.log.back().loss.total},
           {"wall_seconds", seconds_since(t0)}}};
}

namespace {

struct FinetuneRun {
  TaskModel model{nullptr};
  json provenance;
  TrainingLog log;
};

FinetuneRun run_finetune(const ExperimentConfig& c, const FinetuneConfig& ft, const std::optional<Checkpoint>& ckpt,
                         const std::string& checkpoint_id, std::span<const TileSample> labeled, std::int64_t budget) {
  auto r = finetune(ft, ckpt, labeled);
  FinetuneRun out;
  out.model = r.model;
  out.log = std::move(r.log);
  out.provenance = {{"method", ckpt ? ckpt->method : std::string(kRandomInit)},
                    {"checkpoint", checkpoint_id},
                    {"checkpoint_config_hash", ckpt ? ckpt->config_hash : ""},
                    {"checkpoint_architecture_hash", architecture_hash(r.model->encoder_spec)},
                    {"split_seed", c.split.seed},
                    {"budget", budget},
                    {"seed", ft.seed},
                    {"task", to_string(ft.task)},
                    {"config_hash", config_hash(c)}};
  return out;
}

}  // namespace

CommandOutput cmd_finetune(const ExperimentConfig& c, const std::optional<std::int64_t>& budget,
                           const fs::path& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto manifest = open_dataset(c.data_dir);
  const auto split = experiment_split(c, manifest);
  const auto b = budget.value_or(static_cast<std::int64_t>(split.finetune_ids.size()));
  if (b < 1 || static_cast<std::size_t>(b) > split.finetune_ids.size())
    throw ConfigError("budget", "budget must lie in [1, " + std::to_string(split.finetune_ids.size()) + "]");
  const auto ids = budget_ids(split.finetune_ids, b, c.finetune.seed);
  const auto labeled = load_tiles(manifest, ids);
  std::optional<Checkpoint> ckpt;
  if (c.finetune.init != kRandomInit) ckpt = load_checkpoint(c.finetune.init);
  auto ft = c.finetune;
  if (ckpt) ft.encoder.reset();
  fs::create_directories(out_dir);
  auto run = run_finetune(c, ft, ckpt, c.finetune.init, labeled, b);
  run.provenance["label_ids"] = ids;
  save_task_model(run.model, run.provenance, out_dir / "model.ckpt");
  write_log(run.log, out_dir / "finetune_log.jsonl");
  save_split(split, out_dir / "split.json");
  return {{{"command", "finetune"},
           {"model", (out_dir / "model.ckpt").string()},
           {"budget", b},
           {"final_loss", run.log.empty() ? 0.0 : run.log.back().loss.total},
           {"wall_seconds", seconds_since(t0)}}};
}

CommandOutput cmd_evaluate(const EvaluateOptions& opts) {
  if (opts.model.empty()) throw ConfigError("model", "--model is required");
  if (opts.data_dir.empty()) throw ConfigError("data", "--data is required");
  if (opts.split.empty()) throw ConfigError("split", "--split is required");
  auto [model, provenance] = load_task_model(opts.model);
  if (opts.checkpoint) {
    const auto ckpt = load_checkpoint(*opts.checkpoint);
    if (architecture_hash(ckpt.encoder_spec) != architecture_hash(model->encoder_spec))
      throw ValidationError("model " + opts.model.string() + " does not share the encoder architecture of checkpoint " +
                            opts.checkpoint->string());
  }
  const auto manifest = open_dataset(opts.data_dir);
  const auto split = load_split(opts.split);
  const std::vector<std::string>* ids = nullptr;
  if (opts.subset == "test") ids = &split.test_ids;
  else if (opts.subset == "finetune") ids = &split.finetune_ids;
  else if (opts.subset == "pretrain") ids = &split.pretrain_ids;
  else throw ConfigError("subset", "subset must be test, finetune or pretrain");
  const auto tiles = load_tiles(manifest, *ids);
  auto report = evaluate(model, tiles);
  report.provenance = provenance;
  report.provenance.erase("label_ids");
  report.provenance["subset"] = opts.subset;
  report.provenance["split_seed"] = split.seed;
  report.provenance["data_hash"] = manifest.config_hash;
  if (!opts.out.empty()) {
    if (opts.out.has_parent_path()) fs::create_directories(opts.out.parent_path());
    save_report(report, opts.out);
  }
  return {{{"command", "evaluate"},
           {"accuracy", report.accuracy},
           {"macro_f1", report.macro_f1},
           {"miou", report.miou},
           {"n_units", report.n_units}}};
}

namespace {

struct AblationCell {
  std::string method;
  std::uint64_t seed;
  std::vector<std::int64_t> budgets;  // still missing
};

struct AblationContext {
  const ExperimentConfig& config;
  const DatasetManifest& manifest;
  const SplitAssignment& split;
  std::string hash;
  fs::path results;
};

void run_cell(const AblationContext& ctx, const AblationCell& cell, const std::vector<TileSample>& pretrain_tiles,
              const std::vector<TileSample>& test_tiles) {
  const auto& c = ctx.config;
  std::optional<Checkpoint> ckpt;
  std::string checkpoint_id = kRandomInit;
  if (cell.method != kRandomInit) {
    const auto p = pretrain_for(c, method_from_string(cell.method), cell.seed);
    const auto key = checkpoint_key(c, p, ctx.manifest);
    const auto dir = c.out_dir / "checkpoints";
    const auto path = dir / (cell.method + "_seed" + std::to_string(cell.seed) + "_" + key + ".ckpt");
    checkpoint_id = path.filename().string();
    if (fs::exists(path)) {
      ckpt = load_checkpoint(path);
    } else {
      auto r = pretrain(p, pretrain_tiles, key);
      fs::create_directories(dir);
      write_log(r.log, dir / (path.stem().string() + "_log.jsonl"));
      save_checkpoint(r.checkpoint, path);
      ckpt = std::move(r.checkpoint);
    }
  }
  for (auto budget : cell.budgets) {
    const auto t0 = std::chrono::steady_clock::now();
    auto ft = c.finetune;
    ft.seed = cell.seed;
    if (ckpt) ft.encoder.reset();
    const auto ids = budget_ids(ctx.split.finetune_ids, budget, cell.seed);
    const auto labeled = load_tiles(ctx.manifest, ids);
    auto run = run_finetune(c, ft, ckpt, checkpoint_id, labeled, budget);
    ResultRow row;
    row.task = c.task;
    row.method = cell.method;
    row.budget = budget;
    row.seed = cell.seed;
    row.metrics = evaluate(run.model, test_tiles);
    row.metrics.provenance = run.provenance;
    row.metrics.provenance["data_hash"] = ctx.manifest.config_hash;
    row.label_ids = ids;
    row.config_hash = ctx.hash;
    row.wall_seconds = seconds_since(t0);
    append_result(row, ctx.results);
  }
}

std::size_t worker_count() {
  const char* env = std::getenv("ELEVSSL_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw ConfigError("ELEVSSL_THREADS", "ELEVSSL_THREADS must be a positive integer");
  return static_cast<std::size_t>(v);
}

}  // namespace

CommandOutput cmd_ablate(const ExperimentConfig& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto workers = worker_count();
  const auto manifest = open_dataset(c.data_dir);
  const auto split = experiment_split(c, manifest);
  fs::create_directories(c.out_dir);
  const auto split_path = c.out_dir / "split.json";
  if (fs::exists(split_path)) {
    const auto saved = load_split(split_path);
    if (split_to_json(saved) != split_to_json(split))
      throw ConfigError("split", "existing " + split_path.string() + " was produced by a different split");
  } else {
    save_split(split, split_path);
  }
  const auto hash = config_hash(c);
  write_text_atomic(c.out_dir / "config.json", experiment_config_to_json(c).dump(2) + "\n");

  const auto results = c.out_dir / "results.jsonl";
  std::set<std::tuple<std::string, std::int64_t, std::uint64_t>> done;
  for (const auto& r : read_results(results)) {
    if (r.config_hash != hash)
      throw ConfigError("out_dir", results.string() + " holds rows from a different configuration");
    done.emplace(r.method, r.budget, r.seed);
  }
  std::vector<AblationCell> cells;
  for (auto seed : c.seeds) {
    for (const auto& method : c.methods) {
      AblationCell cell{method, seed, {}};
      for (auto b : c.budgets)
        if (!done.contains({method, b, seed})) cell.budgets.push_back(b);
      if (!cell.budgets.empty()) cells.push_back(std::move(cell));
    }
  }

  std::size_t skipped = done.size();
  if (!cells.empty()) {
    const AblationContext ctx{c, manifest, split, hash, results};
    const bool any_pretrain =
        std::any_of(cells.begin(), cells.end(), [](const AblationCell& x) { return x.method != kRandomInit; });
    std::vector<TileSample> pretrain_tiles;
    if (any_pretrain) pretrain_tiles = load_tiles(manifest, split.pretrain_ids);
    const auto test_tiles = load_tiles(manifest, split.test_ids);
    const auto n = std::min(workers, cells.size());
    if (n <= 1) {
      use_single_thread();
      for (const auto& cell : cells) run_cell(ctx, cell, pretrain_tiles, test_tiles);
    } else {
      std::cout.flush();
      std::cerr.flush();
      std::vector<pid_t> pids;
      for (std::size_t w = 0; w < n; ++w) {
        const pid_t pid = ::fork();
        if (pid < 0) throw std::runtime_error("fork failed");
        if (pid == 0) {
          int status = 0;
          try {
            use_single_thread();
            for (std::size_t i = w; i < cells.size(); i += n) run_cell(ctx, cells[i], pretrain_tiles, test_tiles);
          } catch (const std::exception& e) {
            std::cerr << json({{"error", "worker"}, {"message", e.what()}}).dump() << std::endl;
            status = 1;
          }
          std::_Exit(status);
        }
        pids.push_back(pid);
      }
      bool failed = false;
      for (auto pid : pids) {
        int status = 0;
        ::waitpid(pid, &status, 0);
        failed |= !WIFEXITED(status) || WEXITSTATUS(status) != 0;
      }
      if (failed) throw std::runtime_error("one or more ablation workers failed; completed rows were kept");
    }
  }
  auto plot = cmd_plot(c.out_dir, c.out_dir);
  const auto rows = read_results(results);
  return {{{"command", "ablate"},
           {"rows", rows.size()},
           {"resumed_rows", skipped},
           {"results", results.string()},
           {"plot", plot.summary["plot"]},
           {"wall_seconds", seconds_since(t0)}}};
}

std::vector<SummaryRow> summarize(std::span<const ResultRow> rows, Task task) {
  std::map<std::pair<std::string, std::int64_t>, std::vector<double>> groups;
  for (const auto& r : rows) {
    const double v = task == Task::classification ? r.metrics.macro_f1 : r.metrics.miou;
    groups[{r.method, r.budget}].push_back(v);
  }
  std::vector<SummaryRow> out;
  for (const auto& [key, values] : groups) {
    SummaryRow s;
    s.method = key.first;
    s.budget = key.second;
    s.n_seeds = values.size();
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    s.min = *std::min_element(values.begin(), values.end());
    s.max = *std::max_element(values.begin(), values.end());
    out.push_back(s);
  }
  return out;
}

std::string render_svg(std::span<const SummaryRow> summary, const std::string& metric_name) {
  constexpr double kW = 640, kH = 400, kL = 60, kR = 150, kT = 30, kB = 50;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  std::map<std::string, std::vector<SummaryRow>> lines;
  std::set<std::int64_t> budgets;
  double lo = 1.0, hi = 0.0;
  for (const auto& s : summary) {
    lines[s.method].push_back(s);
    budgets.insert(s.budget);
    lo = std::min(lo, s.min);
    hi = std::max(hi, s.max);
  }
  if (lines.empty()) throw ArgumentError("render_svg: nothing to plot");
  lo = std::max(0.0, lo - 0.05);
  hi = std::min(1.0, hi + 0.05);
  if (hi <= lo) hi = lo + 0.1;
  const double xlo = std::log(static_cast<double>(*budgets.begin()));
  double xhi = std::log(static_cast<double>(*budgets.rbegin()));
  const double xspan = xhi > xlo ? xhi - xlo : 1.0;
  auto px = [&](std::int64_t b) {
    const double f = budgets.size() == 1 ? 0.5 : (std::log(static_cast<double>(b)) - xlo) / xspan;
    return kL + f * (kW - kL - kR);
  };
  auto py = [&](double v) { return kT + (hi - v) / (hi - lo) * (kH - kT - kB); };

  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" viewBox=\"0 0 "
     << kW << ' ' << kH << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<g class=\"axes\" stroke=\"black\">\n";
  os << "<line x1=\"" << kL << "\" y1=\"" << kH - kB << "\" x2=\"" << kW - kR << "\" y2=\"" << kH - kB << "\"/>\n";
  os << "<line x1=\"" << kL << "\" y1=\"" << kT << "\" x2=\"" << kL << "\" y2=\"" << kH - kB << "\"/>\n";
  os << "</g>\n";
  for (auto b : budgets)
    os << "<text x=\"" << px(b) << "\" y=\"" << kH - kB + 16 << "\" text-anchor=\"middle\">" << b << "</text>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    os << "<text x=\"" << kL - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">" << std::setprecision(3) << v
       << std::setprecision(2) << "</text>\n";
  }
  os << "<text x=\"" << (kL + kW - kR) / 2 << "\" y=\"" << kH - 12
     << "\" text-anchor=\"middle\">labeled tiles (log scale)</text>\n";
  os << "<text x=\"16\" y=\"" << (kT + kH - kB) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << (kT + kH - kB) / 2 << ")\">" << metric_name << "</text>\n";
  std::size_t k = 0;
  for (const auto& [method, pts] : lines) {
    const char* color = kColors[k % std::size(kColors)];
    os << "<polygon class=\"band\" fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
    for (const auto& p : pts) os << px(p.budget) << ',' << py(p.max) << ' ';
    for (auto it = pts.rbegin(); it != pts.rend(); ++it) os << px(it->budget) << ',' << py(it->min) << ' ';
    os << "\"/>\n";
    os << "<polyline class=\"mean\" data-method=\"" << method << "\" fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i)
      os << (i ? " " : "") << px(pts[i].budget) << ',' << py(pts[i].mean);
    os << "\"/>\n";
    const double ly = kT + 18.0 * static_cast<double>(k);
    os << "<line x1=\"" << kW - kR + 12 << "\" y1=\"" << ly << "\" x2=\"" << kW - kR + 32 << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << kW - kR + 38 << "\" y=\"" << ly + 4 << "\">" << method << "</text>\n";
    ++k;
  }
  os << "</svg>\n";
  return os.str();
}

CommandOutput cmd_plot(const fs::path& results_dir, const fs::path& out_dir) {
  const auto rows = read_results(results_dir / "results.jsonl");
  if (rows.empty()) throw ConfigError("results", "no result rows in " + (results_dir / "results.jsonl").string());
  const auto task = rows.front().task;
  for (const auto& r : rows)
    if (r.task != task) throw ValidationError("results mix classification and segmentation rows");
  const auto summary = summarize(rows, task);
  const std::string metric = task == Task::classification ? "macro_f1" : "miou";

  std::ostringstream csv;
  csv << "method,budget,metric,n_seeds,mean,min,max\n" << std::setprecision(10);
  for (const auto& s : summary)
    csv << s.method << ',' << s.budget << ',' << metric << ',' << s.n_seeds << ',' << s.mean << ',' << s.min << ','
        << s.max << '\n';
  fs::create_directories(out_dir);
  write_text_atomic(out_dir / "summary.csv", csv.str());
  write_text_atomic(out_dir / "plot.svg", render_svg(summary, task == Task::classification ? "macro-F1" : "MIoU"));
  return {{{"command", "plot"},
           {"rows", rows.size()},
           {"summary", (out_dir / "summary.csv").string()},
           {"plot", (out_dir / "plot.svg").string()}}};
}

}  // namespace elevssl
