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

#include "support.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <set>

#include "elevssl/errors.hpp"
#include "elevssl/exp_cli.hpp"

using namespace elevssl;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void make_data(const fs::path& dir, std::int64_t n = 48) {
  SynthConfig cfg;
  cfg.n_tiles = n;
  cfg.seed = 7;
  cfg.pure_fraction = 0.5;
  cfg.tile_shape = {40, 40};
  cfg.elev_shape = {14, 14};
  generate_synthetic(cfg, dir);
}

json small_experiment(const std::string& task = "classification") {
  return {{"data_dir", "data"},
          {"task", task},
          {"methods", task == "classification" ? json{"random", "simclr_elev"} : json{"random", "glcnet_elev"}},
          {"budgets", {4, 8}},
          {"seeds", {0, 1}},
          {"split", {{"eval_pool", 16}, {"finetune_size", 8}, {"seed", 0}}},
          {"pretrain",
           {{"epochs", 1}, {"batch_size", 8}, {"encoder", "tiny"}, {"proj_hidden", 16}, {"proj_out", 8},
            {"local", {{"patch", 8}}}}},
          {"finetune", {{"probe_epochs", 1}, {"full_epochs", 1}, {"batch_size", 4}}},
          {"out_dir", "out"}};
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream(p) << j.dump(2);
}

int run_cli(const std::string& args, const fs::path& cwd) {
  const std::string cmd = "cd '" + cwd.string() + "' && '" ELEVSSL_CLI_PATH "' " + args + " >out.txt 2>err.txt";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("experiment config validation") {
  auto base = small_experiment();
  auto c = experiment_config_from_json(base, "/cfg");
  CHECK(c.data_dir == fs::path("/cfg/data"));
  CHECK(c.out_dir == fs::path("/cfg/out"));
  CHECK(c.finetune.task == Task::classification);
  CHECK(c.finetune.encoder.value() == EncoderSpec::tiny());
  CHECK(experiment_config_from_json(experiment_config_to_json(c)).methods == c.methods);

  auto field_of = [](json j) {
    try {
      experiment_config_from_json(j, "/cfg");
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("<none>");
  };
  auto j = base;
  j["budgets"] = {4, 16};
  CHECK(field_of(j) == "budgets");
  j["budgets"] = {8, 4};
  CHECK(field_of(j) == "budgets");
  j = base;
  j["methods"] = {"glcnet_elev"};
  CHECK(field_of(j) == "methods");
  j = base;
  j["bogus"] = 1;
  CHECK(field_of(j) == "bogus");
  j = base;
  j.erase("task");
  CHECK(field_of(j) == "task");
  j = base;
  j["split"]["finetune_size"] = 16;
  CHECK(field_of(j) == "split.finetune_size");
  j = base;
  j["pretrain"]["alpha"] = 3.0;
  CHECK(field_of(j) != "<none>");

  // data_dir and out_dir do not change the hash.
  auto moved = base;
  moved["out_dir"] = "elsewhere";
  CHECK(config_hash(experiment_config_from_json(moved, "/x")) == config_hash(c));
  moved["seeds"] = {0};
  CHECK(config_hash(experiment_config_from_json(moved, "/x")) != config_hash(c));
}

TEST_CASE("budget nesting holds for every seed") {
  std::vector<std::string> pool;
  for (int i = 0; i < 64; ++i) pool.push_back("t" + std::to_string(i));
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::vector<std::string> prev;
    for (std::int64_t b : {8, 16, 32, 64}) {
      auto ids = budget_ids(pool, b, seed);
      CHECK(ids.size() == static_cast<std::size_t>(b));
      CHECK(std::set<std::string>(ids.begin(), ids.end()).size() == ids.size());
      CHECK(std::equal(prev.begin(), prev.end(), ids.begin()));
      prev = ids;
    }
  }
  CHECK(budget_ids(pool, 8, 1) != budget_ids(pool, 8, 2));
  CHECK_THROWS_AS(budget_ids(pool, 65, 0), ArgumentError);
}

TEST_CASE("results file") {
  testing::TempDir dir;
  ResultRow r;
  r.method = "random";
  r.budget = 8;
  r.seed = 1;
  r.metrics.macro_f1 = 0.5;
  r.label_ids = {"a", "b"};
  r.config_hash = "h";
  append_result(r, dir / "results.jsonl");
  r.seed = 2;
  append_result(r, dir / "results.jsonl");
  {
    std::ofstream torn(dir / "results.jsonl", std::ios::app);
    torn << R"({"task":"classification","meth)";
  }
  auto rows = read_results(dir / "results.jsonl");
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].seed == 2);
  CHECK((rows[0].label_ids == std::vector<std::string>{"a", "b"}));
  CHECK(read_results(dir / "missing.jsonl").empty());
}

TEST_CASE("summary and plot") {
  std::vector<ResultRow> rows;
  for (std::string m : {"random", "simclr_elev"})
    for (std::int64_t b : {8, 16, 32})
      for (std::uint64_t s : {0, 1}) {
        ResultRow r;
        r.method = m;
        r.budget = b;
        r.seed = s;
        r.metrics.macro_f1 = 0.1 * static_cast<double>(b) / 8 + 0.05 * static_cast<double>(s);
        rows.push_back(r);
      }
  auto summary = summarize(rows, Task::classification);
  REQUIRE(summary.size() == 6);
  CHECK(summary[0].n_seeds == 2);
  CHECK(summary[0].mean == doctest::Approx(0.125));
  CHECK(summary[0].min == doctest::Approx(0.1));
  CHECK(summary[0].max == doctest::Approx(0.15));
  const auto svg = render_svg(summary, "macro-F1");
  std::size_t lines = 0;
  for (auto p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++lines;
  CHECK(lines == 2);

  testing::TempDir dir;
  CHECK_THROWS_AS(cmd_plot(dir.path(), dir.path()), ConfigError);
  for (const auto& r : rows) append_result(r, dir / "results.jsonl");
  cmd_plot(dir.path(), dir.path());
  std::ifstream csv(dir / "summary.csv");
  std::string line;
  int n = 0;
  while (std::getline(csv, line)) ++n;
  CHECK(n == 7);  // header + methods x budgets

  SUBCASE("single seed collapses the band") {
    std::vector<ResultRow> one(rows.begin(), rows.begin() + 1);
    auto s = summarize(one, Task::classification);
    CHECK(s[0].min == s[0].max);
  }
}

TEST_CASE("ablation: 8 rows, nesting, idempotent resume") {
  use_single_thread();
  testing::TempDir dir;
  make_data(dir / "data");
  write_json(dir / "cfg.json", small_experiment());
  auto c = load_experiment_config(dir / "cfg.json");
  cmd_ablate(c);
  auto rows = read_results(c.out_dir / "results.jsonl");
  REQUIRE(rows.size() == 8);
  std::set<std::tuple<std::string, std::int64_t, std::uint64_t>> cells;
  for (const auto& r : rows) cells.insert({r.method, r.budget, r.seed});
  CHECK(cells.size() == 8);
  for (const auto& small : rows)
    for (const auto& big : rows)
      if (small.seed == big.seed && small.method == big.method && small.budget < big.budget)
        for (const auto& id : small.label_ids)
          CHECK(std::find(big.label_ids.begin(), big.label_ids.end(), id) != big.label_ids.end());
  CHECK(fs::exists(c.out_dir / "plot.svg"));
  CHECK(fs::exists(c.out_dir / "summary.csv"));

  const auto before = testing::read_bytes(c.out_dir / "results.jsonl");
  cmd_ablate(c);
  CHECK(testing::read_bytes(c.out_dir / "results.jsonl") == before);

  // A missing row is recomputed with the same values.
  std::string trimmed = before.substr(0, before.rfind('\n', before.size() - 2) + 1);
  std::ofstream(c.out_dir / "results.jsonl", std::ios::trunc) << trimmed;
  cmd_ablate(c);
  auto again = read_results(c.out_dir / "results.jsonl");
  REQUIRE(again.size() == 8);
  CHECK(to_json(again.back().metrics) == to_json(rows.back().metrics));

  SUBCASE("a changed config refuses the old results") {
    auto j = small_experiment();
    j["pretrain"]["epochs"] = 2;
    write_json(dir / "cfg2.json", j);
    CHECK_THROWS_AS(cmd_ablate(load_experiment_config(dir / "cfg2.json")), ConfigError);
  }
}

TEST_CASE("stage commands and the CLI") {
  testing::TempDir dir;
  CHECK(run_cli("synth --tiles 24 --seed 7 --coupling 0.9 --pure-fraction 0.5 --tile-size 40 --elev-size 14 --out data",
                dir.path()) == 0);
  CHECK(load_manifest(dir / "data/manifest.jsonl").entries.size() == 24);

  auto j = small_experiment("segmentation");
  j["split"] = {{"eval_pool", 12}, {"finetune_size", 6}, {"seed", 0}};
  j["budgets"] = {6};
  write_json(dir / "cfg.json", j);
  CHECK(run_cli("pretrain --config cfg.json --method glcnet_elev --out ckpt", dir.path()) == 0);
  CHECK(fs::exists(dir / "ckpt/checkpoint.ckpt"));
  CHECK(fs::exists(dir / "ckpt/train_log.jsonl"));
  CHECK(run_cli("finetune --config cfg.json --checkpoint ckpt/checkpoint.ckpt --out ft", dir.path()) == 0);
  CHECK(run_cli("evaluate --model ft/model.ckpt --data data --split ft/split.json --subset test "
                "--checkpoint ckpt/checkpoint.ckpt --out report.json",
                dir.path()) == 0);
  std::ifstream in(dir / "report.json");
  auto report = eval_report_from_json(json::parse(in));
  CHECK(report.n_units == 6 * 40 * 40);
  CHECK(report.provenance.contains("config_hash"));

  SUBCASE("architecture mismatch is refused") {
    auto other = j;
    other["pretrain"]["encoder"] = {{"stage_widths", {4, 8, 16, 32}}, {"blocks_per_stage", {1, 1, 1, 1}}};
    write_json(dir / "cfg_other.json", other);
    CHECK(run_cli("pretrain --config cfg_other.json --method glcnet_elev --out ckpt2", dir.path()) == 0);
    CHECK(run_cli("evaluate --model ft/model.ckpt --data data --split ft/split.json --checkpoint ckpt2/checkpoint.ckpt",
                  dir.path()) == 1);
  }
  SUBCASE("bad config exits 2 with a field") {
    auto bad = j;
    bad["budgets"] = {100};
    write_json(dir / "bad.json", bad);
    CHECK(run_cli("ablate --config bad.json", dir.path()) == 2);
    auto err = json::parse(testing::read_bytes(dir / "err.txt"));
    CHECK(err["error"] == "config");
    CHECK(err["field"] == "budgets");
  }
  SUBCASE("plot on empty results exits 2") {
    fs::create_directories(dir / "empty");
    CHECK(run_cli("plot --results empty", dir.path()) == 2);
  }
}

TEST_CASE("shipped configs validate") {
  int n = 0;
  for (const auto& e : fs::directory_iterator(ELEVSSL_CONFIG_DIR)) {
    if (e.path().extension() != ".json") continue;
    CAPTURE(e.path().string());
    auto c = load_experiment_config(e.path());
    CHECK(c.seeds.size() >= 2);
    ++n;
  }
  CHECK(n >= 3);
}
