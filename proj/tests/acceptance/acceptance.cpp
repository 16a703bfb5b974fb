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

// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Usage: acceptance [--work DIR] [--keep] [criterion ...]

#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "elevssl/augment.hpp"
#include "elevssl/core_data.hpp"
#include "elevssl/errors.hpp"
#include "elevssl/eval_metrics.hpp"
#include "elevssl/exp_cli.hpp"
#include "elevssl/losses.hpp"
#include "elevssl/model_zoo.hpp"
#include "elevssl/raster_io.hpp"
#include "elevssl/train_engines.hpp"

using namespace elevssl;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  // Records a sub-check; the criterion passes only if every one does.
  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back(std::string(ok ? "" : "FAILED ") + what);
  }
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------- 1

Outcome c1_nt_xent() {
  Outcome o;
  const auto t0 = Clock::now();
  torch::manual_seed(101);
  int cases = 0;
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::int64_t n = std::array<std::int64_t, 3>{2, 4, 8}[k % 3];
    const std::int64_t d = (k / 3) % 2 ? 16 : 3;
    const double tau = 0.1 + 0.9 * (k % 7) / 6.0;
    auto za = torch::randn({n, d}, torch::kDouble), zb = torch::randn({n, d}, torch::kDouble);
    const double got = nt_xent(za, zb, tau).item<double>();
    const double ref = testing::nt_xent_oracle(testing::to_matrix(za), testing::to_matrix(zb), tau);
    worst = std::max(worst, std::abs(got - ref) / std::abs(ref));
    ++cases;
  }
  o.require(cases == 100 && worst <= 1e-6, "100 random cases, worst rel err " + std::to_string(worst));

  double worst_const = 0.0;
  for (std::int64_t n : {2, 4, 8}) {
    auto z = torch::ones({n, 16}, torch::kDouble);
    worst_const = std::max(worst_const, std::abs(nt_xent(z, z, 0.5).item<double>() - std::log(2.0 * n - 1)));
  }
  o.require(worst_const <= 1e-9, "constant embeddings give ln(2N-1), err " + std::to_string(worst_const));
  const double secs = seconds_since(t0);
  o.require(secs < 10.0, "runtime " + fmt(secs, 2) + " s < 10 s");
  return o;
}

// ---------------------------------------------------------------- 2

std::vector<TileSample> synth_tiles(const fs::path& dir, std::int64_t n, Shape2 tile, Shape2 elev,
                                    std::uint64_t seed = 1, double pure = 0.0) {
  SynthConfig cfg;
  cfg.n_tiles = n;
  cfg.seed = seed;
  cfg.pure_fraction = pure;
  cfg.tile_shape = tile;
  cfg.elev_shape = elev;
  auto m = generate_synthetic(cfg, dir);
  return load_tiles(m, m.ids());
}

PretrainConfig tiny_config(Method m) {
  PretrainConfig c;
  c.method = m;
  c.epochs = 1;
  c.batch_size = 4;
  c.encoder = EncoderSpec::tiny();
  c.proj_hidden = 16;
  c.proj_out = 8;
  c.seed = 3;
  c.local.patch = 8;
  return c;
}

PretrainBatch to_double(PretrainBatch b) {
  b.view_a = b.view_a.to(torch::kDouble);
  b.view_b = b.view_b.to(torch::kDouble);
  b.view_e = b.view_e.to(torch::kDouble);
  b.elev_target = b.elev_target.to(torch::kDouble);
  return b;
}

Outcome c2_gradients(const fs::path& work) {
  Outcome o;
  const auto t0 = Clock::now();
  // At 32x32 the last stage is 1x1 and batch norm sees 4 values per channel;
  // the loss is then too curved for a 1e-5 step. 64x64 keeps it resolvable.
  const Shape2 tile{64, 64}, elev{21, 21};
  const auto tiles = synth_tiles(work / "c2_data", 4, tile, elev);
  const std::vector<std::size_t> idx{0, 1, 2, 3};
  const ElevationStats stats = compute_elevation_stats(tiles);

  struct Case {
    std::string name;
    Method method;
    ElevationLossMode mode = ElevationLossMode::per_pixel;
  };
  const std::vector<Case> cases{
      {"nt_xent (SimCLR objective)", Method::simclr},
      {"elevation_loss per_pixel", Method::elevation, ElevationLossMode::per_pixel},
      {"elevation_loss eq5", Method::elevation, ElevationLossMode::eq5},
      {"glcnet_loss lambda=0.5", Method::glcnet},
      {"combined_loss SimCLR+Elev alpha=0.5", Method::simclr_elev},
      {"combined_loss GLCNet+Elev alpha=0.5", Method::glcnet_elev},
  };
  for (const auto& cs : cases) {
    auto cfg = tiny_config(cs.method);
    cfg.elevation_mode = cs.mode;
    const auto batch = to_double(build_pretrain_batch(tiles, idx, 0, cfg, stats));
    PretrainNet net(cs.method, cfg.encoder, elev, cfg.proj_hidden, cfg.proj_out, cfg.seed);
    net->to(torch::kDouble);
    net->train();
    auto loss = [&] { return pretrain_objective(net, batch, cfg).value; };
    const auto r = testing::grad_check(net->parameters(), loss, 200, 11);
    o.require(r.checked >= 200 && r.failed == 0,
              cs.name + ": " + std::to_string(r.checked - r.failed) + "/" + std::to_string(r.checked) +
                  " within 1e-3 (worst rel " + fmt(r.worst, 6) + ")");
  }
  const double secs = seconds_since(t0);
  o.require(secs < 120.0, "runtime " + fmt(secs, 1) + " s < 120 s");
  return o;
}

// ---------------------------------------------------------------- 3

bool same_tensors(torch::nn::Module& a, torch::nn::Module& b) {
  const auto ta = module_tensors(a), tb = module_tensors(b);
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i)
    if (ta[i].first != tb[i].first || !torch::equal(ta[i].second, tb[i].second)) return false;
  return true;
}

Outcome c3_boundaries(const fs::path& work) {
  Outcome o;
  const auto tiles = synth_tiles(work / "c3_data", 8, {48, 48}, {16, 16});
  auto trained = [&](Method m, double alpha) {
    auto c = tiny_config(m);
    c.epochs = 2;
    c.weights.alpha = alpha;
    return pretrain(c, tiles).checkpoint.encoder;
  };
  auto elev = trained(Method::elevation, 0.5), simclr = trained(Method::simclr, 0.5),
       glcnet = trained(Method::glcnet, 0.5);
  auto se1 = trained(Method::simclr_elev, 1.0), se0 = trained(Method::simclr_elev, 0.0);
  auto ge1 = trained(Method::glcnet_elev, 1.0), ge0 = trained(Method::glcnet_elev, 0.0);
  auto se_half = trained(Method::simclr_elev, 0.5);
  o.require(same_tensors(*se1, *elev), "SimCLR+Elev alpha=1 encoder == Elevation encoder");
  o.require(same_tensors(*ge1, *elev), "GLCNet+Elev alpha=1 encoder == Elevation encoder");
  o.require(same_tensors(*se0, *simclr), "SimCLR+Elev alpha=0 encoder == SimCLR encoder");
  o.require(same_tensors(*ge0, *glcnet), "GLCNet+Elev alpha=0 encoder == GLCNet encoder");
  o.require(!same_tensors(*se_half, *simclr), "alpha=0.5 differs from SimCLR (the check has teeth)");

  // lambda in {0, 1} selects one GLCNet term exactly.
  torch::manual_seed(5);
  const Shape2 src{64, 64}, feat{16, 16};
  const auto id = identity_spec(src);
  std::vector<std::vector<RegionPair>> pairs;
  for (int i = 0; i < 4; ++i) pairs.push_back(matched_regions(id, id, 4, 8, feat, seed_state(i)));
  ProjectionHead head(ProjectionHeadSpec{8, 8, 4});
  auto ga = torch::randn({4, 16}), gb = torch::randn({4, 16});
  auto fa = torch::randn({4, 8, 16, 16}), fb = torch::randn({4, 8, 16, 16});
  const LocalTerms local{fa, fb, pairs, head};
  LossWeights w;
  w.lam = 1.0;
  const auto g1 = glcnet_loss(ga, gb, local, w);
  o.require(torch::equal(g1.value, nt_xent(ga, gb, w.tau)), "lambda=1 equals the global NT-Xent term exactly");
  w.lam = 0.0;
  const auto g0 = glcnet_loss(ga, gb, local, w);
  o.require(torch::equal(g0.value, local_matching_loss(fa, fb, pairs, head, w.tau)),
            "lambda=0 equals the local matching term exactly");
  return o;
}

// ---------------------------------------------------------------- 4

std::string shape_of(const torch::Tensor& t) {
  std::ostringstream os;
  os << t.sizes();
  return os.str();
}

Outcome c4_shapes() {
  Outcome o;
  torch::NoGradGuard ng;
  const auto x = torch::rand({1, 3, 100, 100});
  for (const auto& [name, spec] : {std::pair{"default", EncoderSpec::resnet18()}, std::pair{"tiny", EncoderSpec::tiny()}}) {
    Encoder enc(spec);
    UNetDecoder dec(elevation_decoder_spec(spec, {33, 33}));
    enc->eval();
    dec->eval();
    const auto e = decode_elevation(dec, encode(enc, x));
    o.require(e.sizes() == torch::IntArrayRef{1, 1, 33, 33}, std::string(name) + " elevation " + shape_of(e));
    TaskModel seg(Task::segmentation, spec, Shape2{100, 100});
    seg->eval();
    const auto s = seg->forward(x);
    o.require(s.sizes() == torch::IntArrayRef{1, 2, 100, 100}, std::string(name) + " segmentation " + shape_of(s));
  }
  return o;
}

// ---------------------------------------------------------------- 5

ConfusionMatrix cm_of(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
  ConfusionMatrix cm;
  cm.counts = {{{a, b}, {c, d}}};
  return cm;
}

Outcome c5_metrics() {
  Outcome o;
  const auto r = metrics_from_cm(cm_of(50, 10, 5, 35));
  // Hand computation: IoU0 = 50/65, IoU1 = 35/50, F1_0 = 100/115, F1_1 = 70/85.
  const double f1 = 0.5 * (100.0 / 115.0 + 70.0 / 85.0), miou = 0.5 * (50.0 / 65.0 + 35.0 / 50.0);
  o.require(std::abs(r.accuracy - 0.85) <= 1e-4, "accuracy " + fmt(r.accuracy, 5));
  o.require(std::abs(r.macro_f1 - 0.84655) <= 1e-4 && std::abs(r.macro_f1 - f1) <= 1e-12,
            "macro-F1 " + fmt(r.macro_f1, 5));
  o.require(std::abs(r.miou - 0.73462) <= 1e-4 && std::abs(r.miou - miou) <= 1e-12, "MIoU " + fmt(r.miou, 5));

  std::mt19937_64 rng(23);
  std::uniform_int_distribution<std::int64_t> d(0, 200);
  double worst = 0.0;
  int n = 0;
  while (n < 1000) {
    const auto cm = cm_of(d(rng), d(rng), d(rng), d(rng));
    if (cm.total() == 0) continue;
    const auto m = metrics_from_cm(cm);
    for (int c = 0; c < 2; ++c)
      worst = std::max(worst, std::abs(m.iou_per_class[c] - m.f1_per_class[c] / (2.0 - m.f1_per_class[c])));
    ++n;
  }
  o.require(worst <= 1e-9, "IoU = F1/(2-F1) over 1000 matrices, max err " + std::to_string(worst));
  return o;
}

// ---------------------------------------------------------------- 6, 7, 8

const fs::path& data512(const fs::path& work) {
  static const fs::path dir = [&] {
    const auto d = work / "data512";
    if (!fs::exists(d / "manifest.jsonl")) {
      SynthConfig cfg;
      cfg.n_tiles = 512;
      cfg.seed = 7;
      cfg.coupling = 0.9;
      cfg.pure_fraction = 0.25;
      generate_synthetic(cfg, d);
    }
    return d;
  }();
  return dir;
}

json ordering_config(const std::string& task, const std::string& method, const json& seeds, const std::string& out) {
  return {{"data_dir", "data512"},
          {"task", task},
          {"methods", {"random", method}},
          {"budgets", {32}},
          {"seeds", seeds},
          {"split", {{"eval_pool", 128}, {"finetune_size", 32}, {"seed", 0}}},
          {"pretrain", {{"epochs", 30}, {"batch_size", 32}, {"encoder", "tiny"}, {"proj_hidden", 64}, {"proj_out", 32}}},
          {"finetune", json::object()},
          {"out_dir", out}};
}

std::vector<ResultRow> run_ablation(const fs::path& work, const json& j) {
  data512(work);
  auto c = experiment_config_from_json(j, work);
  cmd_ablate(c);
  return read_results(c.out_dir / "results.jsonl");
}

double task_metric(const ResultRow& r) { return r.task == Task::classification ? r.metrics.macro_f1 : r.metrics.miou; }

// Median over seeds plus the per-seed win count, both required.
void check_ordering(Outcome& o, const std::vector<ResultRow>& rows, const std::string& method, const std::string& label) {
  std::map<std::uint64_t, double> base, ours;
  for (const auto& r : rows) (r.method == kRandomInit ? base : ours)[r.seed] = task_metric(r);
  std::vector<double> vb, vo;
  int wins = 0;
  std::string per_seed;
  for (const auto& [seed, v] : ours) {
    const double b = base.at(seed);
    vb.push_back(b);
    vo.push_back(v);
    wins += v >= b;
    per_seed += " s" + std::to_string(seed) + ":" + fmt(b) + "/" + fmt(v);
  }
  const double mb = median(vb), mo = median(vo);
  o.require(vo.size() == 5 && vb.size() == 5, label + ": 5 seeds per method");
  o.require(mo >= mb, label + ": median " + method + " " + fmt(mo) + " >= random " + fmt(mb));
  o.require(wins >= 4, label + ": " + method + " >= random in " + std::to_string(wins) + "/5 seeds (random/" + method +
                           per_seed + ")");
}

Outcome c6_ordering(const fs::path& work) {
  Outcome o;
  const auto t0 = Clock::now();
  const json seeds = {0, 1, 2, 3, 4};
  check_ordering(o, run_ablation(work, ordering_config("segmentation", "glcnet_elev", seeds, "c6_segmentation")),
                 "glcnet_elev", "segmentation MIoU");
  check_ordering(o, run_ablation(work, ordering_config("classification", "simclr_elev", seeds, "c6_classification")),
                 "simclr_elev", "classification macro-F1");
  // A target, not a gate.
  o.notes.push_back("runtime " + fmt(seconds_since(t0) / 60.0, 1) + " min (target < 30 min)");
  return o;
}

Outcome c7_determinism(const fs::path& work) {
  Outcome o;
  // The seed-0 classification cell of criterion 6, run twice from scratch.
  std::vector<std::vector<ResultRow>> runs;
  for (const std::string out : {"c7_run_a", "c7_run_b"}) {
    fs::remove_all(work / out);
    runs.push_back(run_ablation(work, ordering_config("classification", "simclr_elev", {0}, out)));
  }
  o.require(runs[0].size() == 2 && runs[1].size() == 2, "both runs emit 2 rows");
  for (std::size_t i = 0; i < std::min(runs[0].size(), runs[1].size()); ++i) {
    const auto& a = runs[0][i];
    const auto& b = runs[1][i];
    o.require(a.method == b.method && to_json(a.metrics) == to_json(b.metrics) && a.label_ids == b.label_ids,
              a.method + " metrics identical (macro-F1 " + fmt(a.metrics.macro_f1, 6) + ")");
  }
  auto ckpts = [&](const std::string& out) {
    std::vector<std::string> bytes;
    for (const auto& e : fs::directory_iterator(work / out / "checkpoints"))
      if (e.path().extension() == ".ckpt") bytes.push_back(testing::read_bytes(e.path()));
    return bytes;
  };
  const auto ca = ckpts("c7_run_a"), cb = ckpts("c7_run_b");
  o.require(ca.size() == 1 && ca == cb, "pretrained checkpoints byte-identical");
  return o;
}

Outcome c8_harness(const fs::path& work) {
  Outcome o;
  const auto t0 = Clock::now();
  json j = ordering_config("classification", "simclr_elev", {0, 1}, "c8_ablation");
  j["budgets"] = {8, 16, 32, 64};
  j["split"]["finetune_size"] = 64;
  j["pretrain"]["epochs"] = 5;
  const auto rows = run_ablation(work, j);
  o.require(rows.size() == 16, std::to_string(rows.size()) + " rows");
  std::set<std::tuple<std::string, std::int64_t, std::uint64_t>> cells;
  for (const auto& r : rows) cells.insert({r.method, r.budget, r.seed});
  o.require(cells.size() == 16, "16 distinct (method, budget, seed) cells");

  bool nested = true;
  for (const auto& small : rows)
    for (const auto& big : rows)
      if (small.seed == big.seed && small.method == big.method && small.budget < big.budget) {
        const std::set<std::string> ids(big.label_ids.begin(), big.label_ids.end());
        for (const auto& id : small.label_ids) nested &= ids.contains(id);
      }
  o.require(nested, "smaller budgets are subsets of larger ones per seed");

  std::ifstream in(work / "c8_ablation" / "plot.svg");
  const std::string svg((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::regex line_re(R"re(<polyline class="mean" data-method="([^"]+)"[^>]*points="([^"]*)")re");
  std::map<std::string, int> points;
  int lines = 0;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), line_re); it != std::sregex_iterator(); ++it) {
    ++lines;
    std::istringstream ps((*it)[2].str());
    std::string pt;
    int n = 0;
    while (ps >> pt) ++n;
    points[(*it)[1].str()] = n;
  }
  o.require(lines == 2 && points.size() == 2, std::to_string(lines) + " mean polylines for 2 methods");
  for (const auto& [m, n] : points) o.require(n == 4, m + " polyline has " + std::to_string(n) + " points");
  const double mins = seconds_since(t0) / 60.0;
  o.require(mins < 45.0, "runtime " + fmt(mins, 1) + " min < 45 min");
  return o;
}

// ---------------------------------------------------------------- 9

Outcome c9_pipeline(const fs::path& work) {
  Outcome o;
  // Raster round trip, including values that do not survive text formats.
  torch::manual_seed(9);
  auto elev = torch::randn({33, 33}) * 1e3;
  elev[0][0] = -0.0f;
  elev[0][1] = std::numeric_limits<float>::denorm_min();
  elev[0][2] = std::numeric_limits<float>::max();
  elev[0][3] = std::nextafter(1.0f, 2.0f);
  const auto raster = work / "c9_elev.bin";
  write_elevation(raster, elev);
  const auto back = read_elevation(raster);
  const bool bits = back.sizes() == elev.sizes() &&
                    std::memcmp(back.contiguous().data_ptr(), elev.contiguous().data_ptr(), elev.numel() * 4) == 0;
  o.require(bits, "elevation raster round trip is bit exact");

  // 200-tile manifest: derivation checked against every mask.
  SynthConfig cfg;
  cfg.n_tiles = 200;
  cfg.seed = 3;
  cfg.pure_fraction = 0.25;
  const auto dir = work / "c9_data";
  const auto m = generate_synthetic(cfg, dir);
  const auto ids = m.ids();
  const auto derived = derive_classification_set(m, ids);
  std::map<std::string, int> got(derived.begin(), derived.end());
  int expected = 0, mismatches = 0;
  for (const auto& id : ids) {
    const auto mask = read_mask_png(m.root / m.entry(id).mask_path);
    const auto lo = mask.min().item<int>(), hi = mask.max().item<int>();
    const bool constant = lo == hi;
    expected += constant;
    const auto it = got.find(id);
    if (constant != (it != got.end()) || (constant && it->second != lo)) ++mismatches;
  }
  o.require(mismatches == 0 && static_cast<int>(derived.size()) == expected,
            std::to_string(derived.size()) + " derived tiles, " + std::to_string(expected) +
                " constant masks, mismatches " + std::to_string(mismatches));

  // Corrupt one elevation raster's shape.
  const auto& victim = m.entries[17];
  write_elevation(m.root / victim.elev_path, torch::zeros({32, 33}));
  bool caught = false;
  std::string msg;
  try {
    load_manifest(dir / "manifest.jsonl");
  } catch (const ValidationError& e) {
    msg = e.what();
    caught = msg.find(victim.id) != std::string::npos;
  }
  o.require(caught, "corrupted 32x33 raster rejected naming " + victim.id);
  return o;
}

struct Criterion {
  int number;
  std::string title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  fs::path work = "acceptance_work";
  bool keep = false;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc)
      work = argv[++i];
    else if (a == "--keep")
      keep = true;
    else
      only.insert(std::stoi(a));
  }
  if (!keep) fs::remove_all(work);
  fs::create_directories(work);
  work = fs::absolute(work);
  use_single_thread();

  const std::vector<Criterion> criteria{
      {1, "NT-Xent oracle equivalence", c1_nt_xent},
      {2, "gradient checks", [&] { return c2_gradients(work); }},
      {3, "boundary reductions", [&] { return c3_boundaries(work); }},
      {4, "shape contracts", c4_shapes},
      {5, "metric correctness", c5_metrics},
      {6, "synthetic ordering experiment", [&] { return c6_ordering(work); }},
      {7, "determinism", [&] { return c7_determinism(work); }},
      {8, "ablation harness", [&] { return c8_harness(work); }},
      {9, "data pipeline round trips", [&] { return c9_pipeline(work); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.contains(c.number)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.number << "] " << c.title << " (" << fmt(seconds_since(t0), 1)
              << " s)\n";
    for (const auto& n : o.notes) std::cout << "       " << n << "\n";
    std::cout.flush();
  }
  std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criterion(s) failed" : "acceptance: all passed")
            << std::endl;
  return failed ? 1 : 0;
}
