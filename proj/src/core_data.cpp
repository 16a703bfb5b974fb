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

#include "elevssl/core_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "elevssl/errors.hpp"
#include "elevssl/hash.hpp"
#include "elevssl/resample.hpp"
#include "elevssl/rng.hpp"

namespace elevssl {
namespace fs = std::filesystem;
using nlohmann::json;

std::optional<std::size_t> DatasetManifest::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].id == id) return i;
  return std::nullopt;
}

const ManifestEntry& DatasetManifest::entry(const std::string& id) const {
  auto idx = index_of(id);
  if (!idx) throw ArgumentError("unknown tile id: " + id);
  return entries[*idx];
}

std::vector<std::string> DatasetManifest::ids() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.id);
  return out;
}

namespace {

Shape2 shape_from_json(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 2)
    throw ValidationError(std::string("manifest header: '") + key + "' must be a 2-element array");
  return {j[key][0].get<std::int64_t>(), j[key][1].get<std::int64_t>()};
}

std::unordered_map<std::string, std::size_t> index_map(const DatasetManifest& m) {
  std::unordered_map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < m.entries.size(); ++i) idx.emplace(m.entries[i].id, i);
  return idx;
}

// Canonically ordered, de-duplicated manifest positions for `ids`.
std::vector<std::size_t> positions(const DatasetManifest& m, std::span<const std::string> ids) {
  const auto idx = index_map(m);
  std::vector<std::size_t> pos;
  pos.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = idx.find(id);
    if (it == idx.end()) throw ArgumentError("unknown tile id: " + id);
    pos.push_back(it->second);
  }
  std::sort(pos.begin(), pos.end());
  pos.erase(std::unique(pos.begin(), pos.end()), pos.end());
  return pos;
}

}  // namespace

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  DatasetManifest m;
  m.root = path.parent_path();
  std::string line;
  bool have_header = false;
  std::unordered_set<std::string> seen;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError("manifest " + path.string() + " line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!have_header) {
      m.tile_shape = shape_from_json(j, "tile_shape");
      m.elev_shape = shape_from_json(j, "elev_shape");
      if (j.contains("class_names")) {
        auto names = j["class_names"].get<std::vector<std::string>>();
        if (names.size() != 2) throw ValidationError("manifest header: class_names must list 2 classes");
        m.class_names = {names[0], names[1]};
      }
      m.config_hash = j.value("config_hash", "");
      have_header = true;
      continue;
    }
    ManifestEntry e;
    try {
      e.id = j.at("id").get<std::string>();
      e.rgb_path = j.at("rgb").get<std::string>();
      e.elev_path = j.at("elev").get<std::string>();
      e.mask_path = j.at("mask").get<std::string>();
    } catch (const json::exception& ex) {
      throw ValidationError("manifest line " + std::to_string(lineno) + ": " + ex.what());
    }
    if (!seen.insert(e.id).second) throw ValidationError("duplicate tile id: " + e.id);
    const auto rgb = read_png_shape(m.root / e.rgb_path);
    if (!(rgb == m.tile_shape)) throw ValidationError("tile " + e.id + ": rgb shape does not match tile_shape");
    const auto mask = read_png_shape(m.root / e.mask_path);
    if (!(mask == m.tile_shape)) throw ValidationError("tile " + e.id + ": mask shape does not match tile_shape");
    const auto elev = read_elevation_shape(m.root / e.elev_path);
    if (!(elev == m.elev_shape)) throw ValidationError("tile " + e.id + ": elevation shape does not match elev_shape");
    m.entries.push_back(std::move(e));
  }
  if (!have_header) throw ValidationError("manifest " + path.string() + " has no header record");
  return m;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + path.string());
  json header = {{"tile_shape", {manifest.tile_shape.height, manifest.tile_shape.width}},
                 {"elev_shape", {manifest.elev_shape.height, manifest.elev_shape.width}},
                 {"class_names", manifest.class_names}};
  if (!manifest.config_hash.empty()) header["config_hash"] = manifest.config_hash;
  out << header.dump() << '\n';
  for (const auto& e : manifest.entries) {
    out << json{{"id", e.id}, {"rgb", e.rgb_path}, {"elev", e.elev_path}, {"mask", e.mask_path}}.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

TileSample load_tile(const DatasetManifest& manifest, const std::string& id) {
  const auto& e = manifest.entry(id);
  TileSample t;
  t.id = id;
  t.rgb = read_rgb_png(manifest.root / e.rgb_path);
  t.elevation = read_elevation(manifest.root / e.elev_path);
  t.mask = read_mask_png(manifest.root / e.mask_path);
  const auto lo = t.mask.min().item<int>();
  const auto hi = t.mask.max().item<int>();
  if (lo == hi) t.label = lo;
  if (t.rgb.size(1) != manifest.tile_shape.height || t.rgb.size(2) != manifest.tile_shape.width ||
      t.elevation.size(0) != manifest.elev_shape.height || t.elevation.size(1) != manifest.elev_shape.width)
    throw ValidationError("tile " + id + ": shape does not match manifest");
  return t;
}

std::vector<TileSample> load_tiles(const DatasetManifest& manifest, std::span<const std::string> ids) {
  std::vector<TileSample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(load_tile(manifest, id));
  return out;
}

SplitAssignment split_dataset(const DatasetManifest& manifest, std::size_t eval_pool, std::size_t finetune_size,
                              std::uint64_t seed, std::optional<std::span<const std::string>> eligible) {
  std::vector<std::size_t> candidates;
  if (eligible) {
    candidates = positions(manifest, *eligible);
  } else {
    candidates.resize(manifest.entries.size());
    std::iota(candidates.begin(), candidates.end(), std::size_t{0});
  }
  if (finetune_size >= eval_pool)
    throw ArgumentError("split_dataset: finetune_size must be smaller than eval_pool");
  if (eval_pool > candidates.size())
    throw ArgumentError("split_dataset: eval_pool (" + std::to_string(eval_pool) + ") exceeds the " +
                        std::to_string(candidates.size()) + " candidate tiles");

  const RngState base = seed_state(seed);
  Rng draw(base.derive(1));
  for (std::size_t i = 0; i < eval_pool; ++i) {
    const auto j = static_cast<std::size_t>(draw.uniform_int(static_cast<std::int64_t>(i),
                                                             static_cast<std::int64_t>(candidates.size()) - 1));
    std::swap(candidates[i], candidates[j]);
  }
  std::vector<std::size_t> pool(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(eval_pool));
  std::sort(pool.begin(), pool.end());
  Rng order(base.derive(2));
  order.shuffle(std::span<std::size_t>(pool));

  SplitAssignment s;
  s.seed = seed;
  std::vector<bool> in_pool(manifest.entries.size(), false);
  for (std::size_t k = 0; k < pool.size(); ++k) {
    in_pool[pool[k]] = true;
    if (k < finetune_size) s.finetune_ids.push_back(manifest.entries[pool[k]].id);
  }
  std::vector<std::size_t> test(pool.begin() + static_cast<std::ptrdiff_t>(finetune_size), pool.end());
  std::sort(test.begin(), test.end());
  for (auto p : test) s.test_ids.push_back(manifest.entries[p].id);
  for (std::size_t i = 0; i < manifest.entries.size(); ++i)
    if (!in_pool[i]) s.pretrain_ids.push_back(manifest.entries[i].id);
  return s;
}

json split_to_json(const SplitAssignment& split) {
  return {{"seed", split.seed}, {"pretrain", split.pretrain_ids}, {"finetune", split.finetune_ids}, {"test", split.test_ids}};
}

SplitAssignment split_from_json(const json& j) {
  SplitAssignment s;
  try {
    s.seed = j.at("seed").get<std::uint64_t>();
    s.pretrain_ids = j.at("pretrain").get<std::vector<std::string>>();
    s.finetune_ids = j.at("finetune").get<std::vector<std::string>>();
    s.test_ids = j.at("test").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("split file: ") + e.what());
  }
  return s;
}

void save_split(const SplitAssignment& split, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write split: " + path.string());
  out << split_to_json(split).dump() << '\n';
}

SplitAssignment load_split(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open split: " + path.string());
  try {
    return split_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ValidationError("split file " + path.string() + ": " + e.what());
  }
}

std::vector<std::pair<std::string, int>> derive_classification_set(const DatasetManifest& manifest,
                                                                   std::span<const std::string> ids) {
  std::vector<std::pair<std::string, int>> out;
  for (auto p : positions(manifest, ids)) {
    const auto& e = manifest.entries[p];
    const auto mask = read_mask_png(manifest.root / e.mask_path);
    const auto lo = mask.min().item<int>();
    if (lo == mask.max().item<int>()) out.emplace_back(e.id, lo);
  }
  return out;
}

ElevationStats compute_elevation_stats(std::span<const TileSample> tiles) {
  if (tiles.empty()) throw ArgumentError("compute_elevation_stats: empty id set");
  double sum = 0.0;
  std::int64_t count = 0;
  for (const auto& t : tiles) {
    auto e = t.elevation.to(torch::kFloat64).contiguous();
    const double* p = e.data_ptr<double>();
    for (std::int64_t i = 0; i < e.numel(); ++i) sum += p[i];
    count += e.numel();
  }
  const double mean = sum / static_cast<double>(count);
  double ss = 0.0;
  for (const auto& t : tiles) {
    auto e = t.elevation.to(torch::kFloat64).contiguous();
    const double* p = e.data_ptr<double>();
    for (std::int64_t i = 0; i < e.numel(); ++i) ss += (p[i] - mean) * (p[i] - mean);
  }
  const double sd = std::sqrt(ss / static_cast<double>(count));
  return {mean, std::max(sd, kElevationStdFloor)};
}

ElevationStats compute_elevation_stats(const DatasetManifest& manifest, std::span<const std::string> ids) {
  if (ids.empty()) throw ArgumentError("compute_elevation_stats: empty id set");
  std::vector<TileSample> tiles;
  tiles.reserve(ids.size());
  for (auto p : positions(manifest, ids)) {
    TileSample t;
    t.id = manifest.entries[p].id;
    t.elevation = read_elevation(manifest.root / manifest.entries[p].elev_path);
    tiles.push_back(std::move(t));
  }
  return compute_elevation_stats(tiles);
}

torch::Tensor normalize_elevation(const torch::Tensor& elev, const ElevationStats& stats) {
  if (!(stats.std > 0.0)) throw ArgumentError("normalize_elevation: std must be positive");
  return ((elev.to(torch::kFloat64) - stats.mean) / stats.std).to(elev.scalar_type());
}

torch::Tensor denormalize_elevation(const torch::Tensor& elev, const ElevationStats& stats) {
  if (!(stats.std > 0.0)) throw ArgumentError("denormalize_elevation: std must be positive");
  return (elev.to(torch::kFloat64) * stats.std + stats.mean).to(elev.scalar_type());
}

json synth_config_to_json(const SynthConfig& c) {
  return {{"n_tiles", c.n_tiles},
          {"seed", c.seed},
          {"coupling", c.coupling},
          {"bump_count", c.bump_count},
          {"elev_range", {c.elev_range.first, c.elev_range.second}},
          {"label_noise", c.label_noise},
          {"pure_fraction", c.pure_fraction},
          {"tile_shape", {c.tile_shape.height, c.tile_shape.width}},
          {"elev_shape", {c.elev_shape.height, c.elev_shape.width}}};
}

namespace {

// Class 0 = other (forest / non-agricultural), class 1 = farmland.
constexpr float kBaseColor[2][3] = {{0.30f, 0.42f, 0.26f}, {0.40f, 0.46f, 0.30f}};
constexpr double kTextureSigma = 0.06;

// Sum of radial Gaussian bumps on the elevation grid, min-max rescaled into
// [lo, hi].
torch::Tensor terrain(Rng& rng, int bumps, const Shape2& shape, double lo, double hi) {
  auto e = torch::zeros({shape.height, shape.width}, torch::kFloat64);
  double* p = e.data_ptr<double>();
  for (int b = 0; b < bumps; ++b) {
    const double cy = rng.uniform(-0.1, 1.1);
    const double cx = rng.uniform(-0.1, 1.1);
    const double sigma = rng.uniform(0.12, 0.35);
    const double amp = rng.uniform(0.4, 1.0);
    for (std::int64_t i = 0; i < shape.height; ++i) {
      const double y = (static_cast<double>(i) + 0.5) / static_cast<double>(shape.height);
      for (std::int64_t j = 0; j < shape.width; ++j) {
        const double x = (static_cast<double>(j) + 0.5) / static_cast<double>(shape.width);
        const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        p[i * shape.width + j] += amp * std::exp(-d2 / (2.0 * sigma * sigma));
      }
    }
  }
  const double mn = e.min().item<double>();
  const double mx = e.max().item<double>();
  if (mx - mn <= 0.0) return torch::full_like(e, lo).to(torch::kFloat32);
  return (lo + (e - mn) / (mx - mn) * (hi - lo)).to(torch::kFloat32);
}

float median_of(const torch::Tensor& t) {
  auto flat = t.contiguous();
  std::vector<float> v(flat.data_ptr<float>(), flat.data_ptr<float>() + flat.numel());
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace

DatasetManifest generate_synthetic(const SynthConfig& cfg, const fs::path& out_dir) {
  if (cfg.n_tiles < 1) throw ArgumentError("synth: n_tiles must be >= 1");
  if (cfg.coupling < 0.0 || cfg.coupling > 1.0) throw ArgumentError("synth: coupling must be in [0,1]");
  if (cfg.label_noise < 0.0 || cfg.label_noise > 1.0) throw ArgumentError("synth: label_noise must be in [0,1]");
  if (cfg.pure_fraction < 0.0 || cfg.pure_fraction > 1.0) throw ArgumentError("synth: pure_fraction must be in [0,1]");
  if (cfg.bump_count < 0) throw ArgumentError("synth: bump_count must be >= 0");
  if (!(cfg.elev_range.second > cfg.elev_range.first)) throw ArgumentError("synth: elev_range must be increasing");

  std::error_code ec;
  fs::create_directories(out_dir / "tiles", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "tiles").string() + ": " + ec.message());

  const RngState base = seed_state(cfg.seed);
  const auto n = static_cast<std::size_t>(cfg.n_tiles);
  std::vector<bool> pure(n, false);
  {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng pick(base.derive(2));
    pick.shuffle(std::span<std::size_t>(order));
    const auto n_pure = static_cast<std::size_t>(std::llround(cfg.pure_fraction * static_cast<double>(n)));
    for (std::size_t k = 0; k < n_pure; ++k) pure[order[k]] = true;
  }

  const double lo = cfg.elev_range.first, hi = cfg.elev_range.second, mid = 0.5 * (lo + hi);
  const double decouple = (1.0 - cfg.coupling) / 2.0;
  const auto H = cfg.tile_shape.height, W = cfg.tile_shape.width;

  DatasetManifest m;
  m.root = out_dir;
  m.tile_shape = cfg.tile_shape;
  m.elev_shape = cfg.elev_shape;
  m.config_hash = json_hash(synth_config_to_json(cfg));

  for (std::size_t t = 0; t < n; ++t) {
    Rng rng(base.derive({1, t}));
    torch::Tensor elev;
    auto truth = torch::empty({H, W}, torch::kUInt8);
    auto annot = torch::empty({H, W}, torch::kUInt8);
    std::uint8_t* tp = truth.data_ptr<std::uint8_t>();
    std::uint8_t* ap = annot.data_ptr<std::uint8_t>();

    if (pure[t]) {
      // Pure tiles: farmland sits in the lower half of the elevation range.
      const int terrain_class = rng.bernoulli(0.5) ? 1 : 0;
      elev = terrain(rng, cfg.bump_count, cfg.elev_shape, terrain_class == 1 ? lo : mid, terrain_class == 1 ? mid : hi);
      const int shown = rng.bernoulli(decouple) ? 1 - terrain_class : terrain_class;
      const int label = rng.bernoulli(cfg.label_noise) ? 1 - shown : shown;
      std::fill(tp, tp + H * W, static_cast<std::uint8_t>(shown));
      std::fill(ap, ap + H * W, static_cast<std::uint8_t>(label));
    } else {
      elev = terrain(rng, cfg.bump_count, cfg.elev_shape, lo, hi);
    }
    const auto up = resize_bilinear(elev, H, W).contiguous();
    const float* upp = up.data_ptr<float>();
    if (!pure[t]) {
      const float med = median_of(up);
      for (std::int64_t i = 0; i < H * W; ++i) {
        std::uint8_t c = upp[i] < med ? 1 : 0;
        if (rng.bernoulli(decouple)) c = 1 - c;
        tp[i] = c;
        ap[i] = rng.bernoulli(cfg.label_noise) ? 1 - c : c;
      }
    }

    auto rgb = torch::empty({3, H, W}, torch::kFloat32);
    float* rp = rgb.data_ptr<float>();
    for (std::int64_t i = 0; i < H * W; ++i) {
      const double height01 = (upp[i] - lo) / (hi - lo);
      const double shade = 0.75 + 0.5 * height01;
      for (int c = 0; c < 3; ++c) {
        const double v = kBaseColor[tp[i]][c] * shade + kTextureSigma * rng.normal();
        rp[c * H * W + i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }

    char name[32];
    std::snprintf(name, sizeof name, "tile_%05zu", t);
    ManifestEntry e{name, std::string("tiles/") + name + "_rgb.png", std::string("tiles/") + name + "_elev.bin",
                    std::string("tiles/") + name + "_mask.png"};
    write_rgb_png(out_dir / e.rgb_path, rgb);
    write_elevation(out_dir / e.elev_path, elev);
    write_mask_png(out_dir / e.mask_path, annot);
    m.entries.push_back(std::move(e));
  }

  write_manifest(m, out_dir / "manifest.jsonl");
  {
    std::ofstream cfg_out(out_dir / "synth_config.json", std::ios::trunc);
    cfg_out << synth_config_to_json(cfg).dump(2) << '\n';
  }
  return m;
}

}  // namespace elevssl
