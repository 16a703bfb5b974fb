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

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace elevssl {

struct Shape2 {
  std::int64_t height = 0;
  std::int64_t width = 0;
  bool operator==(const Shape2&) const = default;
};

/// One geo-tile. rgb is float32 [3,H,W] in [0,1], elevation float32 [He,We]
/// in meters, mask uint8 [H,W] in {0,1} (1 = farmland). label is set only for
/// pure tiles and then equals every mask entry.
struct TileSample {
  std::string id;
  torch::Tensor rgb;
  torch::Tensor elevation;
  torch::Tensor mask;
  std::optional<int> label;
};

struct ManifestEntry {
  std::string id;
  std::string rgb_path;   // relative to the manifest root
  std::string elev_path;
  std::string mask_path;
};

struct DatasetManifest {
  std::filesystem::path root;
  Shape2 tile_shape{100, 100};
  Shape2 elev_shape{33, 33};
  std::array<std::string, 2> class_names{"other", "farmland"};
  std::string config_hash;  // empty for hand-written manifests
  std::vector<ManifestEntry> entries;

  /// Position of `id` in canonical order, or nullopt.
  std::optional<std::size_t> index_of(const std::string& id) const;
  const ManifestEntry& entry(const std::string& id) const;
  std::vector<std::string> ids() const;
};

struct SplitAssignment {
  std::vector<std::string> pretrain_ids;
  std::vector<std::string> finetune_ids;  // in seeded-shuffle order
  std::vector<std::string> test_ids;
  std::uint64_t seed = 0;
};

struct ElevationStats {
  double mean = 0.0;
  double std = 1.0;
};

inline constexpr double kElevationStdFloor = 1e-6;

struct SynthConfig {
  std::int64_t n_tiles = 64;
  std::uint64_t seed = 0;
  double coupling = 0.9;
  int bump_count = 6;
  std::pair<double, double> elev_range{0.0, 500.0};
  double label_noise = 0.0;
  /// Fraction of tiles generated with a single class over the whole tile
  /// (the source of the classification track). 0 keeps every tile mixed.
  double pure_fraction = 0.0;
  Shape2 tile_shape{100, 100};
  Shape2 elev_shape{33, 33};
};

}  // namespace elevssl
