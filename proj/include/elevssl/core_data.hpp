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

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "elevssl/core_data_types.hpp"
#include "elevssl/raster_io.hpp"

namespace elevssl {

/// Loads a JSON-Lines manifest. Every referenced file must exist and its
/// header must match the declared tile/elevation shape.
DatasetManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

TileSample load_tile(const DatasetManifest& manifest, const std::string& id);
std::vector<TileSample> load_tiles(const DatasetManifest& manifest, std::span<const std::string> ids);

/// Draws `eval_pool` ids uniformly without replacement (from `eligible` when
/// given, else from every entry), shuffles the pool and takes the first
/// `finetune_size` as fine-tune ids; the rest of the pool is the test set.
/// Every id outside the pool is a pretraining id.
SplitAssignment split_dataset(const DatasetManifest& manifest, std::size_t eval_pool,
                              std::size_t finetune_size, std::uint64_t seed,
                              std::optional<std::span<const std::string>> eligible = std::nullopt);

nlohmann::json split_to_json(const SplitAssignment& split);
SplitAssignment split_from_json(const nlohmann::json& j);
void save_split(const SplitAssignment& split, const std::filesystem::path& path);
SplitAssignment load_split(const std::filesystem::path& path);

/// Ids whose mask is constant, labelled with that constant, in manifest order.
std::vector<std::pair<std::string, int>> derive_classification_set(const DatasetManifest& manifest,
                                                                   std::span<const std::string> ids);

/// Population mean/std over every elevation pixel of the given tiles.
ElevationStats compute_elevation_stats(const DatasetManifest& manifest, std::span<const std::string> ids);
ElevationStats compute_elevation_stats(std::span<const TileSample> tiles);

torch::Tensor normalize_elevation(const torch::Tensor& elev, const ElevationStats& stats);
torch::Tensor denormalize_elevation(const torch::Tensor& elev, const ElevationStats& stats);

/// Writes a deterministic synthetic dataset into `out_dir` (manifest.jsonl,
/// synth_config.json and tiles/) and returns the loaded manifest.
DatasetManifest generate_synthetic(const SynthConfig& config, const std::filesystem::path& out_dir);

nlohmann::json synth_config_to_json(const SynthConfig& config);

}  // namespace elevssl
