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
#include <utility>
#include <vector>

#include <json.hpp>

#include "elevssl/core_data_types.hpp"
#include "elevssl/rng.hpp"

namespace elevssl {

struct CropBox {
  std::int64_t top = 0;
  std::int64_t left = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;
  bool operator==(const CropBox&) const = default;
};

/// Multiplicative brightness/contrast/saturation factors and an additive hue
/// shift (fraction of a full turn). Identity is (1, 1, 1, 0).
struct ColorJitter {
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
  double hue = 0.0;
  bool operator==(const ColorJitter&) const = default;
  bool is_identity() const { return brightness == 1.0 && contrast == 1.0 && saturation == 1.0 && hue == 0.0; }
};

/// Fully resolved augmentation for one view. Applying it is a deterministic
/// function of (image, spec).
struct AugSpec {
  CropBox crop;
  bool hflip = false;
  bool vflip = false;
  ColorJitter jitter;
  bool grayscale = false;
  Shape2 out_size;
  bool operator==(const AugSpec&) const = default;
};

AugSpec identity_spec(const Shape2& source);

/// Sampling ranges for one view.
struct ViewPolicy {
  bool crop = true;
  std::pair<double, double> crop_scale{0.2, 1.0};   // fraction of source area
  std::pair<double, double> crop_ratio{3.0 / 4.0, 4.0 / 3.0};  // width / height, sampled log-uniform
  std::int64_t min_crop = 8;
  double p_hflip = 0.5;
  double p_vflip = 0.5;
  double p_jitter = 0.8;
  double brightness = 0.4;
  double contrast = 0.4;
  double saturation = 0.4;
  double hue = 0.1;
  double p_grayscale = 0.2;

  /// Draws nothing random: full crop, no flips, no jitter, no grayscale.
  static ViewPolicy none();
};

/// Policies for the two contrastive views (x-hat, x-tilde) and the
/// elevation view (x-bar). The elevation view does not crop by default.
struct AugPolicy {
  ViewPolicy contrast;
  ViewPolicy elevation = [] {
    ViewPolicy p;
    p.crop = false;
    return p;
  }();

  static AugPolicy none();
};

nlohmann::json view_policy_to_json(const ViewPolicy& p);
ViewPolicy view_policy_from_json(const nlohmann::json& j);
nlohmann::json aug_policy_to_json(const AugPolicy& p);
AugPolicy aug_policy_from_json(const nlohmann::json& j);

/// Pure draw: the generator is built from `rng`; the caller derives a new
/// state for the next draw. Output size equals the source size.
AugSpec sample_aug_spec(const Shape2& source, const ViewPolicy& policy, RngState rng);

/// crop -> bilinear resize -> hflip -> vflip -> color jitter -> grayscale,
/// clipped to [0,1].
torch::Tensor apply_spec(const torch::Tensor& image, const AugSpec& spec);

/// Geometric part of `spec` (crop scaled into elevation coordinates, flips)
/// applied to a collocated elevation raster; output keeps the raster shape.
torch::Tensor apply_spec_to_elevation(const torch::Tensor& elev, const AugSpec& spec, const Shape2& source);

struct ViewTriple {
  torch::Tensor view_contrast_a;  // [3,H,W]
  torch::Tensor view_contrast_b;
  torch::Tensor view_elev;
  AugSpec spec_a;
  AugSpec spec_b;
  AugSpec spec_e;
  torch::Tensor elev_target;  // [He,We], normalized
};

ViewTriple make_view_triple(const TileSample& sample, const AugPolicy& policy, RngState rng,
                            const ElevationStats& stats);

struct Cell {
  std::int64_t row = 0;
  std::int64_t col = 0;
  bool operator==(const Cell&) const = default;
};

/// Matched region centers in the feature maps of two views. `extent_*` is the
/// pooling window side in feature cells covering `patch` source pixels.
struct RegionPair {
  Cell center_a;
  Cell center_b;
  std::int64_t patch = 0;
  std::int64_t extent_a = 1;
  std::int64_t extent_b = 1;
};

/// Samples `n_regions` source points uniformly inside the crop overlap (with
/// a half-patch margin) and maps each into both views' feature grids.
/// Throws OverlapTooSmall if the overlap is smaller than patch x patch.
std::vector<RegionPair> matched_regions(const AugSpec& spec_a, const AugSpec& spec_b, int n_regions,
                                        std::int64_t patch, const Shape2& feat_shape, RngState rng);

/// Source-pixel position of the center of feature cell `cell` under `spec`.
std::pair<double, double> feature_cell_to_source(const AugSpec& spec, const Cell& cell, const Shape2& feat_shape);

/// Horizontal / vertical flip of the last two dims.
torch::Tensor hflip(const torch::Tensor& t);
torch::Tensor vflip(const torch::Tensor& t);

}  // namespace elevssl
