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

namespace elevssl {

/// Real-valued source window in pixel-edge coordinates: pixel k spans
/// [k, k+1). An integer window equals an ordinary crop.
struct Region {
  double top = 0.0;
  double left = 0.0;
  double height = 0.0;
  double width = 0.0;
};

/// Bilinear resample of `region` of `src` ([C,H,W] or [H,W], float32) to
/// out_h x out_w. Sample positions use the cell-center convention (no corner
/// alignment) and are clamped to the centers of the outermost pixels inside
/// the region, so an integer region behaves exactly like crop-then-resize.
/// A full-image region at the source size returns the input values exactly.
torch::Tensor resample_region(const torch::Tensor& src, const Region& region, std::int64_t out_h, std::int64_t out_w);

inline torch::Tensor resize_bilinear(const torch::Tensor& src, std::int64_t out_h, std::int64_t out_w) {
  const auto h = src.size(src.dim() - 2);
  const auto w = src.size(src.dim() - 1);
  return resample_region(src, {0.0, 0.0, static_cast<double>(h), static_cast<double>(w)}, out_h, out_w);
}

}  // namespace elevssl
