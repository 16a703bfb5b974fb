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

#include <filesystem>

#include "elevssl/core_data_types.hpp"

namespace elevssl {

// Elevation raster: 8-byte header of two little-endian uint32 (height, width)
// followed by height*width little-endian float32 values, row-major.
void write_elevation(const std::filesystem::path& path, const torch::Tensor& elev);
torch::Tensor read_elevation(const std::filesystem::path& path);
Shape2 read_elevation_shape(const std::filesystem::path& path);

// 8-bit RGB PNG. Tensors are float32 [3,H,W] in [0,1]; values are rounded to
// the nearest 1/255 on write.
void write_rgb_png(const std::filesystem::path& path, const torch::Tensor& rgb);
torch::Tensor read_rgb_png(const std::filesystem::path& path);

// 8-bit grayscale mask PNG stored as {0,255}. In memory masks are uint8 [H,W]
// with values {0,1}; loading binarizes at 128.
void write_mask_png(const std::filesystem::path& path, const torch::Tensor& mask);
torch::Tensor read_mask_png(const std::filesystem::path& path);

Shape2 read_png_shape(const std::filesystem::path& path);

}  // namespace elevssl
