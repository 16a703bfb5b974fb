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
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace elevssl {

/// A meta document plus named float32 tensors.
///
/// On disk this is a POSIX ustar archive with fixed timestamps and owners:
/// "meta.json" first, then one raw little-endian float32 blob per tensor
/// under "tensors/<name>". meta.json lists every tensor name with its shape
/// under the "tensors" key, which the writer fills in.
struct Archive {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, torch::Tensor>> tensors;
};

void write_archive(const std::filesystem::path& path, const Archive& archive);
/// Reads and validates every declared shape against the blob sizes.
Archive read_archive(const std::filesystem::path& path);

}  // namespace elevssl
