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
#include <span>
#include <string>

#include <json.hpp>

#include "elevssl/core_data_types.hpp"
#include "elevssl/model_zoo.hpp"

namespace elevssl {

/// counts[truth][pred].
struct ConfusionMatrix {
  std::array<std::array<std::int64_t, 2>, 2> counts{};

  std::int64_t total() const { return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1]; }
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Adds one count per (truth[i], pred[i]) pair. Values must be 0 or 1.
ConfusionMatrix accumulate(ConfusionMatrix cm, std::span<const std::int64_t> truth, std::span<const std::int64_t> pred);
/// Tensor overload: integer tensors of equal numel, any shape.
ConfusionMatrix accumulate(ConfusionMatrix cm, const torch::Tensor& truth, const torch::Tensor& pred);

struct EvalReport {
  double accuracy = 0.0;
  std::array<double, 2> f1_per_class{};
  double macro_f1 = 0.0;
  std::array<double, 2> iou_per_class{};
  double miou = 0.0;
  ConfusionMatrix confusion;
  std::int64_t n_units = 0;
  /// "images" or "pixels (pooled over the test set)".
  std::string units;
  nlohmann::json provenance = nlohmann::json::object();
};

/// Metrics with the zero-denominator convention (a class metric whose
/// denominator is zero is 0).
EvalReport metrics_from_cm(const ConfusionMatrix& cm);

nlohmann::json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const nlohmann::json& j);
void save_report(const EvalReport& r, const std::filesystem::path& path);

/// Argmax over dim 1; ties go to the lower class index.
torch::Tensor predict_classes(const torch::Tensor& logits);

/// Image-level evaluation; every tile needs a label.
EvalReport evaluate_classifier(TaskModel& model, std::span<const TileSample> tiles);
/// Pixel-level evaluation pooled into one confusion matrix; every tile needs a mask.
EvalReport evaluate_segmenter(TaskModel& model, std::span<const TileSample> tiles);
/// Dispatches on the model's task.
EvalReport evaluate(TaskModel& model, std::span<const TileSample> tiles);

}  // namespace elevssl
