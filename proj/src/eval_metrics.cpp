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

#include "elevssl/eval_metrics.hpp"

#include <fstream>

#include "elevssl/errors.hpp"

namespace elevssl {
using nlohmann::json;

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t p = 0; p < 2; ++p) counts[t][p] += other.counts[t][p];
  return *this;
}

ConfusionMatrix accumulate(ConfusionMatrix cm, std::span<const std::int64_t> truth, std::span<const std::int64_t> pred) {
  if (truth.size() != pred.size()) throw ArgumentError("accumulate: truth and pred differ in length");
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = truth[i], p = pred[i];
    if ((t != 0 && t != 1) || (p != 0 && p != 1)) throw ArgumentError("accumulate: class values must be 0 or 1");
    ++cm.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  return cm;
}

ConfusionMatrix accumulate(ConfusionMatrix cm, const torch::Tensor& truth, const torch::Tensor& pred) {
  if (truth.numel() != pred.numel()) throw ArgumentError("accumulate: truth and pred differ in length");
  const auto t = truth.reshape({-1}).to(torch::kLong).contiguous();
  const auto p = pred.reshape({-1}).to(torch::kLong).contiguous();
  const auto n = static_cast<std::size_t>(t.numel());
  return accumulate(cm, std::span<const std::int64_t>(t.data_ptr<std::int64_t>(), n),
                    std::span<const std::int64_t>(p.data_ptr<std::int64_t>(), n));
}

EvalReport metrics_from_cm(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total < 1) throw ArgumentError("metrics_from_cm: empty confusion matrix");
  auto ratio = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
  EvalReport r;
  r.confusion = cm;
  r.n_units = total;
  r.accuracy = static_cast<double>(cm.counts[0][0] + cm.counts[1][1]) / static_cast<double>(total);
  for (std::size_t c = 0; c < 2; ++c) {
    const auto tp = static_cast<double>(cm.counts[c][c]);
    const auto row = static_cast<double>(cm.counts[c][0] + cm.counts[c][1]);
    const auto col = static_cast<double>(cm.counts[0][c] + cm.counts[1][c]);
    const double precision = ratio(tp, col);
    const double recall = ratio(tp, row);
    r.f1_per_class[c] = ratio(2.0 * precision * recall, precision + recall);
    r.iou_per_class[c] = ratio(tp, row + col - tp);
  }
  r.macro_f1 = 0.5 * (r.f1_per_class[0] + r.f1_per_class[1]);
  r.miou = 0.5 * (r.iou_per_class[0] + r.iou_per_class[1]);
  return r;
}

json to_json(const EvalReport& r) {
  return {{"accuracy", r.accuracy},
          {"f1_per_class", r.f1_per_class},
          {"macro_f1", r.macro_f1},
          {"iou_per_class", r.iou_per_class},
          {"miou", r.miou},
          {"confusion", r.confusion.counts},
          {"n_units", r.n_units},
          {"units", r.units},
          {"provenance", r.provenance}};
}

EvalReport eval_report_from_json(const json& j) {
  try {
    EvalReport r;
    r.accuracy = j.at("accuracy").get<double>();
    r.f1_per_class = j.at("f1_per_class").get<std::array<double, 2>>();
    r.macro_f1 = j.at("macro_f1").get<double>();
    r.iou_per_class = j.at("iou_per_class").get<std::array<double, 2>>();
    r.miou = j.at("miou").get<double>();
    r.confusion.counts = j.at("confusion").get<std::array<std::array<std::int64_t, 2>, 2>>();
    r.n_units = j.at("n_units").get<std::int64_t>();
    r.units = j.value("units", "");
    r.provenance = j.value("provenance", json::object());
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad evaluation report: ") + e.what());
  }
}

void save_report(const EvalReport& r, const std::filesystem::path& path) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write report: " + tmp);
    out << to_json(r).dump(2) << '\n';
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

torch::Tensor predict_classes(const torch::Tensor& logits) {
  // Strict comparison keeps ties on class 0.
  return (logits.select(1, 1) > logits.select(1, 0)).to(torch::kLong);
}

namespace {

void check_model(TaskModel& model, Task task) {
  if (!model) throw ArgumentError("evaluate: no model");
  if (model->task != task) throw ValidationError("evaluate: model was trained for " + to_string(model->task));
}

}  // namespace

EvalReport evaluate_classifier(TaskModel& model, std::span<const TileSample> tiles) {
  check_model(model, Task::classification);
  if (tiles.empty()) throw ArgumentError("evaluate_classifier: empty id list");
  for (const auto& t : tiles)
    if (!t.label) throw ValidationError("evaluate_classifier: tile " + t.id + " has no image-level label");
  torch::NoGradGuard ng;
  model->eval();
  ConfusionMatrix cm;
  for (const auto& t : tiles) {
    const auto pred = predict_classes(model->forward(t.rgb.unsqueeze(0)));
    const std::int64_t truth = *t.label;
    const std::int64_t p = pred.item<std::int64_t>();
    cm = accumulate(cm, std::span<const std::int64_t>(&truth, 1), std::span<const std::int64_t>(&p, 1));
  }
  auto r = metrics_from_cm(cm);
  r.units = "images";
  return r;
}

EvalReport evaluate_segmenter(TaskModel& model, std::span<const TileSample> tiles) {
  check_model(model, Task::segmentation);
  if (tiles.empty()) throw ArgumentError("evaluate_segmenter: empty id list");
  for (const auto& t : tiles)
    if (!t.mask.defined()) throw ValidationError("evaluate_segmenter: tile " + t.id + " has no mask");
  torch::NoGradGuard ng;
  model->eval();
  ConfusionMatrix cm;
  for (const auto& t : tiles) {
    const auto pred = predict_classes(model->forward(t.rgb.unsqueeze(0)));
    cm = accumulate(cm, t.mask, pred);
  }
  auto r = metrics_from_cm(cm);
  r.units = "pixels (pooled over the test set)";
  return r;
}

EvalReport evaluate(TaskModel& model, std::span<const TileSample> tiles) {
  if (!model) throw ArgumentError("evaluate: no model");
  return model->task == Task::classification ? evaluate_classifier(model, tiles) : evaluate_segmenter(model, tiles);
}

}  // namespace elevssl
