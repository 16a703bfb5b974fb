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

#include "support.hpp"

#include <random>

#include "elevssl/errors.hpp"
#include "elevssl/eval_metrics.hpp"

using namespace elevssl;

namespace {

ConfusionMatrix cm_of(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
  ConfusionMatrix cm;
  cm.counts = {{{a, b}, {c, d}}};
  return cm;
}

// Model whose classifier always prefers class 0.
TaskModel constant_classifier() {
  TaskModel m(Task::classification, EncoderSpec::tiny(), Shape2{32, 32});
  torch::NoGradGuard ng;
  m->classifier->fc->weight.zero_();
  m->classifier->fc->bias.copy_(torch::tensor({1.0f, 0.0f}));
  m->eval();
  return m;
}

std::vector<TileSample> labeled_tiles(int n_pos, int n_neg) {
  std::vector<TileSample> out;
  for (int i = 0; i < n_pos + n_neg; ++i) {
    TileSample t;
    t.id = std::to_string(i);
    t.rgb = torch::rand({3, 32, 32});
    t.elevation = torch::zeros({8, 8});
    t.label = i < n_pos ? 1 : 0;
    t.mask = torch::full({32, 32}, *t.label, torch::kUInt8);
    out.push_back(t);
  }
  return out;
}

}  // namespace

TEST_CASE("accumulate") {
  const std::vector<std::int64_t> empty;
  CHECK(accumulate(cm_of(1, 2, 3, 4), empty, empty) == cm_of(1, 2, 3, 4));
  const std::vector<std::int64_t> t{1}, p{0};
  CHECK(accumulate(ConfusionMatrix{}, t, p) == cm_of(0, 0, 1, 0));
  const std::vector<std::int64_t> two{1, 0};
  CHECK_THROWS_AS(accumulate(ConfusionMatrix{}, t, two), ArgumentError);
  const std::vector<std::int64_t> bad{2};
  CHECK_THROWS_AS(accumulate(ConfusionMatrix{}, bad, p), ArgumentError);

  SUBCASE("chunked equals one-shot over a 1000-pixel mask") {
    auto truth = torch::randint(0, 2, {1000}, torch::kLong), pred = torch::randint(0, 2, {1000}, torch::kLong);
    auto whole = accumulate(ConfusionMatrix{}, truth, pred);
    ConfusionMatrix chunked;
    for (int s = 0; s < 1000; s += 137)
      chunked = accumulate(chunked, truth.slice(0, s, std::min(s + 137, 1000)), pred.slice(0, s, std::min(s + 137, 1000)));
    CHECK(chunked == whole);
    CHECK(whole.total() == 1000);
    ConfusionMatrix sum = accumulate(ConfusionMatrix{}, truth.slice(0, 500), pred.slice(0, 500));
    sum += accumulate(ConfusionMatrix{}, truth.slice(0, 0, 500), pred.slice(0, 0, 500));
    CHECK(sum == whole);
  }
}

TEST_CASE("metrics_from_cm examples") {
  SUBCASE("perfect") {
    auto r = metrics_from_cm(cm_of(60, 0, 0, 40));
    CHECK(r.accuracy == 1.0);
    CHECK(r.macro_f1 == 1.0);
    CHECK(r.miou == 1.0);
  }
  SUBCASE("[[50,10],[5,35]]") {
    auto r = metrics_from_cm(cm_of(50, 10, 5, 35));
    CHECK(r.accuracy == doctest::Approx(0.85).epsilon(1e-12));
    CHECK(std::abs(r.iou_per_class[0] - 50.0 / 65.0) < 1e-4);
    CHECK(std::abs(r.iou_per_class[1] - 0.70) < 1e-4);
    CHECK(std::abs(r.miou - 0.73462) < 1e-4);
    CHECK(std::abs(r.f1_per_class[0] - 0.86957) < 1e-4);
    CHECK(std::abs(r.f1_per_class[1] - 0.82353) < 1e-4);
    CHECK(std::abs(r.macro_f1 - 0.84655) < 1e-4);
  }
  SUBCASE("class never predicted") {
    auto r = metrics_from_cm(cm_of(10, 0, 5, 0));
    CHECK(r.f1_per_class[1] == 0.0);
    CHECK(r.iou_per_class[1] == 0.0);
    CHECK(std::isfinite(r.macro_f1));
  }
  SUBCASE("empty") { CHECK_THROWS_AS(metrics_from_cm({}), ArgumentError); }
}

TEST_CASE("metric properties over 1000 random matrices") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::int64_t> d(0, 50);
  for (int k = 0; k < 1000; ++k) {
    auto cm = cm_of(d(rng), d(rng), d(rng), d(rng));
    if (cm.total() == 0) continue;
    auto r = metrics_from_cm(cm);
    for (double v : {r.accuracy, r.macro_f1, r.miou, r.f1_per_class[0], r.f1_per_class[1], r.iou_per_class[0],
                     r.iou_per_class[1]}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    for (int c = 0; c < 2; ++c) {
      CHECK(std::abs(r.iou_per_class[c] - r.f1_per_class[c] / (2.0 - r.f1_per_class[c])) <= 1e-9);
      CHECK(r.iou_per_class[c] <= r.f1_per_class[c] + 1e-12);
    }
    // Swapping the class labels permutes the per-class vectors.
    auto s = metrics_from_cm(cm_of(cm.counts[1][1], cm.counts[1][0], cm.counts[0][1], cm.counts[0][0]));
    CHECK(s.accuracy == r.accuracy);
    CHECK(s.f1_per_class[0] == r.f1_per_class[1]);
    CHECK(s.iou_per_class[1] == r.iou_per_class[0]);
    CHECK(s.macro_f1 == r.macro_f1);
    CHECK(s.miou == r.miou);
  }
}

TEST_CASE("report json round trip") {
  testing::TempDir dir;
  auto r = metrics_from_cm(cm_of(7, 3, 2, 9));
  r.n_units = 21;
  r.units = "images";
  r.provenance = {{"config_hash", "x"}};
  save_report(r, dir / "r.json");
  std::ifstream in(dir / "r.json");
  auto back = eval_report_from_json(nlohmann::json::parse(in));
  CHECK(back.confusion == r.confusion);
  CHECK(back.macro_f1 == r.macro_f1);
  CHECK(back.n_units == 21);
  CHECK(back.provenance == r.provenance);
}

TEST_CASE("predict_classes ties go to class 0") {
  auto logits = torch::tensor({{0.5f, 0.5f}, {0.1f, 0.9f}, {2.0f, -1.0f}});
  auto p = predict_classes(logits);
  CHECK(p[0].item<std::int64_t>() == 0);
  CHECK(p[1].item<std::int64_t>() == 1);
  CHECK(p[2].item<std::int64_t>() == 0);
  auto seg = torch::zeros({1, 2, 3, 3});
  CHECK(predict_classes(seg).sum().item<std::int64_t>() == 0);
}

TEST_CASE("evaluate_classifier") {
  torch::manual_seed(0);
  auto m = constant_classifier();
  const auto tiles = labeled_tiles(10, 10);
  auto r = evaluate_classifier(m, tiles);
  CHECK(r.accuracy == 0.5);
  CHECK(r.macro_f1 == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(r.n_units == 20);
  CHECK(to_json(evaluate(m, tiles)) == to_json(r));

  // Chunk invariance.
  std::span<const TileSample> all(tiles);
  auto a = evaluate_classifier(m, all.first(7)), b = evaluate_classifier(m, all.subspan(7));
  auto sum = a.confusion;
  sum += b.confusion;
  CHECK(sum == r.confusion);

  std::vector<TileSample> none;
  CHECK_THROWS_AS(evaluate_classifier(m, none), ArgumentError);
  auto unlabeled = tiles;
  unlabeled[3].label.reset();
  CHECK_THROWS_AS(evaluate_classifier(m, unlabeled), ValidationError);
}

TEST_CASE("evaluate_segmenter counts pixels") {
  torch::manual_seed(1);
  TaskModel m(Task::segmentation, EncoderSpec::tiny(), Shape2{32, 32});
  m->eval();
  const auto tiles = labeled_tiles(2, 1);
  auto r = evaluate_segmenter(m, tiles);
  CHECK(r.n_units == 3 * 32 * 32);
  CHECK(r.confusion.total() == 3 * 32 * 32);
  CHECK(to_json(evaluate_segmenter(m, tiles)) == to_json(r));
  auto c = constant_classifier();
  CHECK_THROWS_AS(evaluate_segmenter(c, tiles), ValidationError);
}
