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

#include "elevssl/augment.hpp"

#include <algorithm>
#include <cmath>

#include "elevssl/core_data.hpp"
#include "elevssl/errors.hpp"
#include "elevssl/resample.hpp"

namespace elevssl {
using nlohmann::json;

AugSpec identity_spec(const Shape2& source) {
  AugSpec s;
  s.crop = {0, 0, source.height, source.width};
  s.out_size = source;
  return s;
}

ViewPolicy ViewPolicy::none() {
  ViewPolicy p;
  p.crop = false;
  p.crop_scale = {1.0, 1.0};
  p.crop_ratio = {1.0, 1.0};
  p.p_hflip = p.p_vflip = p.p_jitter = p.p_grayscale = 0.0;
  p.brightness = p.contrast = p.saturation = p.hue = 0.0;
  return p;
}

AugPolicy AugPolicy::none() { return {ViewPolicy::none(), ViewPolicy::none()}; }

json view_policy_to_json(const ViewPolicy& p) {
  return {{"crop", p.crop},
          {"crop_scale", {p.crop_scale.first, p.crop_scale.second}},
          {"crop_ratio", {p.crop_ratio.first, p.crop_ratio.second}},
          {"min_crop", p.min_crop},
          {"p_hflip", p.p_hflip},
          {"p_vflip", p.p_vflip},
          {"p_jitter", p.p_jitter},
          {"brightness", p.brightness},
          {"contrast", p.contrast},
          {"saturation", p.saturation},
          {"hue", p.hue},
          {"p_grayscale", p.p_grayscale}};
}

ViewPolicy view_policy_from_json(const json& j) {
  ViewPolicy p;
  auto pair = [&](const char* key, std::pair<double, double>& out) {
    if (j.contains(key)) {
      const auto& v = j.at(key);
      if (!v.is_array() || v.size() != 2) throw ConfigError(key, std::string(key) + " must be a 2-element array");
      out = {v[0].get<double>(), v[1].get<double>()};
    }
  };
  p.crop = j.value("crop", p.crop);
  pair("crop_scale", p.crop_scale);
  pair("crop_ratio", p.crop_ratio);
  p.min_crop = j.value("min_crop", p.min_crop);
  p.p_hflip = j.value("p_hflip", p.p_hflip);
  p.p_vflip = j.value("p_vflip", p.p_vflip);
  p.p_jitter = j.value("p_jitter", p.p_jitter);
  p.brightness = j.value("brightness", p.brightness);
  p.contrast = j.value("contrast", p.contrast);
  p.saturation = j.value("saturation", p.saturation);
  p.hue = j.value("hue", p.hue);
  p.p_grayscale = j.value("p_grayscale", p.p_grayscale);
  if (p.crop_scale.first <= 0.0 || p.crop_scale.first > p.crop_scale.second || p.crop_scale.second > 1.0)
    throw ConfigError("crop_scale", "crop_scale must satisfy 0 < lo <= hi <= 1");
  if (p.crop_ratio.first <= 0.0 || p.crop_ratio.first > p.crop_ratio.second)
    throw ConfigError("crop_ratio", "crop_ratio must satisfy 0 < lo <= hi");
  for (double prob : {p.p_hflip, p.p_vflip, p.p_jitter, p.p_grayscale})
    if (prob < 0.0 || prob > 1.0) throw ConfigError("augmentation", "probabilities must lie in [0,1]");
  return p;
}

json aug_policy_to_json(const AugPolicy& p) {
  return {{"contrast", view_policy_to_json(p.contrast)}, {"elevation", view_policy_to_json(p.elevation)}};
}

AugPolicy aug_policy_from_json(const json& j) {
  AugPolicy p;
  if (j.contains("contrast")) p.contrast = view_policy_from_json(j.at("contrast"));
  if (j.contains("elevation")) p.elevation = view_policy_from_json(j.at("elevation"));
  return p;
}

AugSpec sample_aug_spec(const Shape2& source, const ViewPolicy& policy, RngState state) {
  if (source.height < policy.min_crop || source.width < policy.min_crop)
    throw ArgumentError("sample_aug_spec: source smaller than the minimum crop");
  Rng rng(state);
  AugSpec spec = identity_spec(source);
  if (policy.crop) {
    const double area = static_cast<double>(source.height * source.width);
    const double scale = rng.uniform(policy.crop_scale.first, policy.crop_scale.second);
    const double log_ratio = rng.uniform(std::log(policy.crop_ratio.first), std::log(policy.crop_ratio.second));
    const double ratio = std::exp(log_ratio);
    const double target = area * scale;
    auto w = static_cast<std::int64_t>(std::lround(std::sqrt(target * ratio)));
    auto h = static_cast<std::int64_t>(std::lround(std::sqrt(target / ratio)));
    w = std::clamp(w, policy.min_crop, source.width);
    h = std::clamp(h, policy.min_crop, source.height);
    spec.crop.height = h;
    spec.crop.width = w;
    spec.crop.top = rng.uniform_int(0, source.height - h);
    spec.crop.left = rng.uniform_int(0, source.width - w);
  }
  spec.hflip = rng.bernoulli(policy.p_hflip);
  spec.vflip = rng.bernoulli(policy.p_vflip);
  if (rng.bernoulli(policy.p_jitter)) {
    spec.jitter.brightness = rng.uniform(std::max(0.0, 1.0 - policy.brightness), 1.0 + policy.brightness);
    spec.jitter.contrast = rng.uniform(std::max(0.0, 1.0 - policy.contrast), 1.0 + policy.contrast);
    spec.jitter.saturation = rng.uniform(std::max(0.0, 1.0 - policy.saturation), 1.0 + policy.saturation);
    spec.jitter.hue = rng.uniform(-policy.hue, policy.hue);
  }
  spec.grayscale = rng.bernoulli(policy.p_grayscale);
  return spec;
}

torch::Tensor hflip(const torch::Tensor& t) { return t.flip({t.dim() - 1}); }
torch::Tensor vflip(const torch::Tensor& t) { return t.flip({t.dim() - 2}); }

namespace {

void check_crop(const CropBox& c, std::int64_t h, std::int64_t w) {
  if (c.top < 0 || c.left < 0 || c.height <= 0 || c.width <= 0 || c.top + c.height > h || c.left + c.width > w)
    throw ArgumentError("crop box out of bounds");
}

torch::Tensor luma(const torch::Tensor& x) {
  return 0.299f * x[0] + 0.587f * x[1] + 0.114f * x[2];
}

void shift_hue(torch::Tensor& x, double shift) {
  const auto n = x.size(1) * x.size(2);
  float* r = x.data_ptr<float>();
  float* g = r + n;
  float* b = g + n;
  for (std::int64_t i = 0; i < n; ++i) {
    const double R = r[i], G = g[i], B = b[i];
    const double mx = std::max({R, G, B}), mn = std::min({R, G, B});
    const double d = mx - mn;
    double h = 0.0;
    if (d > 0.0) {
      if (mx == R) h = std::fmod((G - B) / d, 6.0);
      else if (mx == G) h = (B - R) / d + 2.0;
      else h = (R - G) / d + 4.0;
      h /= 6.0;
    }
    h += shift;
    h -= std::floor(h);
    const double s = mx > 0.0 ? d / mx : 0.0;
    const double v = mx;
    const double hh = h * 6.0;
    const int sector = static_cast<int>(std::floor(hh)) % 6;
    const double f = hh - std::floor(hh);
    const double p = v * (1.0 - s), q = v * (1.0 - s * f), t = v * (1.0 - s * (1.0 - f));
    double o[3];
    switch (sector) {
      case 0: o[0] = v; o[1] = t; o[2] = p; break;
      case 1: o[0] = q; o[1] = v; o[2] = p; break;
      case 2: o[0] = p; o[1] = v; o[2] = t; break;
      case 3: o[0] = p; o[1] = q; o[2] = v; break;
      case 4: o[0] = t; o[1] = p; o[2] = v; break;
      default: o[0] = v; o[1] = p; o[2] = q; break;
    }
    r[i] = static_cast<float>(o[0]);
    g[i] = static_cast<float>(o[1]);
    b[i] = static_cast<float>(o[2]);
  }
}

}  // namespace

torch::Tensor apply_spec(const torch::Tensor& image, const AugSpec& spec) {
  if (image.dim() != 3 || image.size(0) != 3) throw ArgumentError("apply_spec: image must be [3,H,W]");
  const auto h = image.size(1), w = image.size(2);
  check_crop(spec.crop, h, w);
  torch::Tensor x;
  const bool full = spec.crop == CropBox{0, 0, h, w};
  if (full && spec.out_size == Shape2{h, w}) {
    x = image.to(torch::kFloat32).contiguous().clone();
  } else {
    x = resample_region(image, {static_cast<double>(spec.crop.top), static_cast<double>(spec.crop.left),
                                static_cast<double>(spec.crop.height), static_cast<double>(spec.crop.width)},
                        spec.out_size.height, spec.out_size.width);
  }
  if (spec.hflip) x = hflip(x);
  if (spec.vflip) x = vflip(x);
  const auto& j = spec.jitter;
  if (j.brightness != 1.0) x = (x * j.brightness).clamp(0.0, 1.0);
  if (j.contrast != 1.0) {
    const auto mean = luma(x).mean();
    x = (x * j.contrast + mean * (1.0 - j.contrast)).clamp(0.0, 1.0);
  }
  if (j.saturation != 1.0) x = (x * j.saturation + luma(x).unsqueeze(0) * (1.0 - j.saturation)).clamp(0.0, 1.0);
  if (j.hue != 0.0) {
    x = x.contiguous();
    shift_hue(x, j.hue);
  }
  if (spec.grayscale) x = luma(x).unsqueeze(0).expand({3, -1, -1});
  return x.clamp(0.0, 1.0).contiguous();
}

torch::Tensor apply_spec_to_elevation(const torch::Tensor& elev, const AugSpec& spec, const Shape2& source) {
  if (elev.dim() != 2) throw ArgumentError("apply_spec_to_elevation: elevation must be [He,We]");
  check_crop(spec.crop, source.height, source.width);
  const auto he = elev.size(0), we = elev.size(1);
  torch::Tensor out;
  if (spec.crop == CropBox{0, 0, source.height, source.width}) {
    out = elev.to(torch::kFloat32).contiguous().clone();
  } else {
    const double sy = static_cast<double>(he) / static_cast<double>(source.height);
    const double sx = static_cast<double>(we) / static_cast<double>(source.width);
    out = resample_region(elev, {spec.crop.top * sy, spec.crop.left * sx, spec.crop.height * sy, spec.crop.width * sx},
                          he, we);
  }
  if (spec.hflip) out = hflip(out);
  if (spec.vflip) out = vflip(out);
  return out.contiguous();
}

ViewTriple make_view_triple(const TileSample& sample, const AugPolicy& policy, RngState rng,
                            const ElevationStats& stats) {
  if (!sample.elevation.defined()) throw ArgumentError("make_view_triple: sample has no elevation");
  const Shape2 src{sample.rgb.size(1), sample.rgb.size(2)};
  ViewTriple t;
  t.spec_a = sample_aug_spec(src, policy.contrast, rng.derive(0));
  t.spec_b = sample_aug_spec(src, policy.contrast, rng.derive(1));
  t.spec_e = sample_aug_spec(src, policy.elevation, rng.derive(2));
  t.view_contrast_a = apply_spec(sample.rgb, t.spec_a);
  t.view_contrast_b = apply_spec(sample.rgb, t.spec_b);
  t.view_elev = apply_spec(sample.rgb, t.spec_e);
  t.elev_target = normalize_elevation(apply_spec_to_elevation(sample.elevation, t.spec_e, src), stats);
  return t;
}

namespace {

// Continuous source coordinate -> feature cell under one view's geometry.
std::int64_t to_cell(double src, std::int64_t crop_start, std::int64_t crop_len, std::int64_t out_len, bool flip,
                     std::int64_t feat_len) {
  double v = (src - static_cast<double>(crop_start)) / static_cast<double>(crop_len) * static_cast<double>(out_len);
  if (flip) v = static_cast<double>(out_len) - v;
  const double f = v * static_cast<double>(feat_len) / static_cast<double>(out_len);
  return std::clamp(static_cast<std::int64_t>(std::floor(f)), std::int64_t{0}, feat_len - 1);
}

double to_source(std::int64_t cell, std::int64_t crop_start, std::int64_t crop_len, std::int64_t out_len, bool flip,
                 std::int64_t feat_len) {
  double v = (static_cast<double>(cell) + 0.5) * static_cast<double>(out_len) / static_cast<double>(feat_len);
  if (flip) v = static_cast<double>(out_len) - v;
  return static_cast<double>(crop_start) + v * static_cast<double>(crop_len) / static_cast<double>(out_len);
}

std::int64_t extent_cells(std::int64_t patch, std::int64_t crop_len, std::int64_t feat_len) {
  const double cells = static_cast<double>(patch) * static_cast<double>(feat_len) / static_cast<double>(crop_len);
  return std::clamp<std::int64_t>(std::lround(cells), 1, feat_len);
}

}  // namespace

std::vector<RegionPair> matched_regions(const AugSpec& a, const AugSpec& b, int n_regions, std::int64_t patch,
                                        const Shape2& feat, RngState state) {
  if (n_regions < 1) throw ArgumentError("matched_regions: n_regions must be >= 1");
  if (patch < 1) throw ArgumentError("matched_regions: patch must be >= 1");
  const auto top = std::max(a.crop.top, b.crop.top);
  const auto bottom = std::min(a.crop.top + a.crop.height, b.crop.top + b.crop.height);
  const auto left = std::max(a.crop.left, b.crop.left);
  const auto right = std::min(a.crop.left + a.crop.width, b.crop.left + b.crop.width);
  if (bottom - top < patch || right - left < patch) throw OverlapTooSmall("crop overlap smaller than one patch");

  Rng rng(state);
  const double half = 0.5 * static_cast<double>(patch);
  std::vector<RegionPair> out;
  out.reserve(static_cast<std::size_t>(n_regions));
  for (int k = 0; k < n_regions; ++k) {
    const double sy = rng.uniform(static_cast<double>(top) + half, static_cast<double>(bottom) - half);
    const double sx = rng.uniform(static_cast<double>(left) + half, static_cast<double>(right) - half);
    RegionPair r;
    r.patch = patch;
    r.center_a = {to_cell(sy, a.crop.top, a.crop.height, a.out_size.height, a.vflip, feat.height),
                  to_cell(sx, a.crop.left, a.crop.width, a.out_size.width, a.hflip, feat.width)};
    r.center_b = {to_cell(sy, b.crop.top, b.crop.height, b.out_size.height, b.vflip, feat.height),
                  to_cell(sx, b.crop.left, b.crop.width, b.out_size.width, b.hflip, feat.width)};
    r.extent_a = extent_cells(patch, a.crop.height, feat.height);
    r.extent_b = extent_cells(patch, b.crop.height, feat.height);
    out.push_back(r);
  }
  return out;
}

std::pair<double, double> feature_cell_to_source(const AugSpec& s, const Cell& c, const Shape2& feat) {
  return {to_source(c.row, s.crop.top, s.crop.height, s.out_size.height, s.vflip, feat.height),
          to_source(c.col, s.crop.left, s.crop.width, s.out_size.width, s.hflip, feat.width)};
}

}  // namespace elevssl
