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

#include "elevssl/resample.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "elevssl/errors.hpp"

namespace elevssl {

namespace {

struct Tap {
  std::int64_t i0;
  std::int64_t i1;
  double w;  // weight of i1
};

std::vector<Tap> taps(double start, double extent, std::int64_t out, std::int64_t size) {
  double lo = std::max(0.0, start);
  double hi = std::min(static_cast<double>(size - 1), start + extent - 1.0);
  if (hi < lo) hi = lo;
  std::vector<Tap> t(static_cast<std::size_t>(out));
  const double step = extent / static_cast<double>(out);
  for (std::int64_t i = 0; i < out; ++i) {
    double p = start + (static_cast<double>(i) + 0.5) * step - 0.5;
    p = std::clamp(p, lo, hi);
    const auto i0 = static_cast<std::int64_t>(std::floor(p));
    const auto i1 = std::min(i0 + 1, size - 1);
    t[static_cast<std::size_t>(i)] = {i0, i1, p - static_cast<double>(i0)};
  }
  return t;
}

}  // namespace

torch::Tensor resample_region(const torch::Tensor& src, const Region& region, std::int64_t out_h, std::int64_t out_w) {
  if (src.dim() != 2 && src.dim() != 3) throw ArgumentError("resample_region: expected [C,H,W] or [H,W]");
  if (out_h <= 0 || out_w <= 0) throw ArgumentError("resample_region: output size must be positive");
  if (region.height <= 0.0 || region.width <= 0.0) throw ArgumentError("resample_region: empty region");
  const bool planar = src.dim() == 2;
  auto s = (planar ? src.unsqueeze(0) : src).to(torch::kFloat32).contiguous();
  const auto c = s.size(0), h = s.size(1), w = s.size(2);
  const auto ty = taps(region.top, region.height, out_h, h);
  const auto tx = taps(region.left, region.width, out_w, w);

  auto out = torch::empty({c, out_h, out_w}, torch::kFloat32);
  const float* sp = s.data_ptr<float>();
  float* op = out.data_ptr<float>();
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const float* plane = sp + ch * h * w;
    for (std::int64_t i = 0; i < out_h; ++i) {
      const Tap& a = ty[static_cast<std::size_t>(i)];
      const float* r0 = plane + a.i0 * w;
      const float* r1 = plane + a.i1 * w;
      for (std::int64_t j = 0; j < out_w; ++j) {
        const Tap& b = tx[static_cast<std::size_t>(j)];
        const double top = (1.0 - b.w) * r0[b.i0] + b.w * r0[b.i1];
        const double bot = (1.0 - b.w) * r1[b.i0] + b.w * r1[b.i1];
        op[(ch * out_h + i) * out_w + j] = static_cast<float>((1.0 - a.w) * top + a.w * bot);
      }
    }
  }
  return planar ? out.squeeze(0) : out;
}

}  // namespace elevssl
