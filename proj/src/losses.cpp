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

#include "elevssl/losses.hpp"

#include <limits>

#include "elevssl/errors.hpp"

namespace elevssl {
using nlohmann::json;

void validate(const LossWeights& w) {
  if (!(w.tau > 0.0)) throw ArgumentError("tau must be positive");
  if (w.alpha < 0.0 || w.alpha > 1.0) throw ArgumentError("alpha must lie in [0,1]");
  if (w.lam < 0.0 || w.lam > 1.0) throw ArgumentError("lambda must lie in [0,1]");
}

json to_json(const LossBreakdown& b) {
  json j = {{"total", b.total}, {"contrastive", b.contrastive}, {"elevation", b.elevation}};
  j["global_part"] = b.global_part ? json(*b.global_part) : json(nullptr);
  j["local_part"] = b.local_part ? json(*b.local_part) : json(nullptr);
  return j;
}

torch::Tensor nt_xent(const torch::Tensor& za, const torch::Tensor& zb, double tau) {
  if (za.dim() != 2 || za.sizes() != zb.sizes()) throw ArgumentError("nt_xent: za and zb must both be [N,D]");
  const auto n = za.size(0);
  if (n < 2) throw ArgumentError("nt_xent: need N >= 2 so that negatives exist");
  if (!(tau > 0.0)) throw ArgumentError("nt_xent: tau must be positive");
  const auto z = torch::cat({za, zb}, 0);
  const auto norms = z.norm(2, 1);
  if (norms.min().item<double>() == 0.0) throw ArgumentError("nt_xent: zero-norm embedding");
  const auto zn = z / norms.clamp_min(1e-12).unsqueeze(1);
  auto sim = zn.mm(zn.t()) / tau;
  const auto self = torch::eye(2 * n, torch::TensorOptions().dtype(torch::kBool));
  sim = sim.masked_fill(self, -std::numeric_limits<double>::infinity());
  const auto idx = torch::arange(2 * n, torch::kLong);
  const auto pos = torch::cat({idx.slice(0, n, 2 * n), idx.slice(0, 0, n)});
  const auto positive = sim.gather(1, pos.unsqueeze(1)).squeeze(1);
  return (torch::logsumexp(sim, 1) - positive).mean();
}

torch::Tensor elevation_loss(const torch::Tensor& pred_in, const torch::Tensor& target_in, ElevationLossMode mode) {
  auto squeeze = [](const torch::Tensor& t) { return t.dim() == 4 && t.size(1) == 1 ? t.squeeze(1) : t; };
  const auto pred = squeeze(pred_in);
  const auto target = squeeze(target_in);
  if (pred.dim() != 3 || pred.sizes() != target.sizes())
    throw ArgumentError("elevation_loss: pred and target must both be [N,He,We]");
  if (pred.size(0) < 1) throw ArgumentError("elevation_loss: empty batch");
  const auto eq5 = (pred - target).pow(2).sum({1, 2}).mean();
  if (mode == ElevationLossMode::eq5) return eq5;
  return eq5 / static_cast<double>(pred.size(1) * pred.size(2));
}

torch::Tensor local_matching_loss(const torch::Tensor& feats_a, const torch::Tensor& feats_b,
                                  std::span<const std::vector<RegionPair>> pairs, ProjectionHead& head, double tau) {
  if (feats_a.dim() != 4 || feats_a.sizes() != feats_b.sizes())
    throw ArgumentError("local_matching_loss: feature maps must both be [N,C,h,w]");
  if (static_cast<std::int64_t>(pairs.size()) != feats_a.size(0))
    throw ArgumentError("local_matching_loss: one pair list per sample is required");
  std::vector<torch::Tensor> pa, pb;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].empty()) continue;
    pa.push_back(pool_regions(feats_a[static_cast<std::int64_t>(i)], pairs[i], true));
    pb.push_back(pool_regions(feats_b[static_cast<std::int64_t>(i)], pairs[i], false));
  }
  if (pa.empty()) throw ArgumentError("local_matching_loss: empty pair list");
  return nt_xent(head->forward(torch::cat(pa, 0)), head->forward(torch::cat(pb, 0)), tau);
}

torch::Tensor glcnet_combine(const torch::Tensor& global_part, const torch::Tensor& local_part, double lam) {
  if (lam < 0.0 || lam > 1.0) throw ArgumentError("lambda must lie in [0,1]");
  if (lam == 1.0) return global_part;
  if (lam == 0.0) return local_part;
  return lam * global_part + (1.0 - lam) * local_part;
}

WeightedLoss glcnet_loss(const torch::Tensor& global_a, const torch::Tensor& global_b, const LocalTerms& local,
                         const LossWeights& w) {
  validate(w);
  WeightedLoss out;
  torch::Tensor lg, ll;
  if (w.lam > 0.0) {
    lg = nt_xent(global_a, global_b, w.tau);
    out.breakdown.global_part = lg.item<double>();
  }
  if (w.lam < 1.0) {
    auto head = local.head;
    ll = local_matching_loss(local.feats_a, local.feats_b, local.pairs, head, w.tau);
    out.breakdown.local_part = ll.item<double>();
  }
  out.value = glcnet_combine(lg, ll, w.lam);
  out.breakdown.contrastive = out.value.item<double>();
  out.breakdown.total = out.breakdown.contrastive;
  return out;
}

torch::Tensor combined_loss(const torch::Tensor& contrastive, const torch::Tensor& elevation, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw ArgumentError("alpha must lie in [0,1]");
  if (alpha == 1.0) return elevation;
  if (alpha == 0.0) return contrastive;
  return alpha * elevation + (1.0 - alpha) * contrastive;
}

double combined_loss(double contrastive, double elevation, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw ArgumentError("alpha must lie in [0,1]");
  if (alpha == 1.0) return elevation;
  if (alpha == 0.0) return contrastive;
  return alpha * elevation + (1.0 - alpha) * contrastive;
}

}  // namespace elevssl
