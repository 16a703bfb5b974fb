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

#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "elevssl/augment.hpp"
#include "elevssl/model_zoo.hpp"

namespace elevssl {

struct LossWeights {
  double tau = 0.5;    // temperature
  double alpha = 0.5;  // elevation vs. contrastive
  double lam = 0.5;    // global vs. local (GLCNet)
};

void validate(const LossWeights& w);

/// Scalar values of one step's objective and its parts.
struct LossBreakdown {
  double total = 0.0;
  double contrastive = 0.0;
  double elevation = 0.0;
  std::optional<double> global_part;
  std::optional<double> local_part;
};

nlohmann::json to_json(const LossBreakdown& b);

/// NT-Xent over 2N embeddings. For each anchor the denominator holds its
/// positive and the 2(N-1) negatives; the result is the mean over all 2N
/// anchors. za, zb: [N,D], N >= 2, no zero rows.
torch::Tensor nt_xent(const torch::Tensor& za, const torch::Tensor& zb, double tau);

enum class ElevationLossMode {
  eq5,        // sum of squared errors per image, averaged over the batch
  per_pixel,  // eq5 divided by He*We
};

/// pred, target: [N,He,We] (a singleton channel dim is squeezed).
torch::Tensor elevation_loss(const torch::Tensor& pred, const torch::Tensor& target,
                             ElevationLossMode mode = ElevationLossMode::per_pixel);

/// Pools every matched region from both views' local features, projects the
/// pooled vectors with `head`, and applies NT-Xent over the M regions of the
/// batch (matched regions are positives, all other regions negatives).
/// pairs[i] belongs to sample i of feats_a / feats_b ([N,C,h,w]).
torch::Tensor local_matching_loss(const torch::Tensor& feats_a, const torch::Tensor& feats_b,
                                  std::span<const std::vector<RegionPair>> pairs, ProjectionHead& head, double tau);

/// lam * L_G + (1 - lam) * L_L. A term whose weight is exactly zero is not
/// used and may be left undefined.
torch::Tensor glcnet_combine(const torch::Tensor& global_part, const torch::Tensor& local_part, double lam);

/// Inputs of the local matching term.
struct LocalTerms {
  torch::Tensor feats_a;
  torch::Tensor feats_b;
  std::span<const std::vector<RegionPair>> pairs;
  ProjectionHead head{nullptr};
};

struct WeightedLoss {
  torch::Tensor value;
  LossBreakdown breakdown;
};

/// GLCNet objective: L_G = NT-Xent over the projected style features
/// (global_a, global_b: [N,D]), L_L = local_matching_loss, combined with
/// w.lam. A term with zero weight is skipped. breakdown.contrastive is L_C.
WeightedLoss glcnet_loss(const torch::Tensor& global_a, const torch::Tensor& global_b, const LocalTerms& local,
                         const LossWeights& w);

/// alpha * L_E + (1 - alpha) * L_C, alpha in [0,1]. As above, a zero-weight
/// term may be undefined.
torch::Tensor combined_loss(const torch::Tensor& contrastive, const torch::Tensor& elevation, double alpha);
double combined_loss(double contrastive, double elevation, double alpha);

}  // namespace elevssl
