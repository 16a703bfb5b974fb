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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "elevssl/augment.hpp"
#include "elevssl/core_data.hpp"
#include "elevssl/losses.hpp"
#include "elevssl/model_zoo.hpp"

namespace elevssl {

enum class Method { simclr, glcnet, elevation, simclr_elev, glcnet_elev };

std::string to_string(Method m);
Method method_from_string(const std::string& s);
bool uses_elevation(Method m);
bool uses_glcnet(Method m);
bool uses_simclr(Method m);
bool is_contrastive(Method m);

/// Local matching parameters for the GLCNet branch.
struct LocalMatchingConfig {
  int n_regions = 4;
  std::int64_t patch = 16;   // source pixels
  int max_retries = 10;      // spec resamples before falling back to full crops
};

struct PretrainConfig {
  Method method = Method::simclr_elev;
  std::int64_t epochs = 200;
  std::int64_t batch_size = 256;
  double lr0 = 1e-3;
  double weight_decay = 1e-4;
  LossWeights weights;
  std::uint64_t seed = 0;
  AugPolicy aug;
  EncoderSpec encoder;
  ElevationLossMode elevation_mode = ElevationLossMode::per_pixel;
  std::int64_t proj_hidden = 256;
  std::int64_t proj_out = 128;
  LocalMatchingConfig local;
  std::int64_t log_every = 1;
};

nlohmann::json pretrain_config_to_json(const PretrainConfig& c);
/// Missing keys keep their defaults; bad values raise ConfigError.
PretrainConfig pretrain_config_from_json(const nlohmann::json& j);

struct FinetuneConfig {
  Task task = Task::classification;
  std::string init = "random";  // checkpoint path or "random"
  std::int64_t probe_epochs = 20;
  double probe_lr = 1e-3;
  std::int64_t full_epochs = 80;
  double full_lr = 1e-5;
  std::int64_t batch_size = 8;
  std::uint64_t seed = 0;
  double weight_decay = 0.0;
  /// Random joint flips of image and mask during segmentation fine-tuning.
  bool segmentation_flips = true;
  /// Encoder for the random-init baseline. With a checkpoint it must match
  /// the checkpoint's encoder when set.
  std::optional<EncoderSpec> encoder;
};

nlohmann::json finetune_config_to_json(const FinetuneConfig& c);
FinetuneConfig finetune_config_from_json(const nlohmann::json& j);

struct LogRecord {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  double lr = 0.0;
  std::string phase;  // "pretrain", "probe" or "full"
  LossBreakdown loss;
};
using TrainingLog = std::vector<LogRecord>;

nlohmann::json to_json(const LogRecord& r);
void write_log(const TrainingLog& log, const std::filesystem::path& path);
/// Mean total loss of each epoch, in epoch order.
std::vector<double> epoch_means(const TrainingLog& log, const std::string& phase);

/// lr0 * 0.5 * (1 + cos(pi * step / total_steps)), 0 <= step <= total_steps.
double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr0);

/// Every network used during pre-training. Only the heads a method needs are
/// built; the encoder is initialized first from the seed so it is identical
/// across methods.
class PretrainNetImpl : public torch::nn::Module {
 public:
  PretrainNetImpl(Method method, const EncoderSpec& spec, const Shape2& elev_shape, std::int64_t proj_hidden,
                  std::int64_t proj_out, std::uint64_t seed);

  Method method;
  Encoder encoder{nullptr};
  ProjectionHead global_head{nullptr};  // h_p (SimCLR) or h_g (GLCNet style features)
  UNetDecoder local_decoder{nullptr};   // d_l
  ProjectionHead local_head{nullptr};   // h_l
  UNetDecoder elevation_decoder{nullptr};  // d_p
};
TORCH_MODULE(PretrainNet);

/// One batch of augmented views, ready for the objective.
struct PretrainBatch {
  torch::Tensor view_a;       // [N,3,H,W]
  torch::Tensor view_b;
  torch::Tensor view_e;
  torch::Tensor elev_target;  // [N,He,We], normalized
  std::vector<std::vector<RegionPair>> pairs;  // GLCNet methods only
};

/// Builds views for `tiles[indices[i]]`. Each sample's randomness derives
/// from (seed, epoch, index) only.
PretrainBatch build_pretrain_batch(std::span<const TileSample> tiles, std::span<const std::size_t> indices,
                                   std::int64_t epoch, const PretrainConfig& config, const ElevationStats& stats);

/// Method-dispatched objective. Branches whose weight is exactly zero are
/// not evaluated.
WeightedLoss pretrain_objective(PretrainNet& net, const PretrainBatch& batch, const PretrainConfig& config);

struct PretrainResult {
  Checkpoint checkpoint;
  TrainingLog log;
};

/// `tiles` is the pretraining split in canonical order. The last incomplete
/// batch of every epoch is dropped. Throws NonFiniteLoss on NaN/inf.
PretrainResult pretrain(const PretrainConfig& config, std::span<const TileSample> tiles,
                        const std::string& config_hash = "");
PretrainResult pretrain(const PretrainConfig& config, const DatasetManifest& manifest, const SplitAssignment& split,
                        const std::string& config_hash = "");

struct FinetuneResult {
  TaskModel model{nullptr};
  TrainingLog log;
  /// Encoder parameters right after the frozen phase.
  std::vector<torch::Tensor> encoder_after_probe;
};

/// Frozen-encoder phase (encoder parameters and batch-norm statistics
/// untouched) followed by full fine-tuning. `init` nullopt is the
/// random-init baseline. The checkpoint itself is never modified.
FinetuneResult finetune(const FinetuneConfig& config, const std::optional<Checkpoint>& init,
                        std::span<const TileSample> labeled);

/// Pins torch to one intra-op and one inter-op thread.
void use_single_thread();

}  // namespace elevssl
