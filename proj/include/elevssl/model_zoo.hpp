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
#include <optional>
#include <span>
#include <string>

#include <json.hpp>

#include "elevssl/augment.hpp"
#include "elevssl/core_data_types.hpp"

namespace elevssl {

/// Residual encoder layout. Stage s (1-based) has output stride 4*2^(s-1).
struct EncoderSpec {
  std::array<std::int64_t, 4> stage_widths{64, 128, 256, 512};
  std::array<std::int64_t, 4> blocks_per_stage{2, 2, 2, 2};
  std::int64_t input_channels = 3;
  /// Start every block's last batch-norm scale at zero.
  bool zero_init_residual = false;

  static EncoderSpec resnet18() { return {}; }
  static EncoderSpec tiny() { return {{8, 16, 32, 64}, {2, 2, 2, 2}, 3, false}; }

  std::int64_t embedding_dim() const { return stage_widths[3]; }
  bool operator==(const EncoderSpec&) const = default;
};

nlohmann::json encoder_spec_to_json(const EncoderSpec& s);
EncoderSpec encoder_spec_from_json(const nlohmann::json& j);
/// Fingerprint of the encoder architecture; equal specs give equal hashes.
std::string architecture_hash(const EncoderSpec& s);

struct ProjectionHeadSpec {
  std::int64_t in_dim = 512;
  std::int64_t hidden_dim = 256;
  std::int64_t out_dim = 128;
  /// false drops the ReLU between the two layers (test mode).
  bool nonlinearity = true;
};

/// U-shaped decoder. Without out_shape the output stays at stride 4.
struct DecoderSpec {
  std::array<std::int64_t, 4> skip_widths{64, 128, 256, 512};
  std::int64_t out_channels = 1;
  std::optional<Shape2> out_shape;
};

struct FeaturePyramid {
  torch::Tensor f1, f2, f3, f4;  // strides 4, 8, 16, 32
  torch::Tensor pooled;          // [N, C4], global average of f4
};

class BasicBlockImpl : public torch::nn::Module {
 public:
  BasicBlockImpl(std::int64_t in, std::int64_t out, std::int64_t stride);
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::BatchNorm2d& last_bn() { return bn2; }

 private:
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
  torch::nn::Sequential downsample{nullptr};
};
TORCH_MODULE(BasicBlock);

class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const EncoderSpec& spec);
  /// images [N,3,H,W] with H,W >= 32.
  FeaturePyramid forward(const torch::Tensor& images);
  const EncoderSpec& spec() const { return spec_; }

 private:
  EncoderSpec spec_;
  torch::nn::Conv2d stem{nullptr};
  torch::nn::BatchNorm2d stem_bn{nullptr};
  std::array<torch::nn::Sequential, 4> stages;
};
TORCH_MODULE(Encoder);

/// Two affine layers with one ReLU in between.
class ProjectionHeadImpl : public torch::nn::Module {
 public:
  explicit ProjectionHeadImpl(const ProjectionHeadSpec& spec);
  torch::Tensor forward(const torch::Tensor& x);
  const ProjectionHeadSpec& spec() const { return spec_; }
  /// Identity weights, zero biases: with nonlinearity off the head returns
  /// the first out_dim input features.
  void set_identity();

 private:
  ProjectionHeadSpec spec_;
  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(ProjectionHead);

class ConvBlockImpl : public torch::nn::Module {
 public:
  ConvBlockImpl(std::int64_t in, std::int64_t out);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
};
TORCH_MODULE(ConvBlock);

class UNetDecoderImpl : public torch::nn::Module {
 public:
  explicit UNetDecoderImpl(const DecoderSpec& spec);
  torch::Tensor forward(const FeaturePyramid& p);
  const DecoderSpec& spec() const { return spec_; }

 private:
  DecoderSpec spec_;
  std::array<ConvBlock, 3> ups{ConvBlock{nullptr}, ConvBlock{nullptr}, ConvBlock{nullptr}};
  torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(UNetDecoder);

/// Single affine layer from embeddings to 2 class logits.
class ClassifierHeadImpl : public torch::nn::Module {
 public:
  explicit ClassifierHeadImpl(std::int64_t in_dim, std::int64_t n_classes = 2);
  torch::Tensor forward(const torch::Tensor& pooled);
  torch::nn::Linear fc{nullptr};
};
TORCH_MODULE(ClassifierHead);

/// Per-channel spatial mean concatenated with per-channel population std
/// (eps 1e-5 inside the square root): [N,C,h,w] -> [N,2C].
torch::Tensor style_features(const torch::Tensor& fmap);
inline constexpr double kStyleEps = 1e-5;

FeaturePyramid encode(Encoder& encoder, const torch::Tensor& images);
torch::Tensor project(ProjectionHead& head, const torch::Tensor& x);
torch::Tensor decode_elevation(UNetDecoder& decoder, const FeaturePyramid& p);
torch::Tensor decode_segmentation(UNetDecoder& decoder, const FeaturePyramid& p);
torch::Tensor decode_local(UNetDecoder& decoder, const FeaturePyramid& p);
torch::Tensor classify(ClassifierHead& head, const torch::Tensor& pooled);

/// Decoder specs for the three decoding roles.
DecoderSpec elevation_decoder_spec(const EncoderSpec& enc, const Shape2& elev_shape);
DecoderSpec segmentation_decoder_spec(const EncoderSpec& enc, const Shape2& tile_shape);
DecoderSpec local_decoder_spec(const EncoderSpec& enc);

/// Average-pools each region's footprint from one sample's feature map
/// [C,h,w]; `first` selects center_a/extent_a (else the b side). -> [n,C].
torch::Tensor pool_regions(const torch::Tensor& feats, std::span<const RegionPair> pairs, bool first);

/// He-uniform for convolutions, unit/zero for batch norm, under the global
/// torch generator.
void init_weights(torch::nn::Module& module);

/// Encoder weights plus everything needed to reuse them.
struct Checkpoint {
  EncoderSpec encoder_spec;
  ElevationStats elev_stats;
  std::string method;
  std::uint64_t seed = 0;
  std::int64_t epoch = 0;
  std::string config_hash;
  Encoder encoder{nullptr};
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Named float32 tensors of a module (parameters, then buffers, skipping
/// batch-norm step counters) in registration order.
std::vector<std::pair<std::string, torch::Tensor>> module_tensors(const torch::nn::Module& module);
/// Copies archived tensors into a module; every module tensor must be
/// present with a matching shape.
void restore_module(torch::nn::Module& module, const std::vector<std::pair<std::string, torch::Tensor>>& tensors,
                    const std::string& prefix);

enum class Task { classification, segmentation };
std::string to_string(Task t);
Task task_from_string(const std::string& s);

/// Downstream network: encoder plus a single affine classification layer or a
/// U-shaped segmentation decoder. forward returns [N,2] or [N,2,H,W] logits.
class TaskModelImpl : public torch::nn::Module {
 public:
  TaskModelImpl(Task task, const EncoderSpec& spec, const Shape2& tile_shape);
  torch::Tensor forward(const torch::Tensor& images);
  /// Parameters of the task head only.
  std::vector<torch::Tensor> head_parameters();

  Task task;
  EncoderSpec encoder_spec;
  Shape2 tile_shape;
  Encoder encoder{nullptr};
  ClassifierHead classifier{nullptr};
  UNetDecoder segmenter{nullptr};
};
TORCH_MODULE(TaskModel);

/// `provenance` is stored verbatim in meta.json (checkpoint id and hashes,
/// method, seed, budget, ...). When it carries a
/// "checkpoint_architecture_hash", loading refuses a model whose encoder
/// architecture differs from it.
void save_task_model(TaskModel& model, const nlohmann::json& provenance, const std::filesystem::path& path);
std::pair<TaskModel, nlohmann::json> load_task_model(const std::filesystem::path& path);

}  // namespace elevssl
