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

#include "elevssl/model_zoo.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "elevssl/archive.hpp"
#include "elevssl/errors.hpp"
#include "elevssl/hash.hpp"

namespace elevssl {
namespace nn = torch::nn;
using nlohmann::json;

json encoder_spec_to_json(const EncoderSpec& s) {
  return {{"stage_widths", s.stage_widths},
          {"blocks_per_stage", s.blocks_per_stage},
          {"input_channels", s.input_channels},
          {"zero_init_residual", s.zero_init_residual}};
}

EncoderSpec encoder_spec_from_json(const json& j) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (name == "tiny") return EncoderSpec::tiny();
    if (name == "resnet18" || name == "default") return EncoderSpec::resnet18();
    throw ConfigError("encoder", "unknown encoder preset '" + name + "'");
  }
  EncoderSpec s;
  try {
    if (j.contains("preset")) s = encoder_spec_from_json(j.at("preset"));
    if (j.contains("stage_widths")) s.stage_widths = j.at("stage_widths").get<std::array<std::int64_t, 4>>();
    if (j.contains("blocks_per_stage")) s.blocks_per_stage = j.at("blocks_per_stage").get<std::array<std::int64_t, 4>>();
    s.input_channels = j.value("input_channels", s.input_channels);
    s.zero_init_residual = j.value("zero_init_residual", s.zero_init_residual);
  } catch (const json::exception& e) {
    throw ConfigError("encoder", std::string("bad encoder spec: ") + e.what());
  }
  for (auto w : s.stage_widths)
    if (w < 1) throw ConfigError("encoder.stage_widths", "stage widths must be positive");
  for (auto b : s.blocks_per_stage)
    if (b < 1) throw ConfigError("encoder.blocks_per_stage", "every stage needs at least one block");
  return s;
}

std::string architecture_hash(const EncoderSpec& s) {
  json j = encoder_spec_to_json(s);
  j.erase("zero_init_residual");  // initialization only, not architecture
  return json_hash(j);
}

namespace {

nn::Conv2d conv3x3(std::int64_t in, std::int64_t out, std::int64_t stride = 1) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false));
}

}  // namespace

BasicBlockImpl::BasicBlockImpl(std::int64_t in, std::int64_t out, std::int64_t stride) {
  conv1 = register_module("conv1", conv3x3(in, out, stride));
  bn1 = register_module("bn1", nn::BatchNorm2d(out));
  conv2 = register_module("conv2", conv3x3(out, out));
  bn2 = register_module("bn2", nn::BatchNorm2d(out));
  if (stride != 1 || in != out) {
    downsample = register_module(
        "downsample", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, out, 1).stride(stride).bias(false)),
                                     nn::BatchNorm2d(out)));
  }
}

torch::Tensor BasicBlockImpl::forward(const torch::Tensor& x) {
  auto y = torch::relu(bn1(conv1(x)));
  y = bn2(conv2(y));
  auto skip = downsample ? downsample->forward(x) : x;
  return torch::relu(y + skip);
}

EncoderImpl::EncoderImpl(const EncoderSpec& spec) : spec_(spec) {
  const auto& w = spec.stage_widths;
  stem = register_module("stem", nn::Conv2d(nn::Conv2dOptions(spec.input_channels, w[0], 7).stride(2).padding(3).bias(false)));
  stem_bn = register_module("stem_bn", nn::BatchNorm2d(w[0]));
  std::int64_t in = w[0];
  for (std::size_t s = 0; s < 4; ++s) {
    nn::Sequential stage;
    for (std::int64_t b = 0; b < spec.blocks_per_stage[s]; ++b) {
      const std::int64_t stride = (b == 0 && s > 0) ? 2 : 1;
      stage->push_back(BasicBlock(in, w[s], stride));
      in = w[s];
    }
    stages[s] = register_module("layer" + std::to_string(s + 1), stage);
  }
  init_weights(*this);
  if (spec.zero_init_residual) {
    torch::NoGradGuard ng;
    for (auto& stage : stages)
      for (auto& m : *stage)
        if (auto* block = m.ptr()->as<BasicBlockImpl>()) block->last_bn()->weight.zero_();
  }
}

FeaturePyramid EncoderImpl::forward(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != spec_.input_channels)
    throw ArgumentError("encode: expected [N," + std::to_string(spec_.input_channels) + ",H,W] input");
  if (images.size(2) < 32 || images.size(3) < 32) throw ArgumentError("encode: input must be at least 32x32");
  auto x = torch::relu(stem_bn(stem(images)));
  x = torch::max_pool2d(x, 3, 2, 1);
  FeaturePyramid p;
  p.f1 = stages[0]->forward(x);
  p.f2 = stages[1]->forward(p.f1);
  p.f3 = stages[2]->forward(p.f2);
  p.f4 = stages[3]->forward(p.f3);
  p.pooled = p.f4.mean({2, 3});
  return p;
}

ProjectionHeadImpl::ProjectionHeadImpl(const ProjectionHeadSpec& spec) : spec_(spec) {
  fc1 = register_module("fc1", nn::Linear(spec.in_dim, spec.hidden_dim));
  fc2 = register_module("fc2", nn::Linear(spec.hidden_dim, spec.out_dim));
}

torch::Tensor ProjectionHeadImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 2 || x.size(1) != spec_.in_dim)
    throw ArgumentError("project: expected [N," + std::to_string(spec_.in_dim) + "] input");
  auto h = fc1(x);
  if (spec_.nonlinearity) h = torch::relu(h);
  return fc2(h);
}

void ProjectionHeadImpl::set_identity() {
  torch::NoGradGuard ng;
  fc1->weight.copy_(torch::eye(spec_.hidden_dim, spec_.in_dim, fc1->weight.options()));
  fc1->bias.zero_();
  fc2->weight.copy_(torch::eye(spec_.out_dim, spec_.hidden_dim, fc2->weight.options()));
  fc2->bias.zero_();
}

ConvBlockImpl::ConvBlockImpl(std::int64_t in, std::int64_t out) {
  conv1 = register_module("conv1", conv3x3(in, out));
  bn1 = register_module("bn1", nn::BatchNorm2d(out));
  conv2 = register_module("conv2", conv3x3(out, out));
  bn2 = register_module("bn2", nn::BatchNorm2d(out));
}

torch::Tensor ConvBlockImpl::forward(const torch::Tensor& x) {
  return torch::relu(bn2(conv2(torch::relu(bn1(conv1(x))))));
}

UNetDecoderImpl::UNetDecoderImpl(const DecoderSpec& spec) : spec_(spec) {
  const auto& w = spec.skip_widths;
  std::int64_t in = w[3];
  for (int s = 2; s >= 0; --s) {
    ups[static_cast<std::size_t>(s)] = register_module("up" + std::to_string(s + 1), ConvBlock(in + w[s], w[s]));
    in = w[s];
  }
  head = register_module("head", nn::Conv2d(nn::Conv2dOptions(w[0], spec.out_channels, 1)));
  init_weights(*this);
  torch::NoGradGuard ng;
  head->bias.zero_();
}

torch::Tensor UNetDecoderImpl::forward(const FeaturePyramid& p) {
  const std::array<const torch::Tensor*, 3> skips{&p.f1, &p.f2, &p.f3};
  auto x = p.f4;
  for (int s = 2; s >= 0; --s) {
    const auto& skip = *skips[static_cast<std::size_t>(s)];
    x = torch::nn::functional::interpolate(
        x, torch::nn::functional::InterpolateFuncOptions()
               .size(std::vector<std::int64_t>{skip.size(2), skip.size(3)})
               .mode(torch::kBilinear)
               .align_corners(false));
    x = ups[static_cast<std::size_t>(s)]->forward(torch::cat({x, skip}, 1));
  }
  x = head(x);
  if (spec_.out_shape) {
    x = torch::nn::functional::interpolate(
        x, torch::nn::functional::InterpolateFuncOptions()
               .size(std::vector<std::int64_t>{spec_.out_shape->height, spec_.out_shape->width})
               .mode(torch::kBilinear)
               .align_corners(false));
  }
  return x;
}

ClassifierHeadImpl::ClassifierHeadImpl(std::int64_t in_dim, std::int64_t n_classes) {
  fc = register_module("fc", nn::Linear(in_dim, n_classes));
}

torch::Tensor ClassifierHeadImpl::forward(const torch::Tensor& pooled) {
  if (pooled.dim() != 2 || pooled.size(1) != fc->options.in_features())
    throw ArgumentError("classify: embedding width does not match the head");
  return fc(pooled);
}

torch::Tensor style_features(const torch::Tensor& fmap) {
  if (fmap.dim() != 4 || fmap.size(2) * fmap.size(3) < 1) throw ArgumentError("style_features: expected [N,C,h,w]");
  const auto mean = fmap.mean({2, 3});
  const auto var = (fmap - mean.unsqueeze(-1).unsqueeze(-1)).pow(2).mean({2, 3});
  return torch::cat({mean, torch::sqrt(var + kStyleEps)}, 1);
}

FeaturePyramid encode(Encoder& encoder, const torch::Tensor& images) { return encoder->forward(images); }

torch::Tensor project(ProjectionHead& head, const torch::Tensor& x) { return head->forward(x); }

namespace {

void expect_decoder(const UNetDecoder& d, std::int64_t channels, bool resized, const char* what) {
  if (d->spec().out_channels != channels || d->spec().out_shape.has_value() != resized)
    throw ArgumentError(std::string(what) + ": decoder spec does not match this role");
}

}  // namespace

torch::Tensor decode_elevation(UNetDecoder& decoder, const FeaturePyramid& p) {
  expect_decoder(decoder, 1, true, "decode_elevation");
  return decoder->forward(p);
}

torch::Tensor decode_segmentation(UNetDecoder& decoder, const FeaturePyramid& p) {
  expect_decoder(decoder, 2, true, "decode_segmentation");
  return decoder->forward(p);
}

torch::Tensor decode_local(UNetDecoder& decoder, const FeaturePyramid& p) {
  if (decoder->spec().out_shape) throw ArgumentError("decode_local: local decoder must stay at stride 4");
  return decoder->forward(p);
}

torch::Tensor classify(ClassifierHead& head, const torch::Tensor& pooled) { return head->forward(pooled); }

DecoderSpec elevation_decoder_spec(const EncoderSpec& enc, const Shape2& elev_shape) {
  return {enc.stage_widths, 1, elev_shape};
}

DecoderSpec segmentation_decoder_spec(const EncoderSpec& enc, const Shape2& tile_shape) {
  return {enc.stage_widths, 2, tile_shape};
}

DecoderSpec local_decoder_spec(const EncoderSpec& enc) { return {enc.stage_widths, enc.stage_widths[0], std::nullopt}; }

torch::Tensor pool_regions(const torch::Tensor& feats, std::span<const RegionPair> pairs, bool first) {
  if (feats.dim() != 3) throw ArgumentError("pool_regions: expected [C,h,w] features");
  const auto h = feats.size(1), w = feats.size(2);
  std::vector<torch::Tensor> rows;
  rows.reserve(pairs.size());
  for (const auto& r : pairs) {
    const Cell c = first ? r.center_a : r.center_b;
    const auto k = first ? r.extent_a : r.extent_b;
    if (c.row < 0 || c.row >= h || c.col < 0 || c.col >= w) throw ArgumentError("pool_regions: center out of bounds");
    // Windows near the border slide inward so every region pools k x k cells.
    const auto r0 = std::clamp(c.row - (k - 1) / 2, std::int64_t{0}, std::max<std::int64_t>(0, h - k));
    const auto c0 = std::clamp(c.col - (k - 1) / 2, std::int64_t{0}, std::max<std::int64_t>(0, w - k));
    const auto r1 = std::min(r0 + k, h);
    const auto c1 = std::min(c0 + k, w);
    rows.push_back(feats.slice(1, r0, r1).slice(2, c0, c1).mean({1, 2}));
  }
  if (rows.empty()) return torch::empty({0, feats.size(0)}, feats.options());
  return torch::stack(rows);
}

void init_weights(nn::Module& module) {
  torch::NoGradGuard ng;
  std::vector<nn::Module*> all{&module};
  for (auto& m : module.modules(/*include_self=*/false)) all.push_back(m.get());
  for (auto* m : all) {
    if (auto* conv = m->as<nn::Conv2dImpl>()) {
      nn::init::kaiming_uniform_(conv->weight, 0.0, torch::kFanIn, torch::kReLU);
      if (conv->bias.defined()) conv->bias.zero_();
    } else if (auto* bn = m->as<nn::BatchNorm2dImpl>()) {
      bn->weight.fill_(1.0);
      bn->bias.zero_();
    }
  }
}

std::vector<std::pair<std::string, torch::Tensor>> module_tensors(const nn::Module& module) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& p : module.named_parameters(true)) out.emplace_back(p.key(), p.value());
  for (const auto& b : module.named_buffers(true)) {
    if (b.key().ends_with("num_batches_tracked")) continue;
    out.emplace_back(b.key(), b.value());
  }
  return out;
}

void restore_module(nn::Module& module, const std::vector<std::pair<std::string, torch::Tensor>>& tensors,
                    const std::string& prefix) {
  std::map<std::string, const torch::Tensor*> by_name;
  for (const auto& [name, t] : tensors)
    if (name.starts_with(prefix)) by_name.emplace(name.substr(prefix.size()), &t);
  torch::NoGradGuard ng;
  for (auto& [name, dst] : module_tensors(module)) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ValidationError("archive is missing tensor " + prefix + name);
    if (it->second->sizes() != dst.sizes())
      throw ValidationError("archive tensor " + prefix + name + " has the wrong shape");
    dst.copy_(*it->second);
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  Archive a;
  a.meta = {{"kind", "checkpoint"},
            {"encoder", encoder_spec_to_json(ckpt.encoder_spec)},
            {"architecture_hash", architecture_hash(ckpt.encoder_spec)},
            {"elevation_stats", {{"mean", ckpt.elev_stats.mean}, {"std", ckpt.elev_stats.std}}},
            {"method", ckpt.method},
            {"seed", ckpt.seed},
            {"epoch", ckpt.epoch},
            {"config_hash", ckpt.config_hash}};
  for (auto& [name, t] : module_tensors(*ckpt.encoder)) a.tensors.emplace_back("encoder." + name, t);
  write_archive(path, a);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto a = read_archive(path);
  if (a.meta.value("kind", "") != "checkpoint") throw ValidationError(path.string() + " is not a checkpoint archive");
  Checkpoint c;
  try {
    c.encoder_spec = encoder_spec_from_json(a.meta.at("encoder"));
    c.elev_stats = {a.meta.at("elevation_stats").at("mean").get<double>(),
                    a.meta.at("elevation_stats").at("std").get<double>()};
    c.method = a.meta.at("method").get<std::string>();
    c.seed = a.meta.at("seed").get<std::uint64_t>();
    c.epoch = a.meta.at("epoch").get<std::int64_t>();
    c.config_hash = a.meta.value("config_hash", "");
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": bad checkpoint metadata: " + e.what());
  }
  if (a.meta.value("architecture_hash", "") != architecture_hash(c.encoder_spec))
    throw ValidationError(path.string() + ": architecture hash does not match the declared encoder");
  c.encoder = Encoder(c.encoder_spec);
  restore_module(*c.encoder, a.tensors, "encoder.");
  return c;
}

std::string to_string(Task t) { return t == Task::classification ? "classification" : "segmentation"; }

Task task_from_string(const std::string& s) {
  if (s == "classification") return Task::classification;
  if (s == "segmentation") return Task::segmentation;
  throw ConfigError("task", "unknown task '" + s + "' (expected classification|segmentation)");
}

TaskModelImpl::TaskModelImpl(Task t, const EncoderSpec& spec, const Shape2& shape)
    : task(t), encoder_spec(spec), tile_shape(shape) {
  encoder = register_module("encoder", Encoder(spec));
  if (task == Task::classification) {
    classifier = register_module("head", ClassifierHead(spec.embedding_dim()));
  } else {
    segmenter = register_module("head", UNetDecoder(segmentation_decoder_spec(spec, shape)));
  }
}

torch::Tensor TaskModelImpl::forward(const torch::Tensor& images) {
  auto p = encoder->forward(images);
  return task == Task::classification ? classify(classifier, p.pooled) : decode_segmentation(segmenter, p);
}

std::vector<torch::Tensor> TaskModelImpl::head_parameters() {
  return task == Task::classification ? classifier->parameters() : segmenter->parameters();
}

void save_task_model(TaskModel& model, const json& provenance, const std::filesystem::path& path) {
  Archive a;
  a.meta = {{"kind", "model"},
            {"task", to_string(model->task)},
            {"encoder", encoder_spec_to_json(model->encoder_spec)},
            {"architecture_hash", architecture_hash(model->encoder_spec)},
            {"tile_shape", {model->tile_shape.height, model->tile_shape.width}},
            {"provenance", provenance}};
  a.tensors = module_tensors(*model);
  write_archive(path, a);
}

std::pair<TaskModel, json> load_task_model(const std::filesystem::path& path) {
  auto a = read_archive(path);
  if (a.meta.value("kind", "") != "model") throw ValidationError(path.string() + " is not a fine-tuned model archive");
  Task task;
  EncoderSpec spec;
  Shape2 shape;
  json prov;
  try {
    task = task_from_string(a.meta.at("task").get<std::string>());
    spec = encoder_spec_from_json(a.meta.at("encoder"));
    shape = {a.meta.at("tile_shape")[0].get<std::int64_t>(), a.meta.at("tile_shape")[1].get<std::int64_t>()};
    prov = a.meta.value("provenance", json::object());
  } catch (const std::exception& e) {
    throw ValidationError(path.string() + ": bad model metadata: " + e.what());
  }
  const auto arch = architecture_hash(spec);
  if (a.meta.value("architecture_hash", "") != arch)
    throw ValidationError(path.string() + ": architecture hash does not match the declared encoder");
  if (prov.contains("checkpoint_architecture_hash") && prov["checkpoint_architecture_hash"].get<std::string>() != arch)
    throw ValidationError(path.string() + ": encoder architecture differs from the checkpoint it was fine-tuned from");
  TaskModel m(task, spec, shape);
  restore_module(*m, a.tensors, "");
  return {m, prov};
}

}  // namespace elevssl
