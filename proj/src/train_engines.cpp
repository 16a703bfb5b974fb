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

#include "elevssl/train_engines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>

#include "elevssl/errors.hpp"
#include "elevssl/rng.hpp"

namespace elevssl {
using nlohmann::json;

namespace {

constexpr std::array<std::pair<Method, const char*>, 5> kMethodNames{{
    {Method::simclr, "simclr"},
    {Method::glcnet, "glcnet"},
    {Method::elevation, "elevation"},
    {Method::simclr_elev, "simclr_elev"},
    {Method::glcnet_elev, "glcnet_elev"},
}};

// Stream tags.
constexpr std::uint64_t kInitTag = 1;
constexpr std::uint64_t kShuffleTag = 2;
constexpr std::uint64_t kSampleTag = 3;
constexpr std::uint64_t kRegionTag = 4;
constexpr std::uint64_t kRetryTag = 5;
constexpr std::uint64_t kFlipTag = 6;

template <typename T>
void read_field(const json& j, const char* key, T& out, const std::string& prefix = "") {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(prefix + key, prefix + key + ": " + e.what());
  }
}

std::int64_t conv_out(std::int64_t n) { return (n + 1) / 2; }

Shape2 stride4_shape(const Shape2& s) { return {conv_out(conv_out(s.height)), conv_out(conv_out(s.width))}; }

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::int64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed_state(seed).derive({kShuffleTag, static_cast<std::uint64_t>(epoch)}));
  rng.shuffle(std::span<std::size_t>(order));
  return order;
}

void check_finite(const LossBreakdown& b, std::int64_t step) {
  if (std::isfinite(b.total)) return;
  std::ostringstream os;
  os << "non-finite loss at step " << step << ": " << to_json(b).dump();
  throw NonFiniteLoss(os.str());
}

// Which branches carry nonzero weight.
bool needs_contrastive(const PretrainConfig& c) {
  if (!is_contrastive(c.method)) return false;
  return !uses_elevation(c.method) || c.weights.alpha < 1.0;
}
bool needs_elevation(const PretrainConfig& c) {
  if (!uses_elevation(c.method)) return false;
  return c.method == Method::elevation || c.weights.alpha > 0.0;
}
bool needs_local(const PretrainConfig& c) { return uses_glcnet(c.method) && needs_contrastive(c) && c.weights.lam < 1.0; }

}  // namespace

std::string to_string(Method m) {
  for (const auto& [k, v] : kMethodNames)
    if (k == m) return v;
  return "unknown";
}

Method method_from_string(const std::string& s) {
  for (const auto& [k, v] : kMethodNames)
    if (s == v) return k;
  throw ConfigError("method", "unknown pre-training method '" + s + "'");
}

bool uses_elevation(Method m) {
  return m == Method::elevation || m == Method::simclr_elev || m == Method::glcnet_elev;
}
bool uses_glcnet(Method m) { return m == Method::glcnet || m == Method::glcnet_elev; }
bool uses_simclr(Method m) { return m == Method::simclr || m == Method::simclr_elev; }
bool is_contrastive(Method m) { return m != Method::elevation; }

json pretrain_config_to_json(const PretrainConfig& c) {
  return {{"method", to_string(c.method)},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr0", c.lr0},
          {"weight_decay", c.weight_decay},
          {"tau", c.weights.tau},
          {"alpha", c.weights.alpha},
          {"lambda", c.weights.lam},
          {"seed", c.seed},
          {"augmentation", aug_policy_to_json(c.aug)},
          {"encoder", encoder_spec_to_json(c.encoder)},
          {"elevation_loss", c.elevation_mode == ElevationLossMode::eq5 ? "eq5" : "per_pixel"},
          {"proj_hidden", c.proj_hidden},
          {"proj_out", c.proj_out},
          {"local", {{"n_regions", c.local.n_regions}, {"patch", c.local.patch}, {"max_retries", c.local.max_retries}}},
          {"log_every", c.log_every}};
}

PretrainConfig pretrain_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("pretrain", "pretrain config must be an object");
  PretrainConfig c;
  if (j.contains("method")) {
    if (!j.at("method").is_string()) throw ConfigError("method", "method must be a string");
    c.method = method_from_string(j.at("method").get<std::string>());
  }
  read_field(j, "epochs", c.epochs);
  read_field(j, "batch_size", c.batch_size);
  read_field(j, "lr0", c.lr0);
  read_field(j, "weight_decay", c.weight_decay);
  read_field(j, "tau", c.weights.tau);
  read_field(j, "alpha", c.weights.alpha);
  read_field(j, "lambda", c.weights.lam);
  read_field(j, "seed", c.seed);
  read_field(j, "proj_hidden", c.proj_hidden);
  read_field(j, "proj_out", c.proj_out);
  read_field(j, "log_every", c.log_every);
  if (j.contains("augmentation")) {
    const auto& a = j.at("augmentation");
    c.aug = a.is_string() && a.get<std::string>() == "none" ? AugPolicy::none() : aug_policy_from_json(a);
  }
  if (j.contains("encoder")) c.encoder = encoder_spec_from_json(j.at("encoder"));
  if (j.contains("elevation_loss")) {
    std::string mode;
    read_field(j, "elevation_loss", mode);
    if (mode == "eq5") c.elevation_mode = ElevationLossMode::eq5;
    else if (mode == "per_pixel") c.elevation_mode = ElevationLossMode::per_pixel;
    else throw ConfigError("elevation_loss", "elevation_loss must be 'eq5' or 'per_pixel'");
  }
  if (j.contains("local")) {
    const auto& l = j.at("local");
    read_field(l, "n_regions", c.local.n_regions, "local.");
    read_field(l, "patch", c.local.patch, "local.");
    read_field(l, "max_retries", c.local.max_retries, "local.");
  }

  if (c.epochs < 1) throw ConfigError("epochs", "epochs must be at least 1");
  if (c.batch_size < 1) throw ConfigError("batch_size", "batch_size must be at least 1");
  if (is_contrastive(c.method) && c.batch_size < 2)
    throw ConfigError("batch_size", "contrastive methods need batch_size >= 2");
  if (!(c.lr0 > 0.0)) throw ConfigError("lr0", "lr0 must be positive");
  if (c.weight_decay < 0.0) throw ConfigError("weight_decay", "weight_decay must be non-negative");
  if (!(c.weights.tau > 0.0)) throw ConfigError("tau", "tau must be positive");
  if (c.weights.alpha < 0.0 || c.weights.alpha > 1.0) throw ConfigError("alpha", "alpha must lie in [0,1]");
  if (c.weights.lam < 0.0 || c.weights.lam > 1.0) throw ConfigError("lambda", "lambda must lie in [0,1]");
  if (c.proj_hidden < 1 || c.proj_out < 1) throw ConfigError("proj_out", "projection sizes must be positive");
  if (c.local.n_regions < 1) throw ConfigError("local.n_regions", "n_regions must be at least 1");
  if (c.local.patch < 1) throw ConfigError("local.patch", "patch must be at least 1");
  if (c.local.max_retries < 0) throw ConfigError("local.max_retries", "max_retries must be non-negative");
  if (c.log_every < 1) throw ConfigError("log_every", "log_every must be at least 1");
  return c;
}

json finetune_config_to_json(const FinetuneConfig& c) {
  json j = {{"task", to_string(c.task)},
            {"init", c.init},
            {"probe_epochs", c.probe_epochs},
            {"probe_lr", c.probe_lr},
            {"full_epochs", c.full_epochs},
            {"full_lr", c.full_lr},
            {"batch_size", c.batch_size},
            {"seed", c.seed},
            {"weight_decay", c.weight_decay},
            {"segmentation_flips", c.segmentation_flips}};
  if (c.encoder) j["encoder"] = encoder_spec_to_json(*c.encoder);
  return j;
}

FinetuneConfig finetune_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("finetune", "finetune config must be an object");
  FinetuneConfig c;
  if (j.contains("task")) {
    std::string t;
    read_field(j, "task", t);
    c.task = task_from_string(t);
  }
  read_field(j, "init", c.init);
  read_field(j, "probe_epochs", c.probe_epochs);
  read_field(j, "probe_lr", c.probe_lr);
  read_field(j, "full_epochs", c.full_epochs);
  read_field(j, "full_lr", c.full_lr);
  read_field(j, "batch_size", c.batch_size);
  read_field(j, "seed", c.seed);
  read_field(j, "weight_decay", c.weight_decay);
  read_field(j, "segmentation_flips", c.segmentation_flips);
  if (j.contains("encoder")) c.encoder = encoder_spec_from_json(j.at("encoder"));
  if (c.probe_epochs < 0) throw ConfigError("probe_epochs", "probe_epochs must be non-negative");
  if (c.full_epochs < 0) throw ConfigError("full_epochs", "full_epochs must be non-negative");
  if (!(c.probe_lr > 0.0)) throw ConfigError("probe_lr", "probe_lr must be positive");
  if (!(c.full_lr > 0.0)) throw ConfigError("full_lr", "full_lr must be positive");
  if (c.batch_size < 1) throw ConfigError("batch_size", "batch_size must be at least 1");
  if (c.weight_decay < 0.0) throw ConfigError("weight_decay", "weight_decay must be non-negative");
  return c;
}

json to_json(const LogRecord& r) {
  json j = {{"step", r.step}, {"epoch", r.epoch}, {"lr", r.lr}, {"phase", r.phase}};
  j.update(to_json(r.loss));
  return j;
}

void write_log(const TrainingLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write training log: " + path.string());
  for (const auto& r : log) out << to_json(r).dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<double> epoch_means(const TrainingLog& log, const std::string& phase) {
  std::map<std::int64_t, std::pair<double, std::int64_t>> acc;
  for (const auto& r : log) {
    if (r.phase != phase) continue;
    auto& [sum, n] = acc[r.epoch];
    sum += r.loss.total;
    ++n;
  }
  std::vector<double> out;
  for (const auto& [epoch, v] : acc) out.push_back(v.first / static_cast<double>(v.second));
  return out;
}

double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr0) {
  if (total_steps < 1 || step < 0 || step > total_steps)
    throw ArgumentError("cosine_lr: need 0 <= step <= total_steps and total_steps >= 1");
  return lr0 * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) / static_cast<double>(total_steps)));
}

PretrainNetImpl::PretrainNetImpl(Method m, const EncoderSpec& spec, const Shape2& elev_shape,
                                 std::int64_t proj_hidden, std::int64_t proj_out, std::uint64_t seed)
    : method(m) {
  const auto init = seed_state(seed).derive(kInitTag);
  torch::manual_seed(init.derive(0).key);
  encoder = register_module("encoder", Encoder(spec));
  if (is_contrastive(m)) {
    const auto in = uses_glcnet(m) ? 2 * spec.embedding_dim() : spec.embedding_dim();
    torch::manual_seed(init.derive(1).key);
    global_head = register_module("global_head", ProjectionHead(ProjectionHeadSpec{in, proj_hidden, proj_out, true}));
  }
  if (uses_glcnet(m)) {
    torch::manual_seed(init.derive(2).key);
    local_decoder = register_module("local_decoder", UNetDecoder(local_decoder_spec(spec)));
    torch::manual_seed(init.derive(3).key);
    local_head = register_module(
        "local_head", ProjectionHead(ProjectionHeadSpec{spec.stage_widths[0], proj_hidden, proj_out, true}));
  }
  if (uses_elevation(m)) {
    torch::manual_seed(init.derive(4).key);
    elevation_decoder = register_module("elevation_decoder", UNetDecoder(elevation_decoder_spec(spec, elev_shape)));
  }
}

PretrainBatch build_pretrain_batch(std::span<const TileSample> tiles, std::span<const std::size_t> indices,
                                   std::int64_t epoch, const PretrainConfig& config, const ElevationStats& stats) {
  if (indices.empty()) throw ArgumentError("build_pretrain_batch: empty batch");
  const bool local = needs_local(config);
  std::vector<torch::Tensor> va, vb, ve, et;
  PretrainBatch batch;
  for (auto idx : indices) {
    if (idx >= tiles.size()) throw ArgumentError("build_pretrain_batch: index out of range");
    const auto& tile = tiles[idx];
    const auto rng =
        seed_state(config.seed).derive({kSampleTag, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(idx)});
    auto t = make_view_triple(tile, config.aug, rng, stats);
    if (local) {
      const Shape2 src{tile.rgb.size(1), tile.rgb.size(2)};
      const auto feat = stride4_shape(src);
      std::vector<RegionPair> pairs;
      for (int attempt = 0;; ++attempt) {
        try {
          pairs = matched_regions(t.spec_a, t.spec_b, config.local.n_regions, config.local.patch, feat,
                                  rng.derive({kRegionTag, static_cast<std::uint64_t>(attempt)}));
          break;
        } catch (const OverlapTooSmall&) {
          const auto retry = rng.derive({kRetryTag, static_cast<std::uint64_t>(attempt)});
          if (attempt < config.local.max_retries) {
            t.spec_a = sample_aug_spec(src, config.aug.contrast, retry.derive(0));
            t.spec_b = sample_aug_spec(src, config.aug.contrast, retry.derive(1));
          } else if (attempt == config.local.max_retries) {
            t.spec_a.crop = {0, 0, src.height, src.width};
            t.spec_b.crop = {0, 0, src.height, src.width};
          } else {
            throw ArgumentError("build_pretrain_batch: local patch larger than the tile");
          }
          t.view_contrast_a = apply_spec(tile.rgb, t.spec_a);
          t.view_contrast_b = apply_spec(tile.rgb, t.spec_b);
        }
      }
      batch.pairs.push_back(std::move(pairs));
    }
    va.push_back(t.view_contrast_a);
    vb.push_back(t.view_contrast_b);
    ve.push_back(t.view_elev);
    et.push_back(t.elev_target);
  }
  batch.view_a = torch::stack(va);
  batch.view_b = torch::stack(vb);
  batch.view_e = torch::stack(ve);
  batch.elev_target = torch::stack(et);
  return batch;
}

WeightedLoss pretrain_objective(PretrainNet& net, const PretrainBatch& batch, const PretrainConfig& config) {
  validate(config.weights);
  const auto& w = config.weights;
  torch::Tensor lc, le;
  LossBreakdown b;
  if (needs_contrastive(config)) {
    auto pa = net->encoder->forward(batch.view_a);
    auto pb = net->encoder->forward(batch.view_b);
    if (uses_simclr(config.method)) {
      lc = nt_xent(net->global_head->forward(pa.pooled), net->global_head->forward(pb.pooled), w.tau);
      b.contrastive = lc.item<double>();
    } else {
      torch::Tensor ga, gb;
      if (w.lam > 0.0) {
        ga = net->global_head->forward(style_features(pa.f4));
        gb = net->global_head->forward(style_features(pb.f4));
      }
      LocalTerms local;
      local.head = net->local_head;
      if (w.lam < 1.0) {
        local.feats_a = decode_local(net->local_decoder, pa);
        local.feats_b = decode_local(net->local_decoder, pb);
        local.pairs = batch.pairs;
      }
      auto g = glcnet_loss(ga, gb, local, w);
      lc = g.value;
      b = g.breakdown;
    }
  }
  if (needs_elevation(config)) {
    auto pe = net->encoder->forward(batch.view_e);
    le = elevation_loss(decode_elevation(net->elevation_decoder, pe), batch.elev_target, config.elevation_mode);
    b.elevation = le.item<double>();
  }
  WeightedLoss out;
  if (config.method == Method::elevation) {
    out.value = le;
  } else if (config.method == Method::simclr || config.method == Method::glcnet) {
    out.value = lc;
  } else {
    out.value = combined_loss(lc, le, w.alpha);
  }
  b.total = out.value.item<double>();
  out.breakdown = b;
  return out;
}

PretrainResult pretrain(const PretrainConfig& config, std::span<const TileSample> tiles, const std::string& config_hash) {
  if (tiles.empty()) throw ArgumentError("pretrain: the pretraining split is empty");
  validate(config.weights);
  if (is_contrastive(config.method) && config.batch_size < 2)
    throw ArgumentError("pretrain: contrastive methods need batch_size >= 2");
  const auto n = static_cast<std::int64_t>(tiles.size());
  const auto steps_per_epoch = n / config.batch_size;
  if (steps_per_epoch < 1)
    throw ArgumentError("pretrain: " + std::to_string(n) + " tiles cannot fill one batch of " +
                        std::to_string(config.batch_size));
  const auto total = steps_per_epoch * config.epochs;

  const Shape2 elev_shape{tiles[0].elevation.size(0), tiles[0].elevation.size(1)};
  const auto stats = compute_elevation_stats(tiles);

  PretrainNet net(config.method, config.encoder, elev_shape, config.proj_hidden, config.proj_out,
                  config.seed);
  net->train();
  torch::optim::Adam opt(net->parameters(),
                         torch::optim::AdamOptions(config.lr0).weight_decay(config.weight_decay));

  PretrainResult result;
  std::int64_t step = 0;
  for (std::int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = epoch_order(tiles.size(), config.seed, epoch);
    for (std::int64_t s = 0; s < steps_per_epoch; ++s, ++step) {
      const std::span<const std::size_t> idx(order.data() + s * config.batch_size,
                                             static_cast<std::size_t>(config.batch_size));
      const auto batch = build_pretrain_batch(tiles, idx, epoch, config, stats);
      const double lr = cosine_lr(step, total, config.lr0);
      for (auto& g : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(g.options()).lr(lr);
      opt.zero_grad();
      auto loss = pretrain_objective(net, batch, config);
      check_finite(loss.breakdown, step);
      loss.value.backward();
      opt.step();
      if (step % config.log_every == 0 || step == total - 1)
        result.log.push_back({step, epoch, lr, "pretrain", loss.breakdown});
    }
  }

  result.checkpoint.encoder_spec = config.encoder;
  result.checkpoint.elev_stats = stats;
  result.checkpoint.method = to_string(config.method);
  result.checkpoint.seed = config.seed;
  result.checkpoint.epoch = config.epochs;
  result.checkpoint.config_hash = config_hash;
  result.checkpoint.encoder = net->encoder;
  return result;
}

PretrainResult pretrain(const PretrainConfig& config, const DatasetManifest& manifest, const SplitAssignment& split,
                        const std::string& config_hash) {
  if (split.pretrain_ids.empty()) throw ArgumentError("pretrain: the pretraining split is empty");
  const auto tiles = load_tiles(manifest, split.pretrain_ids);
  return pretrain(config, tiles, config_hash);
}

namespace {

torch::Tensor targets_of(std::span<const TileSample> labeled, std::span<const std::size_t> idx, Task task,
                         std::span<const std::pair<bool, bool>> flips) {
  std::vector<torch::Tensor> out;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto& t = labeled[idx[k]];
    if (task == Task::classification) {
      out.push_back(torch::tensor(static_cast<std::int64_t>(*t.label), torch::kLong));
    } else {
      auto m = t.mask.to(torch::kLong);
      if (flips[k].first) m = hflip(m);
      if (flips[k].second) m = vflip(m);
      out.push_back(m);
    }
  }
  return torch::stack(out);
}

}  // namespace

FinetuneResult finetune(const FinetuneConfig& config, const std::optional<Checkpoint>& init,
                        std::span<const TileSample> labeled) {
  if (labeled.empty()) throw ArgumentError("finetune: empty labeled set");
  if (config.batch_size < 1) throw ArgumentError("finetune: batch_size must be at least 1");
  for (const auto& t : labeled) {
    if (config.task == Task::classification && !t.label)
      throw ValidationError("finetune: tile " + t.id + " has no image-level label");
    if (config.task == Task::segmentation && !t.mask.defined())
      throw ValidationError("finetune: tile " + t.id + " has no mask");
  }
  EncoderSpec spec = config.encoder.value_or(EncoderSpec::tiny());
  if (init) {
    if (config.encoder && *config.encoder != init->encoder_spec)
      throw ValidationError("finetune: configured encoder does not match the checkpoint's encoder");
    spec = init->encoder_spec;
  }
  const Shape2 tile_shape{labeled[0].rgb.size(1), labeled[0].rgb.size(2)};
  for (const auto& t : labeled)
    if (t.rgb.size(1) != tile_shape.height || t.rgb.size(2) != tile_shape.width)
      throw ValidationError("finetune: tile " + t.id + " has a different shape");

  torch::manual_seed(seed_state(config.seed).derive(kInitTag).key);
  FinetuneResult result;
  TaskModel model(config.task, spec, tile_shape);
  if (init) restore_module(*model->encoder, module_tensors(*init->encoder), "");

  const auto n = labeled.size();
  const auto bs = static_cast<std::size_t>(config.batch_size);
  std::int64_t step = 0;
  auto run_phase = [&](const std::string& phase, std::int64_t epochs, double lr, std::vector<torch::Tensor> params,
                       std::int64_t epoch_offset) {
    torch::optim::Adam opt(params, torch::optim::AdamOptions(lr).weight_decay(config.weight_decay));
    for (std::int64_t e = 0; e < epochs; ++e) {
      const auto epoch = epoch_offset + e;
      const auto order = epoch_order(n, config.seed, epoch);
      for (std::size_t start = 0; start < n; start += bs, ++step) {
        const std::span<const std::size_t> idx(order.data() + start, std::min(bs, n - start));
        std::vector<std::pair<bool, bool>> flips(idx.size(), {false, false});
        std::vector<torch::Tensor> images;
        for (std::size_t k = 0; k < idx.size(); ++k) {
          auto img = labeled[idx[k]].rgb;
          if (config.task == Task::segmentation && config.segmentation_flips) {
            Rng rng(seed_state(config.seed).derive(
                {kFlipTag, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(idx[k])}));
            flips[k] = {rng.bernoulli(0.5), rng.bernoulli(0.5)};
            if (flips[k].first) img = hflip(img);
            if (flips[k].second) img = vflip(img);
          }
          images.push_back(img);
        }
        const auto x = torch::stack(images);
        const auto y = targets_of(labeled, idx, config.task, flips);
        opt.zero_grad();
        const auto loss = torch::nn::functional::cross_entropy(model->forward(x), y);
        LossBreakdown b;
        b.total = loss.item<double>();
        check_finite(b, step);
        loss.backward();
        opt.step();
        result.log.push_back({step, epoch, lr, phase, b});
      }
    }
  };

  // Frozen phase: the encoder runs in inference mode so its statistics stay put.
  for (auto& p : model->encoder->parameters()) p.set_requires_grad(false);
  model->train();
  model->encoder->eval();
  run_phase("probe", config.probe_epochs, config.probe_lr, model->head_parameters(), 0);
  for (const auto& [name, t] : module_tensors(*model->encoder)) result.encoder_after_probe.push_back(t.clone());

  for (auto& p : model->encoder->parameters()) p.set_requires_grad(true);
  model->train();
  run_phase("full", config.full_epochs, config.full_lr, model->parameters(), config.probe_epochs);

  model->eval();
  result.model = model;
  return result;
}

void use_single_thread() {
  static std::once_flag once;
  std::call_once(once, [] {
    torch::set_num_threads(1);
    try {
      torch::set_num_interop_threads(1);
    } catch (const std::exception&) {
      // Already fixed by earlier parallel work; intra-op threads are what matter.
    }
  });
}

}  // namespace elevssl
