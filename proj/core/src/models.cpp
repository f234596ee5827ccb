#include "sslab/models.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "sslab/error.hpp"

namespace sslab {

namespace nn = torch::nn;

void BackboneConfig::validate() const {
  for (const int c : stage_channels) {
    if (c <= 0) throw InvalidArgument("backbone stage channels must be positive");
  }
  if (blocks_per_stage < 1) throw InvalidArgument("backbone needs at least one block per stage");
  if (input_side <= 0 || input_side % 8 != 0) {
    throw InvalidArgument("backbone input_side must be a positive multiple of 8, got " + std::to_string(input_side));
  }
  if (!(width_multiplier > 0.0)) throw InvalidArgument("backbone width_multiplier must be positive");
}

int BackboneConfig::channels(int stage) const {
  return std::max(1, static_cast<int>(std::lround(stage_channels.at(stage) * width_multiplier)));
}

void to_json(nlohmann::json& j, const BackboneConfig& c) {
  j = nlohmann::json{{"stage_channels", c.stage_channels},
                     {"blocks_per_stage", c.blocks_per_stage},
                     {"input_side", c.input_side},
                     {"width_multiplier", c.width_multiplier}};
}

void from_json(const nlohmann::json& j, BackboneConfig& c) {
  BackboneConfig d;
  c.stage_channels = j.value("stage_channels", d.stage_channels);
  c.blocks_per_stage = j.value("blocks_per_stage", d.blocks_per_stage);
  c.input_side = j.value("input_side", d.input_side);
  c.width_multiplier = j.value("width_multiplier", d.width_multiplier);
}

namespace {

nn::Conv2d conv3x3(int in, int out, int stride) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false));
}

}  // namespace

BasicBlockImpl::BasicBlockImpl(int in_channels, int out_channels, int stride) {
  conv1_ = register_module("conv1", conv3x3(in_channels, out_channels, stride));
  bn1_ = register_module("bn1", nn::BatchNorm2d(out_channels));
  conv2_ = register_module("conv2", conv3x3(out_channels, out_channels, 1));
  bn2_ = register_module("bn2", nn::BatchNorm2d(out_channels));
  if (stride != 1 || in_channels != out_channels) {
    shortcut_conv_ = register_module(
        "shortcut_conv", nn::Conv2d(nn::Conv2dOptions(in_channels, out_channels, 1).stride(stride).bias(false)));
    shortcut_bn_ = register_module("shortcut_bn", nn::BatchNorm2d(out_channels));
  }
}

torch::Tensor BasicBlockImpl::forward(const torch::Tensor& x) {
  auto out = torch::relu(bn1_(conv1_(x)));
  out = bn2_(conv2_(out));
  const auto skip = shortcut_conv_ ? shortcut_bn_(shortcut_conv_(x)) : x;
  return torch::relu(out + skip);
}

EncoderImpl::EncoderImpl(BackboneConfig config) : config_(config) {
  config_.validate();
  stem_ = register_module("stem", conv3x3(3, config_.stem_channels(), 2));
  stem_bn_ = register_module("stem_bn", nn::BatchNorm2d(config_.stem_channels()));
  stages_ = register_module("stages", nn::Sequential());
  int in = config_.stem_channels();
  for (int stage = 0; stage < 3; ++stage) {
    const int out = config_.channels(stage);
    for (int b = 0; b < config_.blocks_per_stage; ++b) {
      const int stride = (stage > 0 && b == 0) ? 2 : 1;
      stages_->push_back(BasicBlock(in, out, stride));
      in = out;
    }
  }
}

torch::Tensor EncoderImpl::forward(const torch::Tensor& x) {
  return stages_->forward(torch::relu(stem_bn_(stem_(x))));
}

Encoder build_backbone(const BackboneConfig& config) { return Encoder(config); }

torch::Tensor extract_prepool(Encoder& encoder, const torch::Tensor& images) {
  const int side = encoder->config().input_side;
  if (images.dim() != 4 || images.size(1) != 3 || images.size(2) != side || images.size(3) != side) {
    throw InvalidArgument("extract_prepool: expected [N, 3, " + std::to_string(side) + ", " +
                          std::to_string(side) + "] input");
  }
  const bool was_training = encoder->is_training();
  encoder->eval();
  torch::NoGradGuard no_grad;
  auto maps = encoder->forward(images);
  encoder->train(was_training);
  return maps;
}

int pool_grid_for_dim(int channels, int map_side, int target_dim) {
  if (channels <= 0 || target_dim <= 0 || target_dim % channels != 0) {
    throw InvalidArgument("pooled dimension " + std::to_string(target_dim) + " is not a multiple of " +
                          std::to_string(channels) + " channels");
  }
  const int cells = target_dim / channels;
  const int grid = static_cast<int>(std::lround(std::sqrt(cells)));
  if (grid * grid != cells || (grid != 1 && grid != 4 && grid != 6 && grid != map_side)) {
    throw InvalidArgument("unsupported pooled dimension " + std::to_string(target_dim) + " for " +
                          std::to_string(channels) + " channels (grid must be 1, 4, 6 or unpooled)");
  }
  if (grid > map_side) throw InvalidArgument("pooling grid larger than the feature map");
  return grid;
}

torch::Tensor pool_features(const torch::Tensor& maps, int target_dim) {
  if (maps.dim() != 4) throw InvalidArgument("pool_features: expected [N, C, H, W] maps");
  if (maps.size(2) != maps.size(3)) throw InvalidArgument("pool_features: maps must be square");
  const int grid = pool_grid_for_dim(static_cast<int>(maps.size(1)), static_cast<int>(maps.size(2)), target_dim);
  return torch::adaptive_avg_pool2d(maps, {grid, grid}).flatten(1);
}

DecoderImpl::DecoderImpl(int latent_dim, double width_multiplier, int output_side) : latent_dim_(latent_dim) {
  if (latent_dim <= 0) throw InvalidArgument("decoder latent_dim must be positive");
  if (!(width_multiplier > 0.0)) throw InvalidArgument("decoder width_multiplier must be positive");
  int upsamples = 0;
  for (int s = output_side; s > 4; s /= 2) {
    if (s % 2 != 0) throw InvalidArgument("decoder output_side must be 4 * 2^k");
    ++upsamples;
  }
  if (upsamples < 1 || (4 << upsamples) != output_side) throw InvalidArgument("decoder output_side must be 4 * 2^k, k >= 1");

  auto width = [&](int c) { return std::max(1, static_cast<int>(std::lround(c * width_multiplier))); };
  layers_ = register_module("layers", nn::Sequential());
  int in = latent_dim;
  for (int i = 0; i < upsamples; ++i) {
    const int out = width(64 << (upsamples - 1 - i));
    auto options = nn::ConvTranspose2dOptions(in, out, 4).bias(false);
    if (i == 0) {
      options.stride(1).padding(0);
    } else {
      options.stride(2).padding(1);
    }
    layers_->push_back(nn::ConvTranspose2d(options));
    layers_->push_back(nn::BatchNorm2d(out));
    layers_->push_back(nn::ReLU());
    in = out;
  }
  layers_->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, 3, 4).stride(2).padding(1).bias(false)));
  layers_->push_back(nn::Tanh());
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& latent) {
  if (latent.dim() != 2 || latent.size(1) != latent_dim_) {
    throw InvalidArgument("decoder expects [N, " + std::to_string(latent_dim_) + "] latents");
  }
  return layers_->forward(latent.view({latent.size(0), latent_dim_, 1, 1}));
}

Decoder build_decoder(int latent_dim, double width_multiplier, int output_side) {
  return Decoder(latent_dim, width_multiplier, output_side);
}

HeadImpl::HeadImpl(HeadKind kind, int in_dim, int out_dim, int jigsaw_projection)
    : kind_(kind), in_dim_(in_dim), out_dim_(out_dim) {
  if (in_dim <= 0 || out_dim <= 0) throw InvalidArgument("head dimensions must be positive");
  if (kind == HeadKind::kRotation4 && out_dim != kRotationClasses) {
    throw InvalidArgument("rotation head must have 4 outputs");
  }
  if (kind == HeadKind::kJigsaw) {
    if (jigsaw_projection <= 0) throw InvalidArgument("jigsaw projection width must be positive");
    projection_ = register_module("projection", nn::Linear(in_dim, jigsaw_projection));
    classifier_ = register_module("classifier", nn::Linear(kJigsawPatches * jigsaw_projection, out_dim));
  } else {
    classifier_ = register_module("classifier", nn::Linear(in_dim, out_dim));
  }
}

torch::Tensor HeadImpl::forward(const torch::Tensor& x) {
  if (kind_ != HeadKind::kJigsaw) {
    if (x.dim() != 2 || x.size(1) != in_dim_) throw InvalidArgument("head expects [N, " + std::to_string(in_dim_) + "] input");
    return classifier_(x);
  }
  if (x.dim() != 3 || x.size(1) != kJigsawPatches || x.size(2) != in_dim_) {
    throw InvalidArgument("jigsaw head expects [N, 9, " + std::to_string(in_dim_) + "] input");
  }
  const auto projected = torch::relu(projection_(x));  // shared across the nine positions
  return classifier_(projected.flatten(1));
}

Head build_head(HeadKind kind, int in_dim, int out_dim, int jigsaw_projection) {
  return Head(kind, in_dim, out_dim, jigsaw_projection);
}

std::int64_t parameter_count(const torch::nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

PretextModelImpl::PretextModelImpl(PretextKind kind, const BackboneConfig& backbone, int out_dim,
                                   int id_embedding_dim, int jigsaw_projection)
    : kind_(kind) {
  encoder_ = register_module("encoder", build_backbone(backbone));
  const int channels = backbone.feature_channels();
  switch (kind) {
    case PretextKind::kRotation:
      head_ = register_module("head", build_head(HeadKind::kRotation4, channels, kRotationClasses));
      break;
    case PretextKind::kJigsaw:
      head_ = register_module("head", build_head(HeadKind::kJigsaw, channels, out_dim, jigsaw_projection));
      break;
    case PretextKind::kSupervised:
      head_ = register_module("head", build_head(HeadKind::kSupervised, channels, out_dim));
      break;
    case PretextKind::kInstanceDiscrimination:
      embedding_ = register_module("embedding", nn::Linear(channels, id_embedding_dim));
      break;
    case PretextKind::kAutoencoder:
      decoder_ = register_module("decoder", build_decoder(channels, backbone.width_multiplier, backbone.input_side));
      break;
    case PretextKind::kRandomInit:
      break;
  }
}

torch::Tensor PretextModelImpl::pooled(const torch::Tensor& images) {
  return torch::adaptive_avg_pool2d(encoder_->forward(images), {1, 1}).flatten(1);
}

torch::Tensor PretextModelImpl::instance_embedding(const torch::Tensor& images) {
  if (!embedding_) throw InvalidArgument("instance_embedding on a non-ID model");
  return torch::nn::functional::normalize(embedding_(pooled(images)),
                                          torch::nn::functional::NormalizeFuncOptions().dim(1).eps(1e-12));
}

torch::Tensor PretextModelImpl::classify(const torch::Tensor& images) {
  if (!head_ || head_->kind() == HeadKind::kJigsaw) throw InvalidArgument("classify needs a linear head");
  return head_(pooled(images));
}

torch::Tensor PretextModelImpl::jigsaw_logits(const torch::Tensor& patches) {
  if (!head_ || head_->kind() != HeadKind::kJigsaw) throw InvalidArgument("jigsaw_logits on a non-Jigsaw model");
  if (patches.dim() != 5 || patches.size(1) != kJigsawPatches) {
    throw InvalidArgument("jigsaw_logits expects [N, 9, 3, p, p] patches");
  }
  const auto n = patches.size(0);
  const auto flat = patches.flatten(0, 1);  // siamese: one encoder for all patches
  const auto embeddings = pooled(flat).view({n, kJigsawPatches, -1});
  return head_(embeddings);
}

torch::Tensor PretextModelImpl::reconstruct(const torch::Tensor& images) {
  if (!decoder_) throw InvalidArgument("reconstruct on a non-autoencoder model");
  return decoder_(pooled(images));
}

void PretextModelImpl::set_state(const std::string& name, const torch::Tensor& value) {
  states_[name] = value.detach().clone();
}

torch::Tensor PretextModelImpl::state(const std::string& name) const {
  const auto it = states_.find(name);
  if (it == states_.end()) throw MissingDependency("model has no stored state '" + name + "'");
  return it->second;
}

bool PretextModelImpl::has_state(const std::string& name) const { return states_.contains(name); }

}  // namespace sslab
