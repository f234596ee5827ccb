#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>
#include <torch/torch.h>

#include "sslab/pretexts.hpp"

namespace sslab {

/// ResNet26-style encoder description. At the defaults a 3x64x64 input maps
/// to a 256x8x8 pre-pool feature map.
struct BackboneConfig {
  std::array<int, 3> stage_channels{64, 128, 256};
  int blocks_per_stage = 4;
  int input_side = 64;
  double width_multiplier = 1.0;

  void validate() const;
  int channels(int stage) const;
  int stem_channels() const { return channels(0); }
  int feature_channels() const { return channels(2); }
  int feature_side() const { return input_side / 8; }

  bool operator==(const BackboneConfig&) const = default;
};

void to_json(nlohmann::json& j, const BackboneConfig& c);
void from_json(const nlohmann::json& j, BackboneConfig& c);

class BasicBlockImpl : public torch::nn::Module {
 public:
  BasicBlockImpl(int in_channels, int out_channels, int stride);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr};
  torch::nn::BatchNorm2d bn1_{nullptr};
  torch::nn::Conv2d conv2_{nullptr};
  torch::nn::BatchNorm2d bn2_{nullptr};
  torch::nn::Conv2d shortcut_conv_{nullptr};
  torch::nn::BatchNorm2d shortcut_bn_{nullptr};
};
TORCH_MODULE(BasicBlock);

/// Stride-2 3x3 stem, then three stages of basic blocks; the first block of
/// stages two and three downsamples. Fully convolutional, so Jigsaw patches of
/// any size pass through the same weights.
class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(BackboneConfig config);
  torch::Tensor forward(const torch::Tensor& x);
  const BackboneConfig& config() const { return config_; }

 private:
  BackboneConfig config_;
  torch::nn::Conv2d stem_{nullptr};
  torch::nn::BatchNorm2d stem_bn_{nullptr};
  torch::nn::Sequential stages_{nullptr};
};
TORCH_MODULE(Encoder);

Encoder build_backbone(const BackboneConfig& config);

/// Runs the encoder in evaluation mode without gradients. `images` must be
/// [N, 3, side, side] at the configured side. Restores the training flag.
torch::Tensor extract_prepool(Encoder& encoder, const torch::Tensor& images);

/// Pooling grid g such that target_dim == channels * g * g; g must be 1, 4 or
/// 6, or equal to the map side (no pooling).
int pool_grid_for_dim(int channels, int map_side, int target_dim);

/// Adaptive average pooling of [N, C, H, W] maps to a g x g grid, flattened
/// to [N, C * g * g]. Windows overlap when H is not a multiple of g.
torch::Tensor pool_features(const torch::Tensor& maps, int target_dim);

/// Transpose-convolution generator: latent -> 512w x 4 x 4 -> ... -> 3 x 64 x 64.
/// Kernel 4 throughout; first layer stride 1 without padding, the rest stride 2
/// padding 1; BatchNorm + ReLU between layers and Tanh at the end.
class DecoderImpl : public torch::nn::Module {
 public:
  DecoderImpl(int latent_dim, double width_multiplier, int output_side = 64);
  torch::Tensor forward(const torch::Tensor& latent);
  torch::nn::Sequential& layers() { return layers_; }
  int latent_dim() const { return latent_dim_; }

 private:
  int latent_dim_;
  torch::nn::Sequential layers_{nullptr};
};
TORCH_MODULE(Decoder);

Decoder build_decoder(int latent_dim = 256, double width_multiplier = 1.0, int output_side = 64);

enum class HeadKind { kRotation4, kJigsaw, kSupervised, kLinearProbe };

inline constexpr int kJigsawProjection = 128;

/// Linear heads map pooled features to logits. The Jigsaw head takes the nine
/// pooled patch embeddings [N, 9, in_dim], projects each through one shared
/// linear layer (plus ReLU), concatenates and classifies over permutations.
class HeadImpl : public torch::nn::Module {
 public:
  HeadImpl(HeadKind kind, int in_dim, int out_dim, int jigsaw_projection = kJigsawProjection);
  torch::Tensor forward(const torch::Tensor& x);
  HeadKind kind() const { return kind_; }
  int in_dim() const { return in_dim_; }
  int out_dim() const { return out_dim_; }
  torch::nn::Linear& classifier() { return classifier_; }

 private:
  HeadKind kind_;
  int in_dim_;
  int out_dim_;
  torch::nn::Linear projection_{nullptr};
  torch::nn::Linear classifier_{nullptr};
};
TORCH_MODULE(Head);

Head build_head(HeadKind kind, int in_dim, int out_dim, int jigsaw_projection = kJigsawProjection);

std::int64_t parameter_count(const torch::nn::Module& module);

/// Everything one pretext run trains: the shared encoder plus the pieces its
/// objective needs. Unused members stay null.
class PretextModelImpl : public torch::nn::Module {
 public:
  PretextModelImpl(PretextKind kind, const BackboneConfig& backbone, int out_dim,
                   int id_embedding_dim = 128, int jigsaw_projection = kJigsawProjection);

  PretextKind kind() const { return kind_; }
  Encoder& encoder() { return encoder_; }
  Head& head() { return head_; }
  Decoder& decoder() { return decoder_; }
  torch::nn::Linear& embedding() { return embedding_; }

  /// Globally pooled encoder features [N, C].
  torch::Tensor pooled(const torch::Tensor& images);
  /// Unit-norm instance embeddings [N, id_dim].
  torch::Tensor instance_embedding(const torch::Tensor& images);
  /// Logits for the Rotation / supervised head.
  torch::Tensor classify(const torch::Tensor& images);
  /// Logits over permutations for [N, 9, 3, p, p] patch stacks.
  torch::Tensor jigsaw_logits(const torch::Tensor& patches);
  torch::Tensor reconstruct(const torch::Tensor& images);

  /// Buffers persisted with the checkpoint (memory bank, permutation set).
  void set_state(const std::string& name, const torch::Tensor& value);
  torch::Tensor state(const std::string& name) const;
  bool has_state(const std::string& name) const;
  const std::map<std::string, torch::Tensor>& states() const { return states_; }

 private:
  PretextKind kind_;
  Encoder encoder_{nullptr};
  Head head_{nullptr};
  Decoder decoder_{nullptr};
  torch::nn::Linear embedding_{nullptr};
  std::map<std::string, torch::Tensor> states_;
};
TORCH_MODULE(PretextModel);

// ---------------------------------------------------------------------------
// Checkpoints: <stem>.pt (named tensors) + <stem>.json (manifest).

struct CheckpointManifest {
  BackboneConfig backbone;
  PretextKind pretext = PretextKind::kRandomInit;
  int out_dim = 0;
  int id_embedding_dim = 128;
  int jigsaw_projection = kJigsawProjection;
  int epoch = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> states;  // names of persisted buffers
  std::string notes;

  bool operator==(const CheckpointManifest&) const = default;
};

void to_json(nlohmann::json& j, const CheckpointManifest& m);
void from_json(const nlohmann::json& j, CheckpointManifest& m);

void save_checkpoint(const std::filesystem::path& stem, PretextModel& model, CheckpointManifest manifest);
CheckpointManifest load_manifest(const std::filesystem::path& stem);
PretextModel load_checkpoint(const std::filesystem::path& stem);

}  // namespace sslab
