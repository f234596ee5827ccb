#include "sslab/pretexts.hpp"

#include <torch/torch.h>

#include "sslab/error.hpp"
#include "sslab/rng.hpp"

namespace sslab {

std::string_view to_string(PretextKind kind) {
  switch (kind) {
    case PretextKind::kRotation: return "rotation";
    case PretextKind::kJigsaw: return "jigsaw";
    case PretextKind::kInstanceDiscrimination: return "instance_discrimination";
    case PretextKind::kAutoencoder: return "autoencoder";
    case PretextKind::kSupervised: return "supervised";
    case PretextKind::kRandomInit: return "random_init";
  }
  return "unknown";
}

PretextKind pretext_kind_from_string(std::string_view text) {
  for (const auto kind : {PretextKind::kRotation, PretextKind::kJigsaw,
                          PretextKind::kInstanceDiscrimination, PretextKind::kAutoencoder,
                          PretextKind::kSupervised, PretextKind::kRandomInit}) {
    if (to_string(kind) == text) return kind;
  }
  throw InvalidArgument("unknown pretext kind '" + std::string(text) + "'");
}

bool has_pretext_accuracy(PretextKind kind) {
  return kind == PretextKind::kRotation || kind == PretextKind::kJigsaw;
}

Image apply_rotation(const Image& image, int r) {
  if (r < 0 || r >= kRotationClasses) throw InvalidArgument("rotation label must be in {0,1,2,3}");
  return rotate_quarter_turns(image, r);
}

RotationBatch build_rotation_batch(std::span<const Image> images, std::uint64_t seed) {
  if (images.empty()) throw InvalidArgument("build_rotation_batch: empty image list");
  Rng rng(seed);
  RotationBatch batch;
  batch.inputs.reserve(images.size());
  batch.targets.reserve(images.size());
  for (const auto& image : images) {
    const int r = static_cast<int>(rng.uniform_index(kRotationClasses));
    batch.inputs.push_back(apply_rotation(image, r));
    batch.targets.push_back(r);
  }
  return batch;
}

int jigsaw_patch_side(int side) {
  if (side < 33) throw InvalidArgument("jigsaw needs images of at least 33 pixels, got " + std::to_string(side));
  return side / kGridSide - 2;
}

std::array<Image, kJigsawPatches> extract_grid_patches(const Image& image, JitterMode mode,
                                                       std::uint64_t seed) {
  if (!image.square()) throw InvalidArgument("extract_grid_patches: image must be square");
  const int patch = jigsaw_patch_side(image.width);
  const int cell = image.width / kGridSide;
  Rng rng(seed);
  std::array<Image, kJigsawPatches> out;
  for (int row = 0; row < kGridSide; ++row) {
    for (int col = 0; col < kGridSide; ++col) {
      int dy = 1;
      int dx = 1;
      if (mode == JitterMode::kTrain) {
        dy = static_cast<int>(rng.uniform_index(cell - patch + 1));
        dx = static_cast<int>(rng.uniform_index(cell - patch + 1));
      }
      out[row * kGridSide + col] = crop(image, row * cell + dy, col * cell + dx, patch, patch);
    }
  }
  return out;
}

bool is_permutation(std::span<const int> perm, int n) {
  if (static_cast<int>(perm.size()) != n) return false;
  std::vector<bool> seen(n, false);
  for (const int v : perm) {
    if (v < 0 || v >= n || seen[v]) return false;
    seen[v] = true;
  }
  return true;
}

Permutation inverse_permutation(std::span<const int> perm) {
  if (!is_permutation(perm, static_cast<int>(perm.size()))) throw InvalidArgument("not a permutation");
  Permutation inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = static_cast<int>(i);
  return inv;
}

std::array<Image, kJigsawPatches> permute_patches(const std::array<Image, kJigsawPatches>& patches,
                                                  std::span<const int> perm) {
  if (!is_permutation(perm, kJigsawPatches)) throw InvalidArgument("permute_patches: invalid permutation");
  std::array<Image, kJigsawPatches> out;
  for (int i = 0; i < kJigsawPatches; ++i) out[i] = patches[perm[i]];
  return out;
}

double reconstruction_loss(const Image& original, const Image& reconstruction) {
  if (original.channels != reconstruction.channels || original.height != reconstruction.height ||
      original.width != reconstruction.width) {
    throw InvalidArgument("reconstruction_loss: shape mismatch");
  }
  if (!in_unit_range(reconstruction)) throw InvalidArgument("reconstruction_loss: reconstruction outside [-1, 1]");
  if (original.size() == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    const double d = static_cast<double>(original.data[i]) - reconstruction.data[i];
    sum += d * d;
  }
  return sum / static_cast<double>(original.size());
}

torch::Tensor reconstruction_loss(const torch::Tensor& original, const torch::Tensor& reconstruction) {
  if (original.sizes() != reconstruction.sizes()) throw InvalidArgument("reconstruction_loss: shape mismatch");
  return torch::mse_loss(reconstruction, original);
}

torch::Tensor classification_loss(const torch::Tensor& logits, const torch::Tensor& targets) {
  return torch::nn::functional::cross_entropy(logits, targets);
}

}  // namespace sslab
