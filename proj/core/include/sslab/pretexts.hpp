#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <torch/types.h>

#include "sslab/image.hpp"

namespace sslab {

enum class PretextKind {
  kRotation,
  kJigsaw,
  kInstanceDiscrimination,
  kAutoencoder,
  kSupervised,
  kRandomInit,
};

std::string_view to_string(PretextKind kind);
PretextKind pretext_kind_from_string(std::string_view text);

/// Whether the pretext has a classification accuracy (Rotation, Jigsaw).
bool has_pretext_accuracy(PretextKind kind);

// ---------------------------------------------------------------------------
// Rotation

inline constexpr int kRotationClasses = 4;

/// Rotates counter-clockwise by 90 * r degrees, r in {0, 1, 2, 3}.
Image apply_rotation(const Image& image, int r);

struct RotationBatch {
  std::vector<Image> inputs;
  std::vector<int> targets;  // r such that inputs[i] == apply_rotation(source[i], r)
};

RotationBatch build_rotation_batch(std::span<const Image> images, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Jigsaw

using Permutation = std::vector<int>;

/// Ordered set of distinct permutations; entry 0 is the identity.
struct PermutationSet {
  int n_patches = 0;
  std::vector<Permutation> perms;
  int min_hamming = 0;  // minimum pairwise Hamming distance, 0 for a single entry

  std::size_t size() const { return perms.size(); }

  /// One permutation per line, space separated, identity first.
  std::string to_text() const;
  static PermutationSet from_text(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static PermutationSet load(const std::filesystem::path& path);
};

int hamming_distance(std::span<const int> a, std::span<const int> b);

/// Candidate pool the greedy selection draws from, identity excluded. When the
/// requested pool covers at least half of n! every permutation is enumerated
/// and shuffled; otherwise distinct permutations are rejection sampled.
std::vector<Permutation> permutation_candidates(int n_patches, std::size_t pool_size,
                                                std::uint64_t seed);

/// Greedy max-min Hamming selection starting from the identity. Ties go to
/// the earliest candidate in pool order.
PermutationSet generate_permutation_set(int n_patches, std::size_t size, std::size_t pool_size,
                                        std::uint64_t seed);

enum class JitterMode { kTrain, kEval };

inline constexpr int kGridSide = 3;
inline constexpr int kJigsawPatches = kGridSide * kGridSide;

/// Side of the patches cut from a square image of `side` pixels.
int jigsaw_patch_side(int side);

/// Splits a square image into a 3x3 grid (cell = floor(side / 3)) and cuts a
/// (cell - 2) sub-patch from each cell: random offset in TRAIN, centred in
/// EVAL. Row-major patch order.
std::array<Image, kJigsawPatches> extract_grid_patches(const Image& image, JitterMode mode,
                                                       std::uint64_t seed);

bool is_permutation(std::span<const int> perm, int n);
Permutation inverse_permutation(std::span<const int> perm);

/// Output position i holds patches[perm[i]].
std::array<Image, kJigsawPatches> permute_patches(const std::array<Image, kJigsawPatches>& patches,
                                                  std::span<const int> perm);

// ---------------------------------------------------------------------------
// Instance discrimination

/// One unit-norm row per training image.
///
/// Single writer: updates must be serialized by the caller; concurrent reads
/// between updates are fine.
class MemoryBank {
 public:
  MemoryBank() = default;
  MemoryBank(torch::Tensor rows, double momentum, double temperature);

  /// Rows drawn from a seeded Gaussian and normalized.
  static MemoryBank random(std::int64_t rows, std::int64_t dim, double momentum,
                           double temperature, std::uint64_t seed);

  std::int64_t size() const { return rows_.size(0); }
  std::int64_t dim() const { return rows_.size(1); }
  double momentum() const { return momentum_; }
  double temperature() const { return temperature_; }

  /// [size, dim] float32, contiguous.
  const torch::Tensor& rows() const { return rows_; }
  std::span<const float> row(std::int64_t index) const;

  /// row <- normalize(momentum * row + (1 - momentum) * feature)
  void update(std::int64_t index, std::span<const float> feature);
  /// Batched update from a [B, dim] tensor of unit features.
  void update(const torch::Tensor& indices, const torch::Tensor& features);

 private:
  torch::Tensor rows_;
  double momentum_ = 0.5;
  double temperature_ = 0.07;
};

/// -log softmax(bank * f / tau)[own], full softmax over every bank row.
double nonparam_softmax_loss(std::span<const float> feature, std::int64_t own_index,
                             const MemoryBank& bank);

/// Batched form used in training: mean over rows of `features` [B, dim].
/// Differentiable in `features`; the bank is treated as a constant.
torch::Tensor nonparam_softmax_loss(const torch::Tensor& features, const torch::Tensor& own_indices,
                                    const MemoryBank& bank);

// ---------------------------------------------------------------------------
// Losses shared by the training loops

/// Mean squared error over every pixel and channel.
double reconstruction_loss(const Image& original, const Image& reconstruction);
torch::Tensor reconstruction_loss(const torch::Tensor& original, const torch::Tensor& reconstruction);

/// Softmax cross-entropy, used by Rotation, Jigsaw and supervised heads.
torch::Tensor classification_loss(const torch::Tensor& logits, const torch::Tensor& targets);

}  // namespace sslab
