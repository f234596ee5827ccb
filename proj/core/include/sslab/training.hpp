#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>
#include <torch/torch.h>

#include "sslab/data.hpp"
#include "sslab/models.hpp"
#include "sslab/pretexts.hpp"

namespace sslab {

/// Momentum SGD with step decay. Weight decay is part of the type only so it
/// can be validated as zero.
struct OptimConfig {
  double base_lr = 0.1;
  double momentum = 0.9;
  int epochs = 120;
  std::vector<int> decay_epochs{80, 100};
  double decay_factor = 10.0;
  double weight_decay = 0.0;
  int batch_size = 128;

  void validate() const;

  /// 24 epochs decayed at 16 and 20: the full schedule's proportions.
  static OptimConfig desk_preset();
  /// Linear probe schedule: 30 epochs decayed at 20 and 25, batches of 32.
  static OptimConfig probe_preset();

  bool operator==(const OptimConfig&) const = default;
};

void to_json(nlohmann::json& j, const OptimConfig& c);
void from_json(const nlohmann::json& j, OptimConfig& c);

/// base_lr / decay_factor^(number of decay epochs <= epoch)
double lr_at(int epoch, const OptimConfig& config);

/// Plain momentum SGD (no dampening, no Nesterov) at base_lr.
torch::optim::SGDOptions sgd_options(const OptimConfig& config);

/// Sets the learning rate of every parameter group.
void set_learning_rate(torch::optim::SGD& optimizer, double lr);

enum class AugmentMode { kTrain, kEval };

/// Resize, random crop and horizontal flip; nothing else.
struct AugmentPolicy {
  int resize_to = 64;
  bool random_crop = true;
  int crop_padding = 8;  // TRAIN resizes to resize_to + crop_padding, then crops resize_to
  bool horizontal_flip = true;

  void validate() const;
  bool operator==(const AugmentPolicy&) const = default;
};

void to_json(nlohmann::json& j, const AugmentPolicy& p);
void from_json(const nlohmann::json& j, AugmentPolicy& p);

/// TRAIN: resize -> random crop -> flip with probability 0.5 (when enabled).
/// EVAL: deterministic resize only.
Image augment(const Image& image, const AugmentPolicy& policy, AugmentMode mode, std::uint64_t seed);

/// Halts Rotation and Jigsaw once epoch training accuracy reaches 98%.
struct EarlierStopRule {
  double threshold = 0.98;
  bool enabled = true;

  bool applies_to(PretextKind kind) const;
  bool should_halt(PretextKind kind, std::optional<double> train_accuracy) const;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> train_accuracy;  // absent for ID and autoencoding
  double val_metric = 0.0;               // accuracy, or loss for ID and autoencoding
  double wallclock_s = 0.0;

  /// Value written to the curve's train_metric column.
  double train_metric() const { return train_accuracy.value_or(train_loss); }
};

struct TrainingCurve {
  std::vector<EpochRecord> epochs;
  bool halted_early = false;
};

/// epoch,lr,train_metric,val_metric,wallclock_s
std::string curve_to_csv(const TrainingCurve& curve);
void save_curve_csv(const TrainingCurve& curve, const std::filesystem::path& path);

/// Drives epochs 0..epochs-1, feeding each its scheduled learning rate and
/// applying the earlier-stop rule at epoch boundaries. Throws RuntimeFailure
/// naming the epoch if an epoch reports a non-finite loss.
TrainingCurve run_schedule(PretextKind kind, const OptimConfig& optim, const EarlierStopRule& rule,
                           const std::function<EpochRecord(int epoch, double lr)>& run_epoch);

/// Indices (ascending) of a stratified subset: per class max(1, floor(n * fraction)).
/// Throws naming the class when a class has no members to draw from.
std::vector<std::size_t> select_label_fraction(std::span<const int> labels, int class_count, double fraction,
                                               std::uint64_t seed);

struct PretextOptions {
  int permutation_count = 2000;
  int permutation_pool = 100000;
  int jigsaw_projection = kJigsawProjection;
  double id_temperature = 0.07;
  double id_momentum = 0.5;
  int id_embedding_dim = 128;

  void validate() const;
  bool operator==(const PretextOptions&) const = default;
};

void to_json(nlohmann::json& j, const PretextOptions& o);
void from_json(const nlohmann::json& j, PretextOptions& o);

struct TrainingSetup {
  BackboneConfig backbone;
  OptimConfig optim;
  AugmentPolicy augment;
  PretextOptions pretext;
  EarlierStopRule early_stop;
  std::uint64_t seed = 0;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  PretextModel model{nullptr};
  TrainingCurve curve;
  std::size_t train_size = 0;
};

/// Trains one pretext on the TRAIN split, logging pretext accuracy (or loss)
/// on TRAIN and VAL per epoch. kRandomInit returns the seeded initialization.
TrainResult train_pretext(PretextKind kind, const DatasetTable& dataset, const TrainingSetup& setup);

/// Cross-entropy training on a stratified label_fraction of TRAIN.
TrainResult train_supervised(const DatasetTable& dataset, const TrainingSetup& setup, double label_fraction);

/// [N, 3, H, W] float tensor from images of identical shape.
torch::Tensor to_tensor(std::span<const Image> images);
torch::Tensor to_tensor(std::span<const LabeledImage* const> images);

/// Pretext accuracy with evaluation transforms. Rotation scores all four
/// rotations of every image; Jigsaw draws one permutation per image from
/// (seed, image_id).
double evaluate_pretext_accuracy(PretextModel& model, std::span<const LabeledImage* const> images,
                                 const AugmentPolicy& policy, std::uint64_t seed, int batch_size = 128);

/// Classification accuracy of a supervised model's own head.
double evaluate_classifier_accuracy(PretextModel& model, std::span<const LabeledImage* const> images,
                                    const AugmentPolicy& policy, int batch_size = 128);

/// Mean reconstruction MSE with evaluation transforms.
double evaluate_reconstruction_loss(PretextModel& model, std::span<const LabeledImage* const> images,
                                    const AugmentPolicy& policy, int batch_size = 128);

/// Unit-norm instance embeddings [N, d] with evaluation transforms.
torch::Tensor instance_embeddings(PretextModel& model, std::span<const LabeledImage* const> images,
                                  const AugmentPolicy& policy, int batch_size = 128);

inline constexpr const char* kMemoryBankState = "memory_bank";
inline constexpr const char* kPermutationState = "permutations";

}  // namespace sslab
