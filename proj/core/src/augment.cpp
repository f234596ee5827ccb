#include <cmath>

#include <nlohmann/json.hpp>

#include "sslab/error.hpp"
#include "sslab/rng.hpp"
#include "sslab/training.hpp"

namespace sslab {

void OptimConfig::validate() const {
  if (!(base_lr > 0.0)) throw InvalidArgument("optim.base_lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("optim.momentum must be in [0, 1)");
  if (epochs < 1) throw InvalidArgument("optim.epochs must be at least 1");
  for (std::size_t i = 0; i < decay_epochs.size(); ++i) {
    if (decay_epochs[i] <= 0 || decay_epochs[i] >= epochs) {
      throw InvalidArgument("optim.decay_epochs must lie in (0, epochs)");
    }
    if (i > 0 && decay_epochs[i] <= decay_epochs[i - 1]) {
      throw InvalidArgument("optim.decay_epochs must be strictly increasing");
    }
  }
  if (!(decay_factor >= 1.0)) throw InvalidArgument("optim.decay_factor must be at least 1");
  if (weight_decay != 0.0) throw InvalidArgument("optim.weight_decay must be exactly 0");
  if (batch_size < 1) throw InvalidArgument("optim.batch_size must be positive");
}

OptimConfig OptimConfig::desk_preset() {
  OptimConfig c;
  c.epochs = 24;
  c.decay_epochs = {16, 20};
  return c;
}

OptimConfig OptimConfig::probe_preset() {
  OptimConfig c;
  c.epochs = 30;
  c.decay_epochs = {20, 25};
  c.batch_size = 32;
  return c;
}

void to_json(nlohmann::json& j, const OptimConfig& c) {
  j = nlohmann::json{{"base_lr", c.base_lr},           {"momentum", c.momentum},
                     {"epochs", c.epochs},             {"decay_epochs", c.decay_epochs},
                     {"decay_factor", c.decay_factor}, {"weight_decay", c.weight_decay},
                     {"batch_size", c.batch_size}};
}

void from_json(const nlohmann::json& j, OptimConfig& c) {
  const OptimConfig d;
  c.base_lr = j.value("base_lr", d.base_lr);
  c.momentum = j.value("momentum", d.momentum);
  c.epochs = j.value("epochs", d.epochs);
  c.decay_epochs = j.value("decay_epochs", d.decay_epochs);
  c.decay_factor = j.value("decay_factor", d.decay_factor);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.batch_size = j.value("batch_size", d.batch_size);
}

double lr_at(int epoch, const OptimConfig& config) {
  if (epoch < 0 || epoch >= config.epochs) {
    throw InvalidArgument("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                          std::to_string(config.epochs) + ")");
  }
  int drops = 0;
  for (const int e : config.decay_epochs) drops += e <= epoch ? 1 : 0;
  return config.base_lr / std::pow(config.decay_factor, drops);
}

torch::optim::SGDOptions sgd_options(const OptimConfig& config) {
  return torch::optim::SGDOptions(config.base_lr)
      .momentum(config.momentum)
      .dampening(0.0)
      .weight_decay(config.weight_decay)
      .nesterov(false);
}

void set_learning_rate(torch::optim::SGD& optimizer, double lr) {
  for (auto& group : optimizer.param_groups()) {
    static_cast<torch::optim::SGDOptions&>(group.options()).lr(lr);
  }
}

void AugmentPolicy::validate() const {
  if (resize_to < 8) throw InvalidArgument("augment.resize_to must be at least 8");
  if (crop_padding < 0) throw InvalidArgument("augment.crop_padding must be non-negative");
}

void to_json(nlohmann::json& j, const AugmentPolicy& p) {
  j = nlohmann::json{{"resize_to", p.resize_to},
                     {"random_crop", p.random_crop},
                     {"crop_padding", p.crop_padding},
                     {"horizontal_flip", p.horizontal_flip}};
}

void from_json(const nlohmann::json& j, AugmentPolicy& p) {
  const AugmentPolicy d;
  p.resize_to = j.value("resize_to", d.resize_to);
  p.random_crop = j.value("random_crop", d.random_crop);
  p.crop_padding = j.value("crop_padding", d.crop_padding);
  p.horizontal_flip = j.value("horizontal_flip", d.horizontal_flip);
}

Image augment(const Image& image, const AugmentPolicy& policy, AugmentMode mode, std::uint64_t seed) {
  const int side = policy.resize_to;
  if (mode == AugmentMode::kEval) return resize(image, side, side);

  Rng rng(seed);
  Image out;
  if (policy.random_crop && policy.crop_padding > 0) {
    const int big = side + policy.crop_padding;
    const Image enlarged = resize(image, big, big);
    const int top = static_cast<int>(rng.uniform_index(policy.crop_padding + 1));
    const int left = static_cast<int>(rng.uniform_index(policy.crop_padding + 1));
    out = crop(enlarged, top, left, side, side);
  } else {
    out = resize(image, side, side);
  }
  if (policy.horizontal_flip && rng.bernoulli(0.5)) out = flip_horizontal(out);
  return out;
}

bool EarlierStopRule::applies_to(PretextKind kind) const {
  return enabled && (kind == PretextKind::kRotation || kind == PretextKind::kJigsaw);
}

bool EarlierStopRule::should_halt(PretextKind kind, std::optional<double> train_accuracy) const {
  return applies_to(kind) && train_accuracy.has_value() && *train_accuracy >= threshold;
}

}  // namespace sslab
