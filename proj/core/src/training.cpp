#include "sslab/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sslab/error.hpp"
#include "sslab/rng.hpp"

namespace sslab {

void PretextOptions::validate() const {
  if (permutation_count < 1) throw InvalidArgument("pretext.permutation_count must be positive");
  if (permutation_pool < permutation_count) throw InvalidArgument("pretext.permutation_pool must be >= permutation_count");
  if (jigsaw_projection < 1) throw InvalidArgument("pretext.jigsaw_projection must be positive");
  if (!(id_temperature > 0.0)) throw InvalidArgument("pretext.id_temperature must be positive");
  if (!(id_momentum >= 0.0 && id_momentum <= 1.0)) throw InvalidArgument("pretext.id_momentum must be in [0, 1]");
  if (id_embedding_dim < 1) throw InvalidArgument("pretext.id_embedding_dim must be positive");
}

void to_json(nlohmann::json& j, const PretextOptions& o) {
  j = nlohmann::json{{"permutation_count", o.permutation_count}, {"permutation_pool", o.permutation_pool},
                     {"jigsaw_projection", o.jigsaw_projection}, {"id_temperature", o.id_temperature},
                     {"id_momentum", o.id_momentum},             {"id_embedding_dim", o.id_embedding_dim}};
}

void from_json(const nlohmann::json& j, PretextOptions& o) {
  const PretextOptions d;
  o.permutation_count = j.value("permutation_count", d.permutation_count);
  o.permutation_pool = j.value("permutation_pool", d.permutation_pool);
  o.jigsaw_projection = j.value("jigsaw_projection", d.jigsaw_projection);
  o.id_temperature = j.value("id_temperature", d.id_temperature);
  o.id_momentum = j.value("id_momentum", d.id_momentum);
  o.id_embedding_dim = j.value("id_embedding_dim", d.id_embedding_dim);
}

std::string curve_to_csv(const TrainingCurve& curve) {
  std::ostringstream out;
  out << "epoch,lr,train_metric,val_metric,wallclock_s\n";
  out << std::setprecision(10);
  for (const auto& e : curve.epochs) {
    out << e.epoch << ',' << e.lr << ',' << e.train_metric() << ',' << e.val_metric << ','
        << std::fixed << std::setprecision(3) << e.wallclock_s << std::defaultfloat << std::setprecision(10)
        << '\n';
  }
  return out.str();
}

void save_curve_csv(const TrainingCurve& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << curve_to_csv(curve);
  if (!out) throw RuntimeFailure("cannot write training curve " + path.string());
}

TrainingCurve run_schedule(PretextKind kind, const OptimConfig& optim, const EarlierStopRule& rule,
                           const std::function<EpochRecord(int epoch, double lr)>& run_epoch) {
  optim.validate();
  TrainingCurve curve;
  for (int epoch = 0; epoch < optim.epochs; ++epoch) {
    const double lr = lr_at(epoch, optim);
    EpochRecord record = run_epoch(epoch, lr);
    record.epoch = epoch;
    record.lr = lr;
    if (!std::isfinite(record.train_loss)) {
      throw RuntimeFailure("non-finite training loss at epoch " + std::to_string(epoch));
    }
    curve.epochs.push_back(record);
    if (rule.should_halt(kind, record.train_accuracy)) {
      curve.halted_early = true;
      break;
    }
  }
  return curve;
}

std::vector<std::size_t> select_label_fraction(std::span<const int> labels, int class_count, double fraction,
                                               std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidArgument("label fraction must be in (0, 1]");
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(class_count));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= class_count) throw InvalidArgument("label out of range in select_label_fraction");
    members[labels[i]].push_back(i);
  }
  std::vector<std::size_t> out;
  for (int c = 0; c < class_count; ++c) {
    auto& idx = members[c];
    if (idx.empty()) {
      throw InvalidArgument("class " + std::to_string(c) + " has no training members at label fraction " +
                            std::to_string(fraction));
    }
    if (fraction < 1.0) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
      rng.shuffle(std::span<std::size_t>(idx));
      const auto keep = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::floor(static_cast<double>(idx.size()) * fraction + 1e-9)));
      idx.resize(keep);
    }
    out.insert(out.end(), idx.begin(), idx.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

torch::Tensor to_tensor(std::span<const Image> images) {
  if (images.empty()) throw InvalidArgument("to_tensor: no images");
  const auto& first = images.front();
  auto out = torch::empty({static_cast<std::int64_t>(images.size()), first.channels, first.height, first.width});
  float* dst = out.data_ptr<float>();
  for (const auto& image : images) {
    if (image.channels != first.channels || image.height != first.height || image.width != first.width) {
      throw InvalidArgument("to_tensor: images differ in shape");
    }
    dst = std::copy(image.data.begin(), image.data.end(), dst);
  }
  return out;
}

torch::Tensor to_tensor(std::span<const LabeledImage* const> images) {
  std::vector<Image> pixels;
  pixels.reserve(images.size());
  for (const auto* item : images) pixels.push_back(item->pixels);
  return to_tensor(pixels);
}

namespace {

using Clock = std::chrono::steady_clock;
using ItemList = std::vector<const LabeledImage*>;

// Runs `fn` with the model in eval mode and gradients off.
template <typename Fn>
auto evaluating(PretextModel& model, Fn fn) {
  const bool was_training = model->is_training();
  model->eval();
  torch::NoGradGuard no_grad;
  auto result = fn();
  model->train(was_training);
  return result;
}

std::vector<Image> eval_images(std::span<const LabeledImage* const> items, const AugmentPolicy& policy) {
  std::vector<Image> out;
  out.reserve(items.size());
  for (const auto* item : items) out.push_back(augment(item->pixels, policy, AugmentMode::kEval, 0));
  return out;
}

std::int64_t count_correct(const torch::Tensor& logits, const torch::Tensor& targets) {
  return logits.argmax(1).eq(targets).sum().item<std::int64_t>();
}

torch::Tensor labels_tensor(const std::vector<std::int64_t>& values) {
  return torch::tensor(values, torch::kInt64);
}

torch::Tensor jigsaw_stack(const std::vector<std::array<Image, kJigsawPatches>>& stacks) {
  std::vector<Image> flat;
  flat.reserve(stacks.size() * kJigsawPatches);
  for (const auto& s : stacks) flat.insert(flat.end(), s.begin(), s.end());
  const auto t = to_tensor(flat);
  return t.view({static_cast<std::int64_t>(stacks.size()), kJigsawPatches, t.size(1), t.size(2), t.size(3)});
}

std::vector<Permutation> stored_permutations(const PretextModel& model) {
  const auto t = model->state(kPermutationState).to(torch::kInt64).contiguous();
  std::vector<Permutation> perms(static_cast<std::size_t>(t.size(0)));
  const auto acc = t.accessor<std::int64_t, 2>();
  for (std::int64_t i = 0; i < t.size(0); ++i) {
    for (std::int64_t j = 0; j < t.size(1); ++j) perms[i].push_back(static_cast<int>(acc[i][j]));
  }
  return perms;
}

void validate_setup(const DatasetTable& dataset, const TrainingSetup& setup) {
  setup.backbone.validate();
  setup.optim.validate();
  setup.augment.validate();
  setup.pretext.validate();
  if (setup.augment.resize_to != setup.backbone.input_side) {
    throw InvalidArgument("augment.resize_to (" + std::to_string(setup.augment.resize_to) +
                          ") must equal backbone.input_side (" + std::to_string(setup.backbone.input_side) + ")");
  }
  if (!dataset.has_split()) throw InvalidArgument("dataset '" + dataset.name() + "' has no split");
  if (dataset.in_split(Split::kTrain).empty()) throw InvalidArgument("dataset '" + dataset.name() + "' has an empty TRAIN split");
  if (dataset.in_split(Split::kVal).empty()) throw InvalidArgument("dataset '" + dataset.name() + "' has an empty VAL split");
}

void seed_torch(std::uint64_t seed) {
  torch::manual_seed(seed & 0x7fffffffffffffffULL);
}

// One optimisation pass over `items`. `step` receives the batch positions and
// per-sample seeds and returns (loss, correct) for the batch.
struct BatchOutcome {
  double loss = 0.0;
  std::int64_t correct = 0;
};

class EpochRunner {
 public:
  EpochRunner(PretextModel model, const TrainingSetup& setup)
      : model_(std::move(model)),
        setup_(setup),
        optimizer_(model_->parameters(), sgd_options(setup.optim)) {}

  template <typename Step>
  std::pair<double, double> run(int epoch, double lr, std::size_t count, Step step) {
    set_learning_rate(optimizer_, lr);
    model_->train();
    const std::uint64_t epoch_seed = derive_seed(derive_seed(setup_.seed, "epoch"), static_cast<std::uint64_t>(epoch));
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(epoch_seed);
    rng.shuffle(std::span<std::size_t>(order));

    double loss_sum = 0.0;
    std::int64_t correct = 0;
    const auto batch = static_cast<std::size_t>(setup_.optim.batch_size);
    for (std::size_t start = 0; start < count; start += batch) {
      const std::size_t end = std::min(count, start + batch);
      std::vector<std::size_t> positions(order.begin() + start, order.begin() + end);
      std::vector<std::uint64_t> seeds;
      for (std::size_t k = start; k < end; ++k) seeds.push_back(derive_seed(epoch_seed, static_cast<std::uint64_t>(k)));
      optimizer_.zero_grad();
      const auto [loss, batch_correct] = step(positions, seeds);
      if (!std::isfinite(loss)) {
        throw RuntimeFailure("non-finite training loss at epoch " + std::to_string(epoch));
      }
      optimizer_.step();
      loss_sum += loss * static_cast<double>(end - start);
      correct += batch_correct;
    }
    return {loss_sum / static_cast<double>(count), static_cast<double>(correct) / static_cast<double>(count)};
  }

  PretextModel& model() { return model_; }

 private:
  PretextModel model_;
  const TrainingSetup& setup_;
  torch::optim::SGD optimizer_;
};

std::vector<Image> train_images(const ItemList& items, const std::vector<std::size_t>& positions,
                                const std::vector<std::uint64_t>& seeds, const AugmentPolicy& policy) {
  std::vector<Image> out;
  out.reserve(positions.size());
  for (std::size_t k = 0; k < positions.size(); ++k) {
    out.push_back(augment(items[positions[k]]->pixels, policy, AugmentMode::kTrain, seeds[k]));
  }
  return out;
}

double id_holdout_loss(PretextModel& model, const ItemList& items, const TrainingSetup& setup) {
  if (items.size() < 2) return 0.0;
  const auto emb = instance_embeddings(model, items, setup.augment, setup.optim.batch_size);
  const MemoryBank bank(emb, setup.pretext.id_momentum, setup.pretext.id_temperature);
  const auto own = torch::arange(static_cast<std::int64_t>(items.size()), torch::kInt64);
  torch::NoGradGuard no_grad;
  return nonparam_softmax_loss(emb, own, bank).item<double>();
}

TrainResult train_loop(PretextKind kind, const DatasetTable& dataset, const TrainingSetup& setup,
                       const ItemList& train_items) {
  const ItemList val_items = dataset.in_split(Split::kVal);
  const auto& policy = setup.augment;

  int out_dim = 0;
  PermutationSet perms;
  if (kind == PretextKind::kJigsaw) {
    jigsaw_patch_side(policy.resize_to);
    perms = generate_permutation_set(kJigsawPatches, static_cast<std::size_t>(setup.pretext.permutation_count),
                                     static_cast<std::size_t>(setup.pretext.permutation_pool),
                                     derive_seed(setup.seed, "permutations"));
    out_dim = static_cast<int>(perms.size());
  } else if (kind == PretextKind::kSupervised) {
    out_dim = dataset.class_count();
  }

  seed_torch(derive_seed(setup.seed, "init"));
  PretextModel model(kind, setup.backbone, out_dim, setup.pretext.id_embedding_dim, setup.pretext.jigsaw_projection);
  if (kind == PretextKind::kJigsaw) {
    auto t = torch::empty({static_cast<std::int64_t>(perms.size()), kJigsawPatches}, torch::kInt64);
    for (std::size_t i = 0; i < perms.size(); ++i) {
      for (int j = 0; j < kJigsawPatches; ++j) t[static_cast<std::int64_t>(i)][j] = perms.perms[i][j];
    }
    model->set_state(kPermutationState, t);
  }

  TrainResult result;
  result.train_size = train_items.size();
  if (kind == PretextKind::kRandomInit) {
    result.model = model;
    result.model->eval();
    return result;
  }

  std::optional<MemoryBank> bank;
  if (kind == PretextKind::kInstanceDiscrimination) {
    bank = MemoryBank::random(static_cast<std::int64_t>(train_items.size()), setup.pretext.id_embedding_dim,
                              setup.pretext.id_momentum, setup.pretext.id_temperature, derive_seed(setup.seed, "bank"));
  }

  EpochRunner runner(model, setup);
  const auto start = Clock::now();
  const std::uint64_t val_seed = derive_seed(setup.seed, "val");

  auto step = [&](const std::vector<std::size_t>& positions, const std::vector<std::uint64_t>& seeds) {
    auto& m = runner.model();
    auto images = train_images(train_items, positions, seeds, policy);
    BatchOutcome outcome;
    torch::Tensor loss;
    switch (kind) {
      case PretextKind::kRotation: {
        const auto batch = build_rotation_batch(images, derive_seed(seeds.front(), "rotation"));
        const auto targets = labels_tensor({batch.targets.begin(), batch.targets.end()});
        const auto logits = m->classify(to_tensor(batch.inputs));
        loss = classification_loss(logits, targets);
        outcome.correct = count_correct(logits.detach(), targets);
        break;
      }
      case PretextKind::kJigsaw: {
        std::vector<std::array<Image, kJigsawPatches>> stacks;
        std::vector<std::int64_t> targets;
        for (std::size_t k = 0; k < images.size(); ++k) {
          Rng rng(derive_seed(seeds[k], "jigsaw"));
          const auto idx = rng.uniform_index(perms.size());
          const auto patches = extract_grid_patches(images[k], JitterMode::kTrain, rng.next());
          stacks.push_back(permute_patches(patches, perms.perms[idx]));
          targets.push_back(static_cast<std::int64_t>(idx));
        }
        const auto t = labels_tensor(targets);
        const auto logits = m->jigsaw_logits(jigsaw_stack(stacks));
        loss = classification_loss(logits, t);
        outcome.correct = count_correct(logits.detach(), t);
        break;
      }
      case PretextKind::kInstanceDiscrimination: {
        std::vector<std::int64_t> own(positions.begin(), positions.end());
        const auto own_t = labels_tensor(own);
        const auto emb = m->instance_embedding(to_tensor(images));
        loss = nonparam_softmax_loss(emb, own_t, *bank);
        loss.backward();
        bank->update(own_t, emb.detach());
        outcome.loss = loss.item<double>();
        return std::pair<double, std::int64_t>{outcome.loss, 0};
      }
      case PretextKind::kAutoencoder: {
        const auto x = to_tensor(images);
        loss = reconstruction_loss(x, m->reconstruct(x));
        break;
      }
      case PretextKind::kSupervised: {
        std::vector<std::int64_t> labels;
        for (const auto p : positions) labels.push_back(train_items[p]->class_id);
        const auto t = labels_tensor(labels);
        const auto logits = m->classify(to_tensor(images));
        loss = classification_loss(logits, t);
        outcome.correct = count_correct(logits.detach(), t);
        break;
      }
      case PretextKind::kRandomInit:
        break;
    }
    loss.backward();
    return std::pair<double, std::int64_t>{loss.item<double>(), outcome.correct};
  };

  const bool has_accuracy = kind != PretextKind::kInstanceDiscrimination && kind != PretextKind::kAutoencoder;
  auto run_epoch = [&](int epoch, double lr) {
    const auto [loss, accuracy] = runner.run(epoch, lr, train_items.size(), step);
    EpochRecord record;
    record.train_loss = loss;
    if (has_accuracy) record.train_accuracy = accuracy;
    auto& m = runner.model();
    switch (kind) {
      case PretextKind::kRotation:
      case PretextKind::kJigsaw:
        record.val_metric = evaluate_pretext_accuracy(m, val_items, policy, val_seed, setup.optim.batch_size);
        break;
      case PretextKind::kSupervised:
        record.val_metric = evaluate_classifier_accuracy(m, val_items, policy, setup.optim.batch_size);
        break;
      case PretextKind::kAutoencoder:
        record.val_metric = evaluate_reconstruction_loss(m, val_items, policy, setup.optim.batch_size);
        break;
      case PretextKind::kInstanceDiscrimination:
        record.val_metric = id_holdout_loss(m, val_items, setup);
        break;
      case PretextKind::kRandomInit:
        break;
    }
    record.wallclock_s = std::chrono::duration<double>(Clock::now() - start).count();
    record.epoch = epoch;
    record.lr = lr;
    if (setup.on_epoch) setup.on_epoch(record);
    return record;
  };

  result.curve = run_schedule(kind, setup.optim, setup.early_stop, run_epoch);
  if (bank) runner.model()->set_state(kMemoryBankState, bank->rows());
  result.model = runner.model();
  result.model->eval();
  return result;
}

}  // namespace

TrainResult train_pretext(PretextKind kind, const DatasetTable& dataset, const TrainingSetup& setup) {
  if (kind == PretextKind::kSupervised) return train_supervised(dataset, setup, 1.0);
  validate_setup(dataset, setup);
  return train_loop(kind, dataset, setup, dataset.in_split(Split::kTrain));
}

TrainResult train_supervised(const DatasetTable& dataset, const TrainingSetup& setup, double label_fraction) {
  validate_setup(dataset, setup);
  const ItemList all = dataset.in_split(Split::kTrain);
  std::vector<int> labels;
  for (const auto* item : all) labels.push_back(item->class_id);
  const auto chosen = select_label_fraction(labels, dataset.class_count(), label_fraction,
                                            derive_seed(setup.seed, "label_fraction"));
  ItemList subset;
  for (const auto i : chosen) subset.push_back(all[i]);
  return train_loop(PretextKind::kSupervised, dataset, setup, subset);
}

double evaluate_pretext_accuracy(PretextModel& model, std::span<const LabeledImage* const> images,
                                 const AugmentPolicy& policy, std::uint64_t seed, int batch_size) {
  if (images.empty()) throw InvalidArgument("evaluate_pretext_accuracy: no images");
  const auto kind = model->kind();
  if (!has_pretext_accuracy(kind)) {
    throw InvalidArgument(std::string("pretext '") + std::string(to_string(kind)) + "' has no pretext accuracy");
  }
  return evaluating(model, [&] {
    std::int64_t correct = 0;
    std::int64_t total = 0;
    std::vector<Permutation> perms;
    if (kind == PretextKind::kJigsaw) perms = stored_permutations(model);
    for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(batch_size)) {
      const auto chunk = images.subspan(start, std::min<std::size_t>(batch_size, images.size() - start));
      const auto base = eval_images(chunk, policy);
      if (kind == PretextKind::kRotation) {
        for (int r = 0; r < kRotationClasses; ++r) {
          std::vector<Image> rotated;
          for (const auto& img : base) rotated.push_back(apply_rotation(img, r));
          const auto targets = torch::full({static_cast<std::int64_t>(rotated.size())}, r, torch::kInt64);
          correct += count_correct(model->classify(to_tensor(rotated)), targets);
          total += static_cast<std::int64_t>(rotated.size());
        }
      } else {
        std::vector<std::array<Image, kJigsawPatches>> stacks;
        std::vector<std::int64_t> targets;
        for (std::size_t k = 0; k < chunk.size(); ++k) {
          Rng rng(derive_seed(seed, static_cast<std::uint64_t>(chunk[k]->image_id)));
          const auto idx = rng.uniform_index(perms.size());
          stacks.push_back(permute_patches(extract_grid_patches(base[k], JitterMode::kEval, 0), perms[idx]));
          targets.push_back(static_cast<std::int64_t>(idx));
        }
        correct += count_correct(model->jigsaw_logits(jigsaw_stack(stacks)), labels_tensor(targets));
        total += static_cast<std::int64_t>(chunk.size());
      }
    }
    return static_cast<double>(correct) / static_cast<double>(total);
  });
}

double evaluate_classifier_accuracy(PretextModel& model, std::span<const LabeledImage* const> images,
                                    const AugmentPolicy& policy, int batch_size) {
  if (images.empty()) throw InvalidArgument("evaluate_classifier_accuracy: no images");
  return evaluating(model, [&] {
    std::int64_t correct = 0;
    for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(batch_size)) {
      const auto chunk = images.subspan(start, std::min<std::size_t>(batch_size, images.size() - start));
      std::vector<std::int64_t> labels;
      for (const auto* item : chunk) labels.push_back(item->class_id);
      correct += count_correct(model->classify(to_tensor(eval_images(chunk, policy))), labels_tensor(labels));
    }
    return static_cast<double>(correct) / static_cast<double>(images.size());
  });
}

double evaluate_reconstruction_loss(PretextModel& model, std::span<const LabeledImage* const> images,
                                    const AugmentPolicy& policy, int batch_size) {
  if (images.empty()) throw InvalidArgument("evaluate_reconstruction_loss: no images");
  return evaluating(model, [&] {
    double sum = 0.0;
    for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(batch_size)) {
      const auto chunk = images.subspan(start, std::min<std::size_t>(batch_size, images.size() - start));
      const auto x = to_tensor(eval_images(chunk, policy));
      sum += reconstruction_loss(x, model->reconstruct(x)).item<double>() * static_cast<double>(chunk.size());
    }
    return sum / static_cast<double>(images.size());
  });
}

torch::Tensor instance_embeddings(PretextModel& model, std::span<const LabeledImage* const> images,
                                  const AugmentPolicy& policy, int batch_size) {
  if (images.empty()) throw InvalidArgument("instance_embeddings: no images");
  return evaluating(model, [&] {
    std::vector<torch::Tensor> parts;
    for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(batch_size)) {
      const auto chunk = images.subspan(start, std::min<std::size_t>(batch_size, images.size() - start));
      parts.push_back(model->instance_embedding(to_tensor(eval_images(chunk, policy))));
    }
    return torch::cat(parts).contiguous();
  });
}

}  // namespace sslab
