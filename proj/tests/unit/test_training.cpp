#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <torch/torch.h>

#include "sslab/data.hpp"
#include "sslab/error.hpp"
#include "sslab/training.hpp"
#include "test_util.hpp"
#include "doctest.h"

using namespace sslab;

namespace {

// Two oriented shapes for TRAIN, one each for VAL and TEST.
DatasetTable tiny_shapes(int side) {
  std::vector<LabeledImage> images;
  SplitMap split;
  const std::array<Split, 4> tags{Split::kTrain, Split::kTrain, Split::kVal, Split::kTest};
  for (int i = 0; i < 4; ++i) {
    images.push_back({render_oriented_shape(i % 2, 0, side, 100 + static_cast<std::uint64_t>(i)), i % 2, i});
    split[i] = tags[static_cast<std::size_t>(i)];
  }
  return DatasetTable("tiny", std::move(images), 2, split);
}

// `train_count` TRAIN oriented shapes over two classes plus two VAL and two TEST.
DatasetTable small_shapes(int train_count, int side) {
  std::vector<LabeledImage> images;
  SplitMap split;
  const int total = train_count + 4;
  for (int i = 0; i < total; ++i) {
    images.push_back({render_oriented_shape(i % 2, 0, side, 100 + static_cast<std::uint64_t>(i)), i % 2, i});
    split[i] = i < train_count ? Split::kTrain : (i < train_count + 2 ? Split::kVal : Split::kTest);
  }
  return DatasetTable("small", std::move(images), 2, split);
}

EpochRecord accuracy_record(double acc) {
  EpochRecord r;
  r.train_loss = 1.0;
  r.train_accuracy = acc;
  return r;
}

}  // namespace

TEST_CASE("lr_at: step decay at the configured epochs") {
  OptimConfig cfg;
  CHECK(lr_at(0, cfg) == doctest::Approx(0.1));
  CHECK(lr_at(79, cfg) == doctest::Approx(0.1));
  CHECK(lr_at(80, cfg) == doctest::Approx(0.01));
  CHECK(lr_at(99, cfg) == doctest::Approx(0.01));
  CHECK(lr_at(100, cfg) == doctest::Approx(0.001));
  CHECK(lr_at(119, cfg) == doctest::Approx(0.001));
  CHECK_THROWS_AS(lr_at(120, cfg), InvalidArgument);
  CHECK_THROWS_AS(lr_at(-1, cfg), InvalidArgument);
}

TEST_CASE("lr_at is non-increasing and stays positive") {
  const auto cfg = OptimConfig::desk_preset();
  for (int e = 1; e < cfg.epochs; ++e) {
    CHECK(lr_at(e, cfg) <= lr_at(e - 1, cfg));
    CHECK(lr_at(e, cfg) > 0.0);
  }
}

TEST_CASE("OptimConfig validation") {
  OptimConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.decay_epochs = {100, 80};
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = OptimConfig{};
  cfg.decay_epochs = {80, 120};
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = OptimConfig{};
  cfg.weight_decay = 1e-4;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = OptimConfig{};
  cfg.momentum = 1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("presets keep the long schedule's proportions") {
  const auto desk = OptimConfig::desk_preset();
  CHECK(desk.epochs == 24);
  CHECK(desk.decay_epochs == std::vector<int>{16, 20});
  const auto probe = OptimConfig::probe_preset();
  CHECK(probe.epochs == 30);
  CHECK(probe.decay_epochs == std::vector<int>{20, 25});
  CHECK_NOTHROW(desk.validate());
  CHECK_NOTHROW(probe.validate());
}

TEST_CASE("SGD step matches the momentum recurrence on a quadratic") {
  // f(w) = 0.5 * a * (w - b)^2; v <- mu v + g; w <- w - lr v
  const double a = 3.0;
  const double b = -1.5;
  OptimConfig cfg;
  cfg.base_lr = 0.05;
  auto w = torch::full({1}, 2.0, torch::kFloat64).set_requires_grad(true);
  torch::optim::SGD opt({w}, sgd_options(cfg));
  double w_ref = 2.0;
  double v_ref = 0.0;
  for (int step = 0; step < 25; ++step) {
    const double lr = step < 15 ? 0.05 : 0.005;
    set_learning_rate(opt, lr);
    opt.zero_grad();
    const auto loss = 0.5 * a * (w - b).pow(2).sum();
    loss.backward();
    opt.step();
    const double g = a * (w_ref - b);
    v_ref = 0.9 * v_ref + g;
    w_ref -= lr * v_ref;
    CHECK(std::abs(w.item<double>() - w_ref) < 1e-7);
  }
}

TEST_CASE("earlier stop halts Rotation at the first epoch reaching 98%") {
  OptimConfig cfg;
  cfg.epochs = 20;
  cfg.decay_epochs = {10};
  const std::vector<double> accs{0.2, 0.4, 0.6, 0.8, 0.9, 0.95, 0.97, 0.985, 0.99, 1.0};
  int calls = 0;
  const auto curve = run_schedule(PretextKind::kRotation, cfg, EarlierStopRule{}, [&](int epoch, double) {
    ++calls;
    return accuracy_record(accs[static_cast<std::size_t>(std::min(epoch, 9))]);
  });
  CHECK(curve.halted_early);
  CHECK(curve.epochs.size() == 8);
  CHECK(curve.epochs.back().epoch == 7);
  CHECK(calls == 8);
}

TEST_CASE("earlier stop applies only to Rotation and Jigsaw") {
  const EarlierStopRule rule;
  CHECK(rule.applies_to(PretextKind::kRotation));
  CHECK(rule.applies_to(PretextKind::kJigsaw));
  for (const auto k : {PretextKind::kInstanceDiscrimination, PretextKind::kAutoencoder, PretextKind::kSupervised,
                       PretextKind::kRandomInit}) {
    CHECK_FALSE(rule.applies_to(k));
    CHECK_FALSE(rule.should_halt(k, 1.0));
  }
  CHECK_FALSE(rule.should_halt(PretextKind::kJigsaw, 0.979));
  CHECK(rule.should_halt(PretextKind::kJigsaw, 0.98));
  CHECK_FALSE(rule.should_halt(PretextKind::kJigsaw, std::nullopt));
  EarlierStopRule off;
  off.enabled = false;
  CHECK_FALSE(off.should_halt(PretextKind::kRotation, 1.0));
}

TEST_CASE("instance discrimination runs every scheduled epoch") {
  OptimConfig cfg;
  cfg.epochs = 12;
  cfg.decay_epochs = {8};
  const auto curve = run_schedule(PretextKind::kInstanceDiscrimination, cfg, EarlierStopRule{}, [](int, double) {
    return accuracy_record(1.0);
  });
  CHECK_FALSE(curve.halted_early);
  CHECK(curve.epochs.size() == 12);
  CHECK(curve.epochs[8].lr == doctest::Approx(0.01));
}

TEST_CASE("run_schedule aborts on a non-finite loss naming the epoch") {
  OptimConfig cfg;
  cfg.epochs = 5;
  cfg.decay_epochs = {};
  try {
    run_schedule(PretextKind::kAutoencoder, cfg, EarlierStopRule{}, [](int epoch, double) {
      EpochRecord r;
      r.train_loss = epoch == 2 ? std::numeric_limits<double>::quiet_NaN() : 1.0;
      return r;
    });
    FAIL("expected RuntimeFailure");
  } catch (const RuntimeFailure& e) {
    CHECK(std::string(e.what()).find("epoch 2") != std::string::npos);
  }
}

TEST_CASE("augment: EVAL is a deterministic resize") {
  const auto img = test_util::random_image(3, 40, 40, 1);
  const AugmentPolicy policy;
  const auto a = augment(img, policy, AugmentMode::kEval, 1);
  const auto b = augment(img, policy, AugmentMode::kEval, 999);
  CHECK(a == b);
  CHECK(a == resize(img, 64, 64));
}

TEST_CASE("augment: TRAIN output shape and seed determinism") {
  const auto img = test_util::random_image(3, 50, 50, 2);
  const AugmentPolicy policy;
  std::set<std::vector<float>> distinct;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto out = augment(img, policy, AugmentMode::kTrain, s);
    CHECK(out.height == 64);
    CHECK(out.width == 64);
    CHECK(out == augment(img, policy, AugmentMode::kTrain, s));
    distinct.insert(out.data);
  }
  CHECK(distinct.size() > 1);
}

TEST_CASE("augment: flip disabled never mirrors; enabled mirrors about half the time") {
  // Asymmetric input whose crop is fixed so only the flip can vary.
  auto img = Image(3, 64, 64, -1.0f);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 16; ++x) img.at(0, y, x) = 1.0f;
  }
  AugmentPolicy policy;
  policy.random_crop = false;
  policy.horizontal_flip = false;
  for (std::uint64_t s = 0; s < 50; ++s) CHECK(augment(img, policy, AugmentMode::kTrain, s) == img);
  policy.horizontal_flip = true;
  int mirrored = 0;
  for (std::uint64_t s = 0; s < 400; ++s) {
    const auto out = augment(img, policy, AugmentMode::kTrain, s);
    if (out == flip_horizontal(img)) {
      ++mirrored;
    } else {
      CHECK(out == img);
    }
  }
  CHECK(mirrored > 150);
  CHECK(mirrored < 250);
}

TEST_CASE("flip_horizontal is an involution") {
  const auto img = test_util::random_image(3, 9, 13, 3);
  CHECK(flip_horizontal(flip_horizontal(img)) == img);
  CHECK_FALSE(flip_horizontal(img) == img);
}

TEST_CASE("select_label_fraction: stratified counts and determinism") {
  std::vector<int> labels;
  for (int c = 0; c < 3; ++c) {
    for (int k = 0; k < 50; ++k) labels.push_back(c);
  }
  const auto ten = select_label_fraction(labels, 3, 0.1, 7);
  std::map<int, int> per_class;
  for (const auto i : ten) ++per_class[labels[i]];
  for (int c = 0; c < 3; ++c) CHECK(per_class[c] == 5);
  CHECK(std::is_sorted(ten.begin(), ten.end()));
  CHECK(ten == select_label_fraction(labels, 3, 0.1, 7));
  CHECK(ten != select_label_fraction(labels, 3, 0.1, 8));
  CHECK(select_label_fraction(labels, 3, 1.0, 7).size() == 150);
  const auto tiny = select_label_fraction(labels, 3, 0.001, 7);
  CHECK(tiny.size() == 3);
}

TEST_CASE("select_label_fraction rejects an empty class and bad fractions") {
  const std::vector<int> labels{0, 0, 2, 2};
  try {
    select_label_fraction(labels, 3, 0.5, 1);
    FAIL("expected InvalidArgument");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("class 1") != std::string::npos);
  }
  CHECK_THROWS_AS(select_label_fraction(labels, 3, 0.0, 1), InvalidArgument);
  CHECK_THROWS_AS(select_label_fraction(labels, 3, 1.5, 1), InvalidArgument);
}

TEST_CASE("curve CSV has the documented header and one row per epoch") {
  TrainingCurve curve;
  EpochRecord a;
  a.epoch = 0;
  a.lr = 0.1;
  a.train_loss = 2.0;
  a.train_accuracy = 0.5;
  a.val_metric = 0.25;
  a.wallclock_s = 1.5;
  EpochRecord b = a;
  b.epoch = 1;
  b.train_accuracy.reset();
  curve.epochs = {a, b};
  const auto csv = curve_to_csv(curve);
  CHECK(csv == "epoch,lr,train_metric,val_metric,wallclock_s\n0,0.1,0.5,0.25,1.500\n1,0.1,2,0.25,1.500\n");
  const auto path = test_util::fresh_dir("curve") / "curve.csv";
  save_curve_csv(curve, path);
  std::ifstream in(path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  CHECK(buffer.str() == csv);
}

TEST_CASE("rotation training overfits a handful of images") {
  const auto dataset = small_shapes(8, 32);
  TrainingSetup setup;
  setup.backbone.width_multiplier = 0.25;
  setup.backbone.input_side = 32;
  setup.augment.resize_to = 32;
  setup.augment.random_crop = false;
  setup.augment.horizontal_flip = false;
  setup.optim.epochs = 200;
  setup.optim.decay_epochs = {150};
  setup.optim.base_lr = 0.01;
  setup.optim.batch_size = 8;
  setup.early_stop.enabled = false;
  setup.seed = 11;
  const auto result = train_pretext(PretextKind::kRotation, dataset, setup);
  auto model = result.model;
  CHECK(result.train_size == 8);
  CHECK(result.curve.epochs.size() == 200);
  const auto train = dataset.in_split(Split::kTrain);
  CHECK(evaluate_pretext_accuracy(model, train, setup.augment, 0) == doctest::Approx(1.0));
  CHECK_FALSE(model->is_training());
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto dataset = tiny_shapes(32);
  TrainingSetup setup;
  setup.backbone.width_multiplier = 0.25;
  setup.backbone.input_side = 32;
  setup.augment.resize_to = 32;
  setup.optim.epochs = 3;
  setup.optim.decay_epochs = {2};
  setup.optim.batch_size = 2;
  setup.seed = 5;
  const auto a = train_pretext(PretextKind::kAutoencoder, dataset, setup);
  const auto b = train_pretext(PretextKind::kAutoencoder, dataset, setup);
  REQUIRE(a.curve.epochs.size() == b.curve.epochs.size());
  for (std::size_t i = 0; i < a.curve.epochs.size(); ++i) {
    CHECK(a.curve.epochs[i].train_loss == b.curve.epochs[i].train_loss);
    CHECK(a.curve.epochs[i].val_metric == b.curve.epochs[i].val_metric);
  }
  const auto pa = a.model->named_parameters();
  const auto pb = b.model->named_parameters();
  for (const auto& item : pa) CHECK(torch::equal(item.value(), pb[item.key()]));
}

TEST_CASE("training setup is validated before any work") {
  const auto dataset = tiny_shapes(32);
  TrainingSetup setup;
  setup.backbone.input_side = 32;
  setup.augment.resize_to = 64;
  CHECK_THROWS_AS(train_pretext(PretextKind::kRotation, dataset, setup), InvalidArgument);
  setup.augment.resize_to = 32;
  CHECK_THROWS_AS(train_pretext(PretextKind::kRotation, dataset.with_split({}), setup), InvalidArgument);
}

TEST_CASE("random init returns the seeded initialization without training") {
  const auto dataset = tiny_shapes(32);
  TrainingSetup setup;
  setup.backbone.width_multiplier = 0.25;
  setup.backbone.input_side = 32;
  setup.augment.resize_to = 32;
  setup.seed = 3;
  const auto a = train_pretext(PretextKind::kRandomInit, dataset, setup);
  const auto b = train_pretext(PretextKind::kRandomInit, dataset, setup);
  CHECK(a.curve.epochs.empty());
  const auto pb = b.model->named_parameters();
  for (const auto& item : a.model->named_parameters()) CHECK(torch::equal(item.value(), pb[item.key()]));
}
