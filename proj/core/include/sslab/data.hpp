#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sslab/image.hpp"

namespace sslab {

enum class Split : std::uint8_t { kTrain, kVal, kTest };

std::string_view to_string(Split split);
Split split_from_string(std::string_view text);

/// A 3-channel image with pixels in [-1, 1] and its class label.
struct LabeledImage {
  Image pixels;
  int class_id = 0;
  std::int64_t image_id = 0;
};

struct SplitRatios {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;

  void validate() const;
};

using SplitMap = std::map<std::int64_t, Split>;

/// Immutable labelled image collection.
///
/// The split map is either empty (an unsplit table, as produced by the
/// generators and the loader) or tags every image exactly once.
class DatasetTable {
 public:
  DatasetTable() = default;
  DatasetTable(std::string name, std::vector<LabeledImage> images, int class_count,
               SplitMap split = {}, std::vector<std::string> class_names = {});

  const std::string& name() const { return name_; }
  const std::vector<LabeledImage>& images() const { return images_; }
  int class_count() const { return class_count_; }
  const SplitMap& split() const { return split_; }
  bool has_split() const { return !split_.empty(); }
  const std::vector<std::string>& class_names() const { return class_names_; }

  std::size_t size() const { return images_.size(); }
  Split split_of(std::int64_t image_id) const;

  /// Images carrying `split`, ordered by image_id.
  std::vector<const LabeledImage*> in_split(Split split) const;

  std::vector<int> labels() const;

  DatasetTable with_split(SplitMap split) const;
  DatasetTable renamed(std::string name) const;

 private:
  void validate() const;

  std::string name_;
  std::vector<LabeledImage> images_;
  int class_count_ = 0;
  SplitMap split_;
  std::vector<std::string> class_names_;
};

/// Per-class split tags aligned with `labels`.
///
/// Each class of size n gets floor(n * train) TRAIN, floor(n * val) VAL and
/// the remainder TEST; which members land where is a seeded shuffle.
std::vector<Split> stratified_split(std::span<const int> labels, const SplitRatios& ratios,
                                    std::uint64_t seed);

/// Applies stratified_split to a table, keyed by image_id.
DatasetTable assign_stratified_split(const DatasetTable& table, const SplitRatios& ratios,
                                     std::uint64_t seed);

struct HalvedDataset {
  // TRAIN and VAL images of the kept classes, labels re-indexed densely.
  DatasetTable reduced;
  // Every TEST image of every class with its original label.
  DatasetTable full_test;
  // Original ids of the kept classes; reduced label i was kept_classes[i].
  std::vector<int> kept_classes;
};

/// Keeps a seeded choice of ceil(C/2) classes for the pretext
/// generalization experiment.
HalvedDataset halve_classes(const DatasetTable& table, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic generators

enum class SyntheticKind { kOrientedShapes, kGlyphs, kTextures };

std::string_view to_string(SyntheticKind kind);
SyntheticKind synthetic_kind_from_string(std::string_view text);

DatasetTable make_synthetic_dataset(SyntheticKind kind, int n_per_class, int class_count,
                                    int size, std::uint64_t seed);

/// One oriented-shape image: class template `shape_id` drawn upright and
/// then turned by `quarter_turns` x 90 degrees counter-clockwise.
Image render_oriented_shape(int shape_id, int quarter_turns, int size, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Directory format: root/<class_name>/<image files>, plus an optional
// dataset.json sidecar written by export_directory_dataset.

struct DirectoryLoad {
  DatasetTable table;
  std::size_t skipped = 0;  // non-image files and nested directories
};

DirectoryLoad load_directory_dataset(const std::filesystem::path& root, int side);

/// Writes PNG files named <image_id>.png under one folder per class plus the
/// dataset.json sidecar (name, class_count, class names, split map).
void export_directory_dataset(const DatasetTable& table, const std::filesystem::path& root);

inline constexpr std::string_view kDatasetSidecar = "dataset.json";

}  // namespace sslab
