#include "sslab/data.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_set>

#include "sslab/error.hpp"
#include "sslab/rng.hpp"

namespace sslab {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "unknown";
}

Split split_from_string(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  throw InvalidArgument("unknown split '" + std::string(text) + "'");
}

void SplitRatios::validate() const {
  for (const double f : {train, val, test}) {
    if (!(f > 0.0 && f < 1.0)) {
      throw InvalidArgument("split ratios must each lie in (0, 1)");
    }
  }
  if (std::abs(train + val + test - 1.0) > 1e-9) {
    throw InvalidArgument("split ratios must sum to 1");
  }
}

DatasetTable::DatasetTable(std::string name, std::vector<LabeledImage> images, int class_count,
                           SplitMap split, std::vector<std::string> class_names)
    : name_(std::move(name)),
      images_(std::move(images)),
      class_count_(class_count),
      split_(std::move(split)),
      class_names_(std::move(class_names)) {
  validate();
}

void DatasetTable::validate() const {
  if (class_count_ <= 0) throw InvalidArgument("dataset '" + name_ + "': class_count must be positive");
  if (!class_names_.empty() && static_cast<int>(class_names_.size()) != class_count_) {
    throw InvalidArgument("dataset '" + name_ + "': class name count differs from class_count");
  }
  std::unordered_set<std::int64_t> ids;
  for (const auto& item : images_) {
    if (item.class_id < 0 || item.class_id >= class_count_) {
      throw InvalidArgument("dataset '" + name_ + "': class_id " + std::to_string(item.class_id) +
                            " out of range");
    }
    if (item.image_id < 0) throw InvalidArgument("dataset '" + name_ + "': negative image_id");
    if (!ids.insert(item.image_id).second) {
      throw InvalidArgument("dataset '" + name_ + "': duplicate image_id " +
                            std::to_string(item.image_id));
    }
    if (item.pixels.channels != 3) {
      throw InvalidArgument("dataset '" + name_ + "': image " + std::to_string(item.image_id) +
                            " does not have 3 channels");
    }
    if (!in_unit_range(item.pixels)) {
      throw InvalidArgument("dataset '" + name_ + "': image " + std::to_string(item.image_id) +
                            " has pixels outside [-1, 1]");
    }
  }
  if (!split_.empty()) {
    if (split_.size() != images_.size()) {
      throw InvalidArgument("dataset '" + name_ + "': split map does not cover every image");
    }
    for (const auto& [id, tag] : split_) {
      if (!ids.contains(id)) {
        throw InvalidArgument("dataset '" + name_ + "': split map names unknown image " +
                              std::to_string(id));
      }
    }
  }
}

Split DatasetTable::split_of(std::int64_t image_id) const {
  const auto it = split_.find(image_id);
  if (it == split_.end()) {
    throw InvalidArgument("dataset '" + name_ + "': image " + std::to_string(image_id) +
                          " has no split tag");
  }
  return it->second;
}

std::vector<const LabeledImage*> DatasetTable::in_split(Split split) const {
  std::vector<const LabeledImage*> out;
  for (const auto& item : images_) {
    if (split_of(item.image_id) == split) out.push_back(&item);
  }
  std::sort(out.begin(), out.end(),
            [](const LabeledImage* a, const LabeledImage* b) { return a->image_id < b->image_id; });
  return out;
}

std::vector<int> DatasetTable::labels() const {
  std::vector<int> out;
  out.reserve(images_.size());
  for (const auto& item : images_) out.push_back(item.class_id);
  return out;
}

DatasetTable DatasetTable::with_split(SplitMap split) const {
  return DatasetTable(name_, images_, class_count_, std::move(split), class_names_);
}

DatasetTable DatasetTable::renamed(std::string name) const {
  return DatasetTable(std::move(name), images_, class_count_, split_, class_names_);
}

std::vector<Split> stratified_split(std::span<const int> labels, const SplitRatios& ratios,
                                    std::uint64_t seed) {
  ratios.validate();
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) throw InvalidArgument("stratified_split: negative class id");
    members[labels[i]].push_back(i);
  }
  for (const auto& [cls, idx] : members) {
    if (idx.size() < 3) {
      throw InvalidArgument("stratified_split: class " + std::to_string(cls) + " has " +
                            std::to_string(idx.size()) + " member(s); at least 3 are required");
    }
  }

  std::vector<Split> out(labels.size(), Split::kTest);
  for (auto& [cls, idx] : members) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(cls)));
    rng.shuffle(std::span<std::size_t>(idx));
    const auto n = static_cast<double>(idx.size());
    // The epsilon absorbs representation error in products such as 10 * 0.6.
    const auto n_train = static_cast<std::size_t>(std::floor(n * ratios.train + 1e-9));
    const auto n_val = static_cast<std::size_t>(std::floor(n * ratios.val + 1e-9));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      out[idx[k]] = k < n_train ? Split::kTrain : (k < n_train + n_val ? Split::kVal : Split::kTest);
    }
  }
  return out;
}

DatasetTable assign_stratified_split(const DatasetTable& table, const SplitRatios& ratios,
                                     std::uint64_t seed) {
  const auto labels = table.labels();
  const auto tags = stratified_split(labels, ratios, seed);
  SplitMap split;
  for (std::size_t i = 0; i < tags.size(); ++i) split[table.images()[i].image_id] = tags[i];
  return table.with_split(std::move(split));
}

HalvedDataset halve_classes(const DatasetTable& table, std::uint64_t seed) {
  const int classes = table.class_count();
  if (classes < 2) throw InvalidArgument("halve_classes: need at least 2 classes");
  if (!table.has_split()) throw InvalidArgument("halve_classes: dataset has no split");

  std::vector<int> order(classes);
  for (int c = 0; c < classes; ++c) order[c] = c;
  Rng rng(seed);
  rng.shuffle(std::span<int>(order));
  const int keep = (classes + 1) / 2;
  std::vector<int> kept(order.begin(), order.begin() + keep);
  std::sort(kept.begin(), kept.end());

  std::map<int, int> remap;
  for (int i = 0; i < keep; ++i) remap[kept[i]] = i;

  std::vector<LabeledImage> reduced_images;
  std::vector<LabeledImage> test_images;
  SplitMap reduced_split;
  SplitMap test_split;
  for (const auto& item : table.images()) {
    const Split tag = table.split_of(item.image_id);
    if (tag == Split::kTest) {
      test_images.push_back(item);
      test_split[item.image_id] = Split::kTest;
      continue;
    }
    const auto it = remap.find(item.class_id);
    if (it == remap.end()) continue;
    LabeledImage copy = item;
    copy.class_id = it->second;
    reduced_images.push_back(std::move(copy));
    reduced_split[item.image_id] = tag;
  }

  std::vector<std::string> reduced_names;
  if (!table.class_names().empty()) {
    for (const int c : kept) reduced_names.push_back(table.class_names()[c]);
  }

  HalvedDataset out;
  out.reduced = DatasetTable(table.name() + "-half", std::move(reduced_images), keep,
                             std::move(reduced_split), std::move(reduced_names));
  out.full_test = DatasetTable(table.name() + "-fulltest", std::move(test_images), classes,
                               std::move(test_split), table.class_names());
  out.kept_classes = std::move(kept);
  return out;
}

}  // namespace sslab
