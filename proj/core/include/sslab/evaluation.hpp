#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>
#include <torch/torch.h>

#include "sslab/data.hpp"
#include "sslab/models.hpp"
#include "sslab/training.hpp"

namespace sslab {

struct FeatureSource {
  std::string pretext;
  std::string dataset;
  std::string split;
  std::string checkpoint;
  std::string mode = "pooled";  // or "unpooled" for flattened pre-pool maps

  bool operator==(const FeatureSource&) const = default;
};

void to_json(nlohmann::json& j, const FeatureSource& s);
void from_json(const nlohmann::json& j, FeatureSource& s);

/// Frozen features, one row per image, rows ordered by image_id. Immutable.
///
/// On disk: <stem>.f32 holds the row-major little-endian float32 payload and
/// <stem>.json the sidecar (dim, count, image_ids, source, checksum).
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::int64_t dim, std::vector<std::int64_t> image_ids, std::vector<float> values,
                FeatureSource source);

  std::int64_t rows() const { return static_cast<std::int64_t>(image_ids_.size()); }
  std::int64_t dim() const { return dim_; }
  const std::vector<std::int64_t>& image_ids() const { return image_ids_; }
  const std::vector<float>& values() const { return values_; }
  const FeatureSource& source() const { return source_; }
  /// SHA-256 of the float32 payload.
  const std::string& checksum() const { return checksum_; }

  std::span<const float> row(std::int64_t index) const;
  std::optional<std::int64_t> index_of(std::int64_t image_id) const;

  /// Copy as a [rows, dim] float32 tensor.
  torch::Tensor tensor() const;

  void save(const std::filesystem::path& stem) const;
  /// Verifies the payload against the sidecar checksum.
  static FeatureMatrix load(const std::filesystem::path& stem);

 private:
  std::int64_t dim_ = 0;
  std::vector<std::int64_t> image_ids_;
  std::vector<float> values_;
  FeatureSource source_;
  std::string checksum_;
};

/// Pooled features of every image in `split`, computed with evaluation
/// transforms and the encoder in evaluation mode. `pooled_dim` must map to a
/// supported pooling grid; the unpooled size selects flattened maps.
FeatureMatrix extract_feature_matrix(Encoder& encoder, const DatasetTable& dataset, Split split, int pooled_dim,
                                     FeatureSource source = {}, int batch_size = 128);

/// Labels aligned with the matrix rows.
std::vector<int> labels_for(const FeatureMatrix& features, const DatasetTable& dataset);

struct ProbeConfig {
  OptimConfig optim = OptimConfig::probe_preset();
  bool standardize = false;  // per-dimension z-scoring fitted on the probe's training rows

  void validate() const;
};

void to_json(nlohmann::json& j, const ProbeConfig& c);
void from_json(const nlohmann::json& j, ProbeConfig& c);

/// Multinomial logistic regression on fixed features.
struct LinearProbe {
  torch::Tensor weight;  // [classes, dim]
  torch::Tensor bias;    // [classes]
  torch::Tensor mean;    // [dim], defined when standardized
  torch::Tensor scale;   // [dim], defined when standardized

  std::vector<int> predict(const FeatureMatrix& features) const;
  double accuracy(const FeatureMatrix& features, std::span<const int> labels) const;
};

/// Trains on the rows listed in `rows` (all rows when empty) with minibatch
/// momentum SGD under `config.optim`. Rejects fewer than two distinct labels.
LinearProbe fit_linear_probe(const FeatureMatrix& features, std::span<const int> labels, int class_count,
                             std::span<const std::size_t> rows, std::uint64_t seed, const ProbeConfig& config = {});

struct ProbeResult {
  std::string pretext;
  double label_fraction = 1.0;
  int pooled_dim = 0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  std::size_t train_count = 0;
  bool standardized = false;
};

void to_json(nlohmann::json& j, const ProbeResult& r);

struct ProbeSplit {
  const FeatureMatrix& features;
  std::span<const int> labels;
};

/// Fits on a stratified label_fraction of `train` and scores all three splits.
/// train_acc is measured on the rows actually used for fitting.
ProbeResult train_linear_probe(const ProbeSplit& train, const ProbeSplit& val, const ProbeSplit& test,
                               int class_count, double label_fraction, std::uint64_t seed,
                               const ProbeConfig& config = {});

/// pretext_acc / supervised_acc; supervised_acc must be positive.
double normalized_accuracy(double pretext_acc, double supervised_acc);

}  // namespace sslab
