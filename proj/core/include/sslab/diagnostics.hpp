#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>
#include <torch/torch.h>

#include "sslab/data.hpp"
#include "sslab/evaluation.hpp"
#include "sslab/models.hpp"
#include "sslab/pretexts.hpp"
#include "sslab/stats.hpp"
#include "sslab/training.hpp"

namespace sslab {

// ---------------------------------------------------------------------------
// Pretext generalization

struct GeneralizationResult {
  double pretext_acc_val_half = 0.0;
  double pretext_acc_test_full = 0.0;
  double ratio = 0.0;  // test_full / val_half
  std::vector<int> kept_classes;
};

void to_json(nlohmann::json& j, const GeneralizationResult& r);

/// Rejects a zero or out-of-range validation accuracy.
GeneralizationResult generalization_ratio(double val_half, double test_full);

/// Scores a model trained on `halved.reduced`: pretext accuracy on the
/// reduced VAL split and on every TEST image of the full class set.
/// A zero validation accuracy leaves the ratio NaN.
GeneralizationResult evaluate_generalization(PretextModel& model, const HalvedDataset& halved,
                                             const AugmentPolicy& policy, std::uint64_t seed);

/// halve_classes, train on the reduced set, then evaluate_generalization.
/// Only Rotation and Jigsaw have a pretext accuracy.
GeneralizationResult pretext_generalization(PretextKind kind, const DatasetTable& dataset, std::uint64_t seed,
                                            const TrainingSetup& setup);

// ---------------------------------------------------------------------------
// Instance discrimination loss

/// Mean non-parametric softmax loss of features[i] against the bank with
/// own index i. features is [N, d] with N == bank.size().
double mean_id_loss(const torch::Tensor& features, const MemoryBank& bank);

/// Embeds `items` with evaluation transforms and averages the loss against
/// the bank row of the same position.
double id_pretext_loss_summary(std::span<const LabeledImage* const> items, PretextModel& model,
                               const MemoryBank& bank, const AugmentPolicy& policy);

// ---------------------------------------------------------------------------
// Random-label separability

struct RandomLabelResult {
  double normal_train_acc = 0.0;
  double shuffled_train_acc = 0.0;

  double gap() const { return normal_train_acc - shuffled_train_acc; }
};

void to_json(nlohmann::json& j, const RandomLabelResult& r);

/// Training accuracy of one probe on the true labels and one on a seeded
/// uniform shuffle of them. A single-class label set scores 1.0 on both.
RandomLabelResult random_label_probe(const FeatureMatrix& features, std::span<const int> labels, int class_count,
                                     std::uint64_t seed, const ProbeConfig& config = {});

// ---------------------------------------------------------------------------
// Implicit dimensionality

/// 1..5, 10, 15, 20, then every 10 up to 150.
std::vector<int> default_pca_grid();

struct ExplainedVarianceCurve {
  std::vector<int> n;
  std::vector<double> fractions;     // cumulative, aligned with n
  std::vector<double> eigenvalues;   // covariance spectrum, descending
  std::int64_t dim = 0;
  std::string split;

  /// Fraction at a grid point; throws if n is not on the grid.
  double at(int n) const;
};

void to_json(nlohmann::json& j, const ExplainedVarianceCurve& c);

/// PCA of the mean-centred rows without variance scaling. Grid points beyond
/// the feature dim are dropped and the full rank (n = dim) is appended.
ExplainedVarianceCurve pca_explained_variance(std::span<const double> values, std::int64_t rows, std::int64_t dim,
                                              std::span<const int> grid = {});
ExplainedVarianceCurve pca_explained_variance(const FeatureMatrix& features, std::span<const int> grid = {});

struct FirstComponentPoint {
  double first_fraction = 0.0;
  double normalized_accuracy = 0.0;
};

struct FirstComponentResult {
  CorrelationStat correlation;
  TTestResult split_test;  // fraction(1) < 0.5 vs >= 0.5
  std::size_t below = 0;
  std::size_t above = 0;
};

void to_json(nlohmann::json& j, const FirstComponentResult& r);

FirstComponentResult first_component_analysis(std::span<const FirstComponentPoint> points, double threshold = 0.5);

// ---------------------------------------------------------------------------
// Nearest neighbours

struct Neighbor {
  std::int64_t image_id = 0;
  double distance = 0.0;

  bool operator==(const Neighbor&) const = default;
};

/// Euclidean k-NN of one row, the query itself excluded; ascending distance
/// with ties broken by image_id.
std::vector<Neighbor> nearest_neighbors(const FeatureMatrix& features, std::int64_t query_id, int k);

// ---------------------------------------------------------------------------
// Tables

struct PcaColumn {
  std::string pretext;
  ExplainedVarianceCurve curve;
};

/// n column plus one <pretext>_<dim> column per curve, two decimals.
std::string table_s3_csv(std::span<const PcaColumn> columns);

struct RandomLabelRow {
  std::string dataset;
  std::string pretext;
  double normal_train_acc = 0.0;
  double shuffled_train_acc = 0.0;
};

struct PretextCorrelation {
  std::string pretext;
  CorrelationStat stat;
};

/// Per pretext, Pearson (r, p) of shuffled vs normal training accuracy across
/// datasets. Pretexts with fewer than three datasets are omitted.
std::vector<PretextCorrelation> random_label_correlations(std::span<const RandomLabelRow> rows);

/// pretext,r,p,n with two decimals for r and p.
std::string table2_csv(std::span<const PretextCorrelation> stats);

struct GeneralizationRow {
  std::string dataset;
  std::string pretext;
  std::size_t train_size = 0;
  double pretext_metric = 0.0;  // generalization ratio, or ID loss
  std::optional<double> normalized_accuracy;
};

std::string fig6_csv(std::span<const GeneralizationRow> rows);

std::string neighbors_csv(std::int64_t query_id, std::span<const Neighbor> neighbors);

}  // namespace sslab
