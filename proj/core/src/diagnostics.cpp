#include "sslab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "sslab/error.hpp"
#include "sslab/rng.hpp"

namespace sslab {

void to_json(nlohmann::json& j, const GeneralizationResult& r) {
  j = nlohmann::json{{"pretext_acc_val_half", r.pretext_acc_val_half},
                     {"pretext_acc_test_full", r.pretext_acc_test_full},
                     {"ratio", r.ratio},
                     {"kept_classes", r.kept_classes}};
}

GeneralizationResult generalization_ratio(double val_half, double test_full) {
  if (!(val_half > 0.0 && val_half <= 1.0)) {
    throw InvalidArgument("generalization ratio needs a half-class validation accuracy in (0, 1]");
  }
  if (!(test_full >= 0.0 && test_full <= 1.0)) throw InvalidArgument("test accuracy must be in [0, 1]");
  GeneralizationResult r;
  r.pretext_acc_val_half = val_half;
  r.pretext_acc_test_full = test_full;
  r.ratio = test_full / val_half;
  return r;
}

GeneralizationResult evaluate_generalization(PretextModel& model, const HalvedDataset& halved,
                                             const AugmentPolicy& policy, std::uint64_t seed) {
  if (!has_pretext_accuracy(model->kind())) {
    throw InvalidArgument("pretext '" + std::string(to_string(model->kind())) + "' has no pretext accuracy");
  }
  const auto val = evaluate_pretext_accuracy(model, halved.reduced.in_split(Split::kVal), policy, seed);
  const auto test = evaluate_pretext_accuracy(model, halved.full_test.in_split(Split::kTest), policy, seed);
  GeneralizationResult r;
  if (val > 0.0) {
    r = generalization_ratio(val, test);
  } else {
    r.pretext_acc_test_full = test;
    r.ratio = std::numeric_limits<double>::quiet_NaN();
  }
  r.kept_classes = halved.kept_classes;
  return r;
}

GeneralizationResult pretext_generalization(PretextKind kind, const DatasetTable& dataset, std::uint64_t seed,
                                            const TrainingSetup& setup) {
  if (!has_pretext_accuracy(kind)) {
    throw InvalidArgument("pretext '" + std::string(to_string(kind)) +
                          "' has no pretext accuracy; use the instance-discrimination loss summary instead");
  }
  const auto halved = halve_classes(dataset, derive_seed(seed, "halve"));
  TrainingSetup half_setup = setup;
  half_setup.seed = seed;
  auto trained = train_pretext(kind, halved.reduced, half_setup);
  return evaluate_generalization(trained.model, halved, setup.augment, derive_seed(seed, "generalization"));
}

double mean_id_loss(const torch::Tensor& features, const MemoryBank& bank) {
  if (features.dim() != 2 || features.size(0) == 0) throw InvalidArgument("mean_id_loss: empty feature set");
  if (features.size(0) != bank.size()) throw InvalidArgument("mean_id_loss: one feature per bank row required");
  torch::NoGradGuard no_grad;
  const auto own = torch::arange(features.size(0), torch::kInt64);
  return nonparam_softmax_loss(features, own, bank).item<double>();
}

double id_pretext_loss_summary(std::span<const LabeledImage* const> items, PretextModel& model,
                               const MemoryBank& bank, const AugmentPolicy& policy) {
  if (items.empty()) throw InvalidArgument("id_pretext_loss_summary: empty split");
  return mean_id_loss(instance_embeddings(model, items, policy), bank);
}

void to_json(nlohmann::json& j, const RandomLabelResult& r) {
  j = nlohmann::json{{"normal_train_acc", r.normal_train_acc},
                     {"shuffled_train_acc", r.shuffled_train_acc},
                     {"gap", r.gap()}};
}

RandomLabelResult random_label_probe(const FeatureMatrix& features, std::span<const int> labels, int class_count,
                                     std::uint64_t seed, const ProbeConfig& config) {
  if (labels.size() != static_cast<std::size_t>(features.rows())) throw InvalidArgument("labels not aligned with features");
  if (labels.empty()) throw InvalidArgument("random_label_probe: no rows");
  const std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() == 1) return {1.0, 1.0};

  std::vector<int> shuffled(labels.begin(), labels.end());
  Rng rng(derive_seed(seed, "shuffle"));
  rng.shuffle(std::span<int>(shuffled));

  const auto fit_seed = derive_seed(seed, "fit");
  RandomLabelResult out;
  out.normal_train_acc = fit_linear_probe(features, labels, class_count, {}, fit_seed, config).accuracy(features, labels);
  out.shuffled_train_acc =
      fit_linear_probe(features, shuffled, class_count, {}, fit_seed, config).accuracy(features, shuffled);
  return out;
}

std::vector<int> default_pca_grid() {
  std::vector<int> grid{1, 2, 3, 4, 5, 10, 15, 20};
  for (int n = 30; n <= 150; n += 10) grid.push_back(n);
  return grid;
}

double ExplainedVarianceCurve::at(int value) const {
  const auto it = std::find(n.begin(), n.end(), value);
  if (it == n.end()) throw InvalidArgument("n = " + std::to_string(value) + " is not on the curve's grid");
  return fractions[static_cast<std::size_t>(it - n.begin())];
}

void to_json(nlohmann::json& j, const ExplainedVarianceCurve& c) {
  j = nlohmann::json{{"n", c.n}, {"fractions", c.fractions}, {"dim", c.dim}, {"split", c.split}};
}

ExplainedVarianceCurve pca_explained_variance(std::span<const double> values, std::int64_t rows, std::int64_t dim,
                                              std::span<const int> grid) {
  if (rows < 2) throw InvalidArgument("PCA needs more than one row");
  if (dim < 1 || values.size() != static_cast<std::size_t>(rows * dim)) {
    throw InvalidArgument("PCA input size does not match rows x dim");
  }
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Matrix x = Eigen::Map<const Matrix>(values.data(), rows, dim);
  x.rowwise() -= x.colwise().mean();

  // Non-zero spectra of X^T X and X X^T coincide; decompose the smaller one.
  const Eigen::MatrixXd gram = rows <= dim ? Eigen::MatrixXd(x * x.transpose()) : Eigen::MatrixXd(x.transpose() * x);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw RuntimeFailure("PCA eigendecomposition failed");
  std::vector<double> eig(solver.eigenvalues().data(), solver.eigenvalues().data() + solver.eigenvalues().size());
  for (auto& e : eig) e = std::max(0.0, e / static_cast<double>(rows - 1));
  std::sort(eig.begin(), eig.end(), std::greater<>());
  const double total = std::accumulate(eig.begin(), eig.end(), 0.0);
  if (!(total > 0.0)) throw InvalidArgument("PCA input has zero total variance");

  std::vector<double> cumulative(eig.size());
  double running = 0.0;
  for (std::size_t i = 0; i < eig.size(); ++i) {
    running += eig[i];
    cumulative[i] = std::min(1.0, running / total);
  }

  std::vector<int> points = grid.empty() ? default_pca_grid() : std::vector<int>(grid.begin(), grid.end());
  ExplainedVarianceCurve curve;
  curve.dim = dim;
  for (const int n : points) {
    if (n < 1) throw InvalidArgument("PCA grid entries must be positive");
    if (n >= dim || (!curve.n.empty() && n <= curve.n.back())) continue;
    curve.n.push_back(n);
  }
  curve.n.push_back(static_cast<int>(dim));
  for (const int n : curve.n) {
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(n), cumulative.size());
    curve.fractions.push_back(cumulative[k - 1]);
  }
  curve.eigenvalues = std::move(eig);
  return curve;
}

ExplainedVarianceCurve pca_explained_variance(const FeatureMatrix& features, std::span<const int> grid) {
  const std::vector<double> values(features.values().begin(), features.values().end());
  auto curve = pca_explained_variance(values, features.rows(), features.dim(), grid);
  curve.split = features.source().split;
  return curve;
}

void to_json(nlohmann::json& j, const FirstComponentResult& r) {
  j = nlohmann::json{{"r", r.correlation.r},     {"r_p", r.correlation.p},  {"n", r.correlation.n},
                     {"t", r.split_test.t},      {"t_df", r.split_test.df}, {"t_p", r.split_test.p},
                     {"below", r.below},         {"above", r.above}};
}

FirstComponentResult first_component_analysis(std::span<const FirstComponentPoint> points, double threshold) {
  if (points.size() < 3) throw InvalidArgument("first_component_analysis needs at least 3 points");
  std::vector<double> fraction;
  std::vector<double> accuracy;
  std::vector<double> below;
  std::vector<double> above;
  for (const auto& p : points) {
    fraction.push_back(p.first_fraction);
    accuracy.push_back(p.normalized_accuracy);
    (p.first_fraction < threshold ? below : above).push_back(p.normalized_accuracy);
  }
  if (below.empty() || above.empty()) {
    throw InvalidArgument("first_component_analysis: no points on one side of fraction(1) = " + std::to_string(threshold));
  }
  FirstComponentResult out;
  out.correlation = pearson_r_p(fraction, accuracy);
  out.split_test = welch_t_test(below, above);
  out.below = below.size();
  out.above = above.size();
  return out;
}

std::vector<Neighbor> nearest_neighbors(const FeatureMatrix& features, std::int64_t query_id, int k) {
  const auto query = features.index_of(query_id);
  if (!query) throw InvalidArgument("query image_id " + std::to_string(query_id) + " not in feature matrix");
  if (k < 1 || k >= features.rows()) {
    throw InvalidArgument("k must be in [1, rows) (k = " + std::to_string(k) + ", rows = " +
                          std::to_string(features.rows()) + ")");
  }
  const auto q = features.row(*query);
  std::vector<Neighbor> all;
  all.reserve(static_cast<std::size_t>(features.rows() - 1));
  for (std::int64_t i = 0; i < features.rows(); ++i) {
    if (i == *query) continue;
    const auto r = features.row(i);
    double d2 = 0.0;
    for (std::size_t c = 0; c < r.size(); ++c) {
      const double diff = static_cast<double>(r[c]) - static_cast<double>(q[c]);
      d2 += diff * diff;
    }
    all.push_back({features.image_ids()[static_cast<std::size_t>(i)], std::sqrt(d2)});
  }
  const auto order = [](const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.image_id < b.image_id;
  };
  std::partial_sort(all.begin(), all.begin() + k, all.end(), order);
  all.resize(static_cast<std::size_t>(k));
  return all;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string table_s3_csv(std::span<const PcaColumn> columns) {
  if (columns.empty()) throw InvalidArgument("table_s3_csv: no curves");
  std::set<int> grid;
  for (const auto& c : columns) grid.insert(c.curve.n.begin(), c.curve.n.end());
  std::ostringstream out;
  out << "n";
  for (const auto& c : columns) out << ',' << c.pretext << '_' << c.curve.dim;
  out << '\n';
  for (const int n : grid) {
    out << n;
    for (const auto& c : columns) {
      out << ',';
      const auto it = std::find(c.curve.n.begin(), c.curve.n.end(), n);
      if (it != c.curve.n.end()) out << fixed(c.curve.fractions[static_cast<std::size_t>(it - c.curve.n.begin())], 2);
    }
    out << '\n';
  }
  return out.str();
}

std::vector<PretextCorrelation> random_label_correlations(std::span<const RandomLabelRow> rows) {
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_pretext;
  for (const auto& r : rows) {
    auto& [normal, shuffled] = by_pretext[r.pretext];
    normal.push_back(r.normal_train_acc);
    shuffled.push_back(r.shuffled_train_acc);
  }
  std::vector<PretextCorrelation> out;
  for (const auto& [pretext, series] : by_pretext) {
    if (series.first.size() < 3) continue;
    out.push_back({pretext, pearson_r_p(series.second, series.first)});
  }
  return out;
}

std::string table2_csv(std::span<const PretextCorrelation> stats) {
  std::ostringstream out;
  out << "pretext,r,p,n\n";
  for (const auto& s : stats) out << s.pretext << ',' << fixed(s.stat.r, 2) << ',' << fixed(s.stat.p, 2) << ',' << s.stat.n << '\n';
  return out.str();
}

std::string fig6_csv(std::span<const GeneralizationRow> rows) {
  std::ostringstream out;
  out << "dataset,pretext,train_size,pretext_metric,normalized_accuracy\n";
  for (const auto& r : rows) {
    out << r.dataset << ',' << r.pretext << ',' << r.train_size << ',' << fixed(r.pretext_metric, 6) << ',';
    if (r.normalized_accuracy) out << fixed(*r.normalized_accuracy, 6);
    out << '\n';
  }
  return out.str();
}

std::string neighbors_csv(std::int64_t query_id, std::span<const Neighbor> neighbors) {
  std::ostringstream out;
  out << "query_id,rank,image_id,distance\n";
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    out << query_id << ',' << i + 1 << ',' << neighbors[i].image_id << ',' << fixed(neighbors[i].distance, 9) << '\n';
  }
  return out.str();
}

}  // namespace sslab
