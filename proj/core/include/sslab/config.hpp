#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sslab/data.hpp"
#include "sslab/evaluation.hpp"
#include "sslab/models.hpp"
#include "sslab/pretexts.hpp"
#include "sslab/training.hpp"

namespace sslab {

/// Either a synthetic generator call or a directory of class folders.
struct DatasetSpec {
  std::string source = "synthetic";  // "synthetic" | "directory"
  SyntheticKind kind = SyntheticKind::kOrientedShapes;
  int n_per_class = 60;
  int class_count = 4;
  int size = 64;
  std::uint64_t seed = 0;  // generator and split seed
  std::string path;        // directory source only
  SplitRatios ratios;

  void validate() const;
};

void to_json(nlohmann::json& j, const DatasetSpec& s);
void from_json(const nlohmann::json& j, DatasetSpec& s);

enum class Diagnostic { kGeneralization, kRandomLabels, kPca, kKnn, kIdLoss };

std::string_view to_string(Diagnostic d);
Diagnostic diagnostic_from_string(std::string_view text);
std::set<Diagnostic> all_diagnostics();

struct ExperimentConfig {
  std::vector<DatasetSpec> datasets;
  std::vector<PretextKind> pretexts{PretextKind::kRotation, PretextKind::kJigsaw,
                                    PretextKind::kInstanceDiscrimination, PretextKind::kAutoencoder,
                                    PretextKind::kRandomInit};
  bool supervised_baseline = true;
  BackboneConfig backbone;
  OptimConfig optim;
  AugmentPolicy augment;
  PretextOptions pretext;
  EarlierStopRule early_stop;
  ProbeConfig probe;
  int pooled_dim = 0;  // 0 selects the globally pooled size (feature channels)
  std::vector<double> label_fractions{1.0, 0.1};
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "sslab_out";
  std::set<Diagnostic> diagnostics = all_diagnostics();
  int knn_k = 10;
  int knn_queries = 3;
  int threads = 1;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  int effective_pooled_dim() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);

/// Strict parse: unknown keys and failed validation raise ConfigError.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Output root precedence: explicit flag, then $SSLAB_OUT, then the config.
std::filesystem::path resolve_output_root(const std::optional<std::string>& flag, const ExperimentConfig* config);

inline constexpr const char* kOutputEnvVar = "SSLAB_OUT";

}  // namespace sslab
