#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sslab/config.hpp"

namespace sslab {

/// Everything that determines one trained model. The run id is derived from
/// its canonical JSON, so re-serializing a config never changes it.
struct RunSpec {
  DatasetSpec dataset;
  PretextKind pretext = PretextKind::kRotation;
  std::string variant = "full";          // "full", or "half" for the class-halved generalization run
  std::optional<double> label_fraction;  // supervised runs only
  BackboneConfig backbone;
  OptimConfig optim;
  AugmentPolicy augment;
  PretextOptions options;
  EarlierStopRule early_stop;
  std::uint64_t seed = 0;

  nlohmann::json canonical() const;
  std::string id() const;
  /// Seed handed to the training loop.
  std::uint64_t training_seed() const;
  /// The same spec with variant "half".
  RunSpec half() const;
};

void to_json(nlohmann::json& j, const RunSpec& s);
void from_json(const nlohmann::json& j, RunSpec& s);

/// Specs for one experiment seed, from the config.
RunSpec make_run_spec(const ExperimentConfig& config, const DatasetSpec& dataset, PretextKind kind,
                      std::uint64_t seed, std::optional<double> label_fraction = std::nullopt);

struct RunRecord {
  std::string id;
  RunSpec spec;
  std::string status = "running";  // "running" | "complete"
  std::string dataset_name;
  std::size_t train_size = 0;
  int epochs_run = 0;
  bool halted_early = false;
  double wallclock_s = 0.0;
  std::string checkpoint = "model";  // stem inside the run directory
  std::string curve = "curve.csv";
  std::string notes;

  bool complete() const { return status == "complete"; }
};

void to_json(nlohmann::json& j, const RunRecord& r);
void from_json(const nlohmann::json& j, RunRecord& r);

/// Filesystem layout under one output root:
///   runs/<id>/{run.json, model.pt, model.json, curve.csv}
///   features/<id>/<split>_<dim>.{f32,json}
///   diagnostics/<id>/...
///   ledger.csv, report/
class RunRegistry {
 public:
  explicit RunRegistry(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path run_dir(const std::string& id) const;
  std::filesystem::path checkpoint_stem(const RunRecord& record) const;
  std::filesystem::path features_stem(const std::string& id, Split split, int pooled_dim) const;
  std::filesystem::path diagnostics_dir(const std::string& id) const;
  std::filesystem::path ledger_path() const;
  std::filesystem::path report_dir() const;

  std::optional<RunRecord> find(const std::string& id) const;
  /// Throws MissingDependency naming the id when absent or unfinished.
  RunRecord require_complete(const std::string& id) const;
  std::vector<RunRecord> completed() const;

  /// Writes run.json. A completed record is never overwritten.
  void write(const RunRecord& record) const;
  /// Drops an unfinished run directory left by an interrupted process.
  void discard_incomplete(const std::string& id) const;

 private:
  std::filesystem::path root_;
};

}  // namespace sslab
